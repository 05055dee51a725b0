"""Bound propagation over ReLU networks under a partial activation assignment.

Two abstract domains: intervals (box arithmetic with W+ / W-) and polytopes
(symbolic linear bounds back-substituted to the input box).
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from network import Network, NeuronId

logger = logging.getLogger(__name__)

# tolerance when deciding that clipped bounds crossed
EMPTY_TOL = 1e-9

Status = Dict[NeuronId, bool]


class AbstractionMode(str, Enum):
    INTERVAL = "interval"
    POLYTOPE = "polytope"
    BOTH = "both"


@dataclass
class NeuronBounds:
    """Pre-activation bounds for every layer; the last entry covers the output layer.

    `feasible` is False when some decided neuron cannot take its assigned
    status anywhere in the box.
    """

    lower: List[np.ndarray]
    upper: List[np.ndarray]
    output_lower: np.ndarray
    output_upper: np.ndarray
    feasible: bool = True
    # per-ReLU-layer linear relaxations, set by the polytope engine
    relaxations: Optional[List["_Relaxation"]] = field(default=None, repr=False)

    def pre(self, neuron: NeuronId) -> Tuple[float, float]:
        return float(self.lower[neuron.layer - 1][neuron.index]), float(self.upper[neuron.layer - 1][neuron.index])

    def intersect(self, other: "NeuronBounds") -> "NeuronBounds":
        lower = [np.maximum(a, b) for a, b in zip(self.lower, other.lower)]
        upper = [np.minimum(a, b) for a, b in zip(self.upper, other.upper)]
        out_lower = np.maximum(self.output_lower, other.output_lower)
        out_upper = np.minimum(self.output_upper, other.output_upper)
        crossed = any(np.any(lo > hi + EMPTY_TOL) for lo, hi in zip(lower, upper))
        return NeuronBounds(lower, upper, out_lower, out_upper,
                            self.feasible and other.feasible and not crossed,
                            self.relaxations or other.relaxations)

    def row_upper(self, coeffs) -> float:
        """Upper bound of coeffs . outputs from the output box."""
        coeffs = np.asarray(coeffs, dtype=np.float64)
        return float(np.maximum(coeffs, 0) @ self.output_upper + np.minimum(coeffs, 0) @ self.output_lower)


def status_arrays(net: Network, status: Optional[Status]) -> List[np.ndarray]:
    """Per layer: +1 decided active, -1 decided inactive, 0 undecided."""
    arrays = [np.zeros(layer.size, dtype=np.int8) for layer in net.layers]
    for neuron, active in (status or {}).items():
        arrays[neuron.layer - 1][neuron.index] = 1 if active else -1
    return arrays


def _clip(lo, hi, layer_status):
    """Restrict pre-activation bounds to the region consistent with the status."""
    lo = np.where(layer_status > 0, np.maximum(lo, 0.0), lo)
    hi = np.where(layer_status < 0, np.minimum(hi, 0.0), hi)
    crossed = bool(np.any(lo > hi + EMPTY_TOL))
    return lo, np.maximum(hi, lo), crossed


def interval_bounds(net: Network, status: Optional[Status], lower, upper) -> NeuronBounds:
    lo = np.asarray(lower, dtype=np.float64)
    hi = np.asarray(upper, dtype=np.float64)
    statuses = status_arrays(net, status)
    pre_lower, pre_upper = [], []
    feasible = True

    for layer, layer_status in zip(net.layers, statuses):
        w_pos = np.maximum(layer.weights, 0)
        w_neg = np.minimum(layer.weights, 0)
        z_lo = w_pos @ lo + w_neg @ hi + layer.bias
        z_hi = w_pos @ hi + w_neg @ lo + layer.bias
        if layer.is_relu:
            z_lo, z_hi, crossed = _clip(z_lo, z_hi, layer_status)
            feasible = feasible and not crossed
            lo, hi = np.maximum(z_lo, 0), np.maximum(z_hi, 0)
        else:
            lo, hi = z_lo, z_hi
        pre_lower.append(z_lo)
        pre_upper.append(z_hi)

    return NeuronBounds(pre_lower, pre_upper, lo, hi, feasible)


@dataclass
class _Relaxation:
    """Linear bounds  lower_slope*z <= y <= upper_slope*z + upper_intercept  for one layer."""

    lower_slope: np.ndarray
    upper_slope: np.ndarray
    upper_intercept: np.ndarray


def _relax(lo, hi, layer_status) -> _Relaxation:
    on = (layer_status > 0) | ((layer_status == 0) & (lo >= 0))
    off = (layer_status < 0) | ((layer_status == 0) & (hi <= 0))
    unstable = ~(on | off)

    lower_slope = np.where(on, 1.0, 0.0)
    upper_slope = np.where(on, 1.0, 0.0)
    upper_intercept = np.zeros_like(lo)

    width = np.where(unstable, hi - lo, 1.0)
    chord = np.where(unstable, hi / width, 0.0)
    upper_slope = np.where(unstable, chord, upper_slope)
    upper_intercept = np.where(unstable, -chord * lo, upper_intercept)
    # lower slope 1 when the positive side dominates, else 0
    lower_slope = np.where(unstable & (hi >= -lo), 1.0, lower_slope)
    return _Relaxation(lower_slope, upper_slope, upper_intercept)


def _relax_coeffs(coeffs, const, relaxation: _Relaxation, upper: bool):
    """Replace post-activations by their relaxation; returns coefficients over pre-activations."""
    pos = np.maximum(coeffs, 0)
    neg = np.minimum(coeffs, 0)
    if upper:
        const = const + pos @ relaxation.upper_intercept
        coeffs = pos * relaxation.upper_slope + neg * relaxation.lower_slope
    else:
        const = const + neg @ relaxation.upper_intercept
        coeffs = pos * relaxation.lower_slope + neg * relaxation.upper_slope
    return coeffs, const


def _back_substitute(net: Network, relaxations: List[_Relaxation], layer_index: int,
                     coeffs: np.ndarray, const: np.ndarray, lower, upper, upper_bound: bool):
    """Bound rows `coeffs . z_k + const` (k = layer_index, 1-based) over the input box."""
    for k in range(layer_index, 0, -1):
        layer = net.layers[k - 1]
        const = const + coeffs @ layer.bias
        coeffs = coeffs @ layer.weights
        if k > 1:
            coeffs, const = _relax_coeffs(coeffs, const, relaxations[k - 2], upper_bound)
    pos = np.maximum(coeffs, 0)
    neg = np.minimum(coeffs, 0)
    if upper_bound:
        return const + pos @ upper + neg @ lower
    return const + pos @ lower + neg @ upper


def polytope_bounds(net: Network, status: Optional[Status], lower, upper,
                    seed: Optional[NeuronBounds] = None) -> NeuronBounds:
    """Symbolic bounds; when `seed` is given its concrete bounds are intersected in per layer."""
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    statuses = status_arrays(net, status)
    relaxations: List[_Relaxation] = []
    pre_lower, pre_upper = [], []
    feasible = True

    for k, (layer, layer_status) in enumerate(zip(net.layers, statuses), start=1):
        identity = np.eye(layer.size)
        zeros = np.zeros(layer.size)
        z_lo = _back_substitute(net, relaxations, k, identity, zeros, lower, upper, upper_bound=False)
        z_hi = _back_substitute(net, relaxations, k, identity, zeros, lower, upper, upper_bound=True)
        if seed is not None:
            z_lo = np.maximum(z_lo, seed.lower[k - 1])
            z_hi = np.minimum(z_hi, seed.upper[k - 1])
        if layer.is_relu:
            z_lo, z_hi, crossed = _clip(z_lo, z_hi, layer_status)
            feasible = feasible and not crossed
            relaxations.append(_relax(z_lo, z_hi, layer_status))
        else:
            z_hi = np.maximum(z_hi, z_lo)
        pre_lower.append(z_lo)
        pre_upper.append(z_hi)

    last = net.layers[-1]
    if last.is_relu:
        out_lower, out_upper = np.maximum(pre_lower[-1], 0), np.maximum(pre_upper[-1], 0)
    else:
        out_lower, out_upper = pre_lower[-1], pre_upper[-1]

    return NeuronBounds(pre_lower, pre_upper, out_lower, out_upper, feasible, relaxations)


def row_upper_bound(net: Network, bounds: NeuronBounds, coeffs, lower, upper) -> float:
    """Upper bound of coeffs . outputs.

    With polytope relaxations available the row is back-substituted as a whole
    (tighter than combining per-output bounds); otherwise the output box is used.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    box_bound = bounds.row_upper(coeffs)
    if bounds.relaxations is None:
        return box_bound
    rows = coeffs[None, :]
    const = np.zeros(1)
    if net.layers[-1].is_relu:
        rows, const = _relax_coeffs(rows, const, bounds.relaxations[-1], upper=True)
    value = _back_substitute(net, bounds.relaxations, len(net.layers), rows, const,
                             np.asarray(lower, dtype=np.float64), np.asarray(upper, dtype=np.float64),
                             upper_bound=True)
    return min(float(value[0]), box_bound)


def propagate_bounds(net: Network, status: Optional[Status], lower, upper,
                     mode: AbstractionMode = AbstractionMode.INTERVAL) -> NeuronBounds:
    mode = AbstractionMode(mode)
    if mode is AbstractionMode.INTERVAL:
        return interval_bounds(net, status, lower, upper)
    if mode is AbstractionMode.POLYTOPE:
        return polytope_bounds(net, status, lower, upper)
    interval = interval_bounds(net, status, lower, upper)
    polytope = polytope_bounds(net, status, lower, upper, seed=interval)
    return interval.intersect(polytope)
