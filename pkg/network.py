"""ReLU feedforward networks: representation, exact evaluation and gradients."""

from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from errors import InputError


class Activation(str, Enum):
    RELU = "relu"
    IDENTITY = "none"


@dataclass(frozen=True, order=True)
class NeuronId:
    """A ReLU neuron: 1-based layer index, 0-based position inside the layer."""

    layer: int
    index: int

    def __str__(self):
        return f"n{self.layer}_{self.index}"


@dataclass(frozen=True, eq=False)
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.RELU

    @property
    def size(self):
        return self.weights.shape[0]

    @property
    def is_relu(self):
        return self.activation is Activation.RELU


def _frozen(values, ndim):
    array = np.array(values, dtype=np.float64)
    if array.ndim != ndim:
        raise InputError(f"expected a {ndim}-d array, got shape {array.shape}")
    array.setflags(write=False)
    return array


class Network:
    """Layered affine + ReLU model. Immutable once built."""

    def __init__(self, input_dim: int, layers: Sequence[Layer]):
        if int(input_dim) <= 0:
            raise InputError("input_dim must be positive")
        if not layers:
            raise InputError("a network needs at least one layer")

        self.input_dim = int(input_dim)
        frozen = []
        width = self.input_dim
        for k, layer in enumerate(layers, start=1):
            weights = _frozen(layer.weights, 2)
            bias = _frozen(layer.bias, 1)
            activation = Activation(layer.activation)
            if weights.shape[1] != width:
                raise InputError(
                    f"layer {k} has {weights.shape[1]} columns, expected {width}"
                )
            if bias.shape[0] != weights.shape[0]:
                raise InputError(
                    f"layer {k} bias has length {bias.shape[0]}, expected {weights.shape[0]}"
                )
            if activation is Activation.IDENTITY and k != len(layers):
                raise InputError(f"layer {k} is Identity but only the final layer may be")
            frozen.append(Layer(weights, bias, activation))
            width = weights.shape[0]
        self.layers: Tuple[Layer, ...] = tuple(frozen)

        self.neurons: Tuple[NeuronId, ...] = tuple(
            NeuronId(k, i)
            for k, layer in enumerate(self.layers, start=1)
            if layer.is_relu
            for i in range(layer.size)
        )

    @property
    def output_dim(self):
        return self.layers[-1].size

    @property
    def num_hidden(self):
        return len(self.neurons)

    @property
    def relu_layers(self):
        """1-based indices of the ReLU layers."""
        return [k for k, layer in enumerate(self.layers, start=1) if layer.is_relu]

    def neuron_name(self, neuron: NeuronId) -> str:
        """Sequential name counting inputs first (x1, x2, ... as in hand-drawn nets)."""
        offset = self.input_dim + sum(layer.size for layer in self.layers[: neuron.layer - 1])
        return f"x{offset + neuron.index + 1}"

    def __repr__(self):
        shape = [self.input_dim] + [layer.size for layer in self.layers]
        return f"Network(shape={shape})"


def _check_input(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise InputError(f"input has shape {x.shape}, network expects ({net.input_dim},)")
    return x


def forward(net: Network, x) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Evaluate the network; returns outputs and the pre-activations of each ReLU layer."""
    value = _check_input(net, x)
    pre_activations = []
    for layer in net.layers:
        z = layer.weights @ value + layer.bias
        if layer.is_relu:
            pre_activations.append(z)
            # ReLU(0) = 0
            value = np.where(z > 0, z, 0.0)
        else:
            value = z
    return value, pre_activations


def forward_batch(net: Network, xs) -> np.ndarray:
    """Outputs for a batch of inputs, one per row."""
    values = np.asarray(xs, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != net.input_dim:
        raise InputError(f"batch has shape {values.shape}, expected (n, {net.input_dim})")
    for layer in net.layers:
        values = values @ layer.weights.T + layer.bias
        if layer.is_relu:
            values = np.where(values > 0, values, 0.0)
    return values


def activation_pattern(net: Network, x) -> dict:
    """Activation status of every ReLU neuron at x; a zero pre-activation counts as inactive."""
    _, pre_activations = forward(net, x)
    relu_layers = net.relu_layers
    return {
        NeuronId(layer, i): bool(z[i] > 0)
        for layer, z in zip(relu_layers, pre_activations)
        for i in range(z.shape[0])
    }


def gradient(net: Network, x, loss) -> np.ndarray:
    """d(loss . net)/dx for a linear functional `loss` over the outputs.

    Uses the activation pattern at x; kinks take the zero subgradient.
    """
    x = _check_input(net, x)
    loss = np.asarray(loss, dtype=np.float64)
    if loss.shape != (net.output_dim,):
        raise InputError(f"loss has shape {loss.shape}, expected ({net.output_dim},)")

    _, pre_activations = forward(net, x)
    masks = iter(reversed([z > 0 for z in pre_activations]))
    grad = loss
    for layer in reversed(net.layers):
        if layer.is_relu:
            grad = grad * next(masks)
        grad = layer.weights.T @ grad
    return grad
