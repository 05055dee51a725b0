"""Parsing of network files (JSON) and properties (VNN-LIB subset) into verification problems."""

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, PositiveInt, ValidationError

from errors import InputError, ParseError
from network import Activation, Layer, Network, forward


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

class Comparison(str, Enum):
    LE = "<="
    GE = ">="
    LT = "<"
    GT = ">"

    @property
    def strict(self):
        return self in (Comparison.LT, Comparison.GT)

    @property
    def closed(self):
        return {Comparison.LT: Comparison.LE, Comparison.GT: Comparison.GE}.get(self, self)

    @property
    def flipped(self):
        """The comparison obtained by swapping the two sides."""
        return {
            Comparison.LE: Comparison.GE,
            Comparison.GE: Comparison.LE,
            Comparison.LT: Comparison.GT,
            Comparison.GT: Comparison.LT,
        }[self]


@dataclass(frozen=True)
class LinearConstraint:
    """sum_j coeffs[j] * y_j  <op>  rhs over the network outputs."""

    coeffs: Tuple[float, ...]
    op: Comparison
    rhs: float

    def value(self, y) -> float:
        return float(np.dot(self.coeffs, y))

    def slack(self, y) -> float:
        """Signed distance to the boundary; positive inside, zero on it."""
        if self.op in (Comparison.GE, Comparison.GT):
            return self.value(y) - self.rhs
        return self.rhs - self.value(y)

    def holds(self, y) -> bool:
        """Exact check, strict comparisons included."""
        slack = self.slack(y)
        return slack > 0 if self.op.strict else slack >= 0

    def as_geq(self) -> Tuple[np.ndarray, float]:
        """(a, b) such that the closed constraint reads a . y >= b."""
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.op in (Comparison.GE, Comparison.GT):
            return coeffs, self.rhs
        return -coeffs, -self.rhs

    def __str__(self):
        terms = " + ".join(f"{c:g}*Y_{j}" for j, c in enumerate(self.coeffs) if c != 0) or "0"
        return f"{terms} {self.op.value} {self.rhs:g}"


Conjunction = Tuple[LinearConstraint, ...]


@dataclass(frozen=True, eq=False)
class VerificationProblem:
    """Input box plus the negated output property in disjunctive normal form.

    A counterexample is an input inside the box whose output satisfies at least
    one disjunct of `negated_output`.
    """

    net: Network
    lower: np.ndarray
    upper: np.ndarray
    negated_output: Tuple[Conjunction, ...]
    name: str = field(default="")

    def __post_init__(self):
        lower = np.array(self.lower, dtype=np.float64)
        upper = np.array(self.upper, dtype=np.float64)
        if lower.shape != (self.net.input_dim,) or upper.shape != (self.net.input_dim,):
            raise InputError("input box does not match the network input dimension")
        if np.any(lower > upper):
            raise InputError("input box has lower > upper")
        for disjunct in self.negated_output:
            for constraint in disjunct:
                if len(constraint.coeffs) != self.net.output_dim:
                    raise InputError("output constraint does not match the output dimension")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "negated_output", tuple(tuple(d) for d in self.negated_output))

    @property
    def input_box(self):
        return list(zip(self.lower.tolist(), self.upper.tolist()))

    def in_box(self, x) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def violated_disjunct(self, y) -> Optional[int]:
        """Index of the first disjunct the output y satisfies exactly, if any."""
        for k, disjunct in enumerate(self.negated_output):
            if all(constraint.holds(y) for constraint in disjunct):
                return k
        return None

    def is_counterexample(self, x) -> bool:
        """True iff x lies in the box and violates the original output property."""
        if not self.in_box(x):
            return False
        outputs, _ = forward(self.net, x)
        return self.violated_disjunct(outputs) is not None


# ---------------------------------------------------------------------------
# Network files
# ---------------------------------------------------------------------------

class LayerDocument(BaseModel):
    weights: List[List[float]]
    bias: List[float]
    activation: Literal["relu", "none"] = "relu"


class NetworkDocument(BaseModel):
    input_dim: PositiveInt
    layers: List[LayerDocument] = Field(min_length=1)


def _layer_lines(text: str) -> List[int]:
    """Line number of each `"weights"` key, used to point errors at a layer."""
    return [text.count("\n", 0, m.start()) + 1 for m in re.finditer(r'"weights"', text)]


def parse_network(text: str) -> Network:
    """Parse the native JSON network format."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON: {e.msg}", line=e.lineno)

    layer_lines = _layer_lines(text)

    def line_of(k):
        return layer_lines[k] if k < len(layer_lines) else None

    try:
        document = NetworkDocument.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        loc = first.get("loc", ())
        line = line_of(loc[1]) if len(loc) > 1 and loc[0] == "layers" and isinstance(loc[1], int) else None
        where = ".".join(str(part) for part in loc)
        raise ParseError(f"invalid field {where}: {first.get('msg')}", line=line)

    width = document.input_dim
    layers = []
    for k, layer in enumerate(document.layers):
        rows = layer.weights
        if not rows or any(len(row) != width for row in rows):
            raise ParseError(
                f"layer {k + 1}: every weight row must have {width} entries", line=line_of(k)
            )
        if len(layer.bias) != len(rows):
            raise ParseError(
                f"layer {k + 1}: bias has length {len(layer.bias)}, expected {len(rows)}",
                line=line_of(k),
            )
        if layer.activation == "none" and k != len(document.layers) - 1:
            raise ParseError(
                f"layer {k + 1}: only the final layer may use activation 'none'", line=line_of(k)
            )
        layers.append(Layer(np.array(rows), np.array(layer.bias), Activation(layer.activation)))
        width = len(rows)

    try:
        return Network(document.input_dim, layers)
    except InputError as e:
        raise ParseError(str(e))


def serialize_network(net: Network) -> str:
    document = {
        "input_dim": net.input_dim,
        "layers": [
            {
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation.value,
            }
            for layer in net.layers
        ],
    }
    return json.dumps(document, indent=2) + "\n"


def load_network(path) -> Network:
    with open(path, "r", encoding="utf-8") as f:
        return parse_network(f.read())


# ---------------------------------------------------------------------------
# VNN-LIB subset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    text: str
    line: int


_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")
_VAR_RE = re.compile(r"^([XY])_(\d+)$")


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split(";", 1)[0]
        tokens.extend(_Token(m.group(0), lineno) for m in _TOKEN_RE.finditer(line))
    return tokens


def _read_forms(tokens: List[_Token]) -> list:
    """Nest tokens into s-expressions; each list carries its opening token as element 0."""
    stack = [[None]]
    for token in tokens:
        if token.text == "(":
            stack.append([token])
        elif token.text == ")":
            if len(stack) == 1:
                raise ParseError("unbalanced ')'", line=token.line)
            form = stack.pop()
            stack[-1].append(form)
        else:
            stack[-1].append(token)
    if len(stack) != 1:
        raise ParseError("unbalanced '('", line=stack[-1][0].line)
    return stack[0][1:]


def _line(form) -> Optional[int]:
    return form[0].line if isinstance(form, list) else form.line


def _head(form) -> Optional[str]:
    if isinstance(form, list) and len(form) > 1 and isinstance(form[1], _Token):
        return form[1].text
    return None


def _number(token: _Token) -> Optional[float]:
    try:
        value = float(token.text)
    except ValueError:
        return None
    if not np.isfinite(value):
        raise ParseError(f"non-finite constant '{token.text}'", line=token.line)
    return value


@dataclass
class _LinearTerm:
    coeffs: Dict[Tuple[str, int], float]
    const: float

    def scaled(self, factor):
        return _LinearTerm({k: v * factor for k, v in self.coeffs.items()}, self.const * factor)

    def plus(self, other):
        coeffs = dict(self.coeffs)
        for k, v in other.coeffs.items():
            coeffs[k] = coeffs.get(k, 0.0) + v
        return _LinearTerm(coeffs, self.const + other.const)

    @property
    def kinds(self):
        return {kind for (kind, _), v in self.coeffs.items() if v != 0}


_COMPARISONS = {op.value: op for op in Comparison}


class _VnnlibReader:
    def __init__(self, net: Network):
        self.net = net
        self.declared = set()
        self.lower: Dict[int, float] = {}
        self.upper: Dict[int, float] = {}
        self.output_formulas = []

    # -- terms ------------------------------------------------------------
    def term(self, form) -> _LinearTerm:
        if isinstance(form, _Token):
            value = _number(form)
            if value is not None:
                return _LinearTerm({}, value)
            match = _VAR_RE.match(form.text)
            if not match:
                raise ParseError(f"unsupported construct '{form.text}'", line=form.line)
            key = (match.group(1), int(match.group(2)))
            if key not in self.declared:
                raise ParseError(f"undeclared variable {form.text}", line=form.line)
            return _LinearTerm({key: 1.0}, 0.0)

        head = _head(form)
        args = [self.term(arg) for arg in form[2:]]
        if head == "+" and args:
            total = args[0]
            for arg in args[1:]:
                total = total.plus(arg)
            return total
        if head == "-" and len(args) == 1:
            return args[0].scaled(-1.0)
        if head == "-" and len(args) >= 2:
            total = args[0]
            for arg in args[1:]:
                total = total.plus(arg.scaled(-1.0))
            return total
        if head == "*" and len(args) == 2:
            left, right = args
            if not left.coeffs:
                return right.scaled(left.const)
            if not right.coeffs:
                return left.scaled(right.const)
            raise ParseError("non-linear product", line=_line(form))
        if head == "/" and len(args) == 2 and not args[1].coeffs and args[1].const != 0:
            return args[0].scaled(1.0 / args[1].const)
        raise ParseError(f"unsupported construct '{head}'", line=_line(form))

    # -- formulas ---------------------------------------------------------
    def comparison(self, form):
        """Returns ('input', index, op, bound) or ('output', LinearConstraint)."""
        head = _head(form)
        if len(form) != 4:
            raise ParseError(f"'{head}' takes exactly two arguments", line=_line(form))
        op = _COMPARISONS[head]
        difference = self.term(form[2]).plus(self.term(form[3]).scaled(-1.0))
        kinds = difference.kinds
        if kinds == {"X", "Y"}:
            raise ParseError("inequality mixes input and output variables", line=_line(form))
        if not kinds:
            raise ParseError("constant comparison is not supported", line=_line(form))

        if kinds == {"X"}:
            live = [(k, v) for k, v in difference.coeffs.items() if v != 0]
            if len(live) != 1:
                raise ParseError("input constraints must bound a single variable", line=_line(form))
            (_, index), coeff = live[0]
            # coeff * X + const  op  0
            bound = -difference.const / coeff
            if coeff < 0:
                op = op.flipped
            return ("input", index, op, bound)

        coeffs = [0.0] * self.net.output_dim
        for (kind, index), value in difference.coeffs.items():
            coeffs[index] += value
        return ("output", LinearConstraint(tuple(coeffs), op, -difference.const))

    def formula(self, form, allow_inputs=True):
        """Collect input bounds; return the output part as a nested ('and'|'or', ...) tree or None."""
        head = _head(form)
        if head in _COMPARISONS:
            parsed = self.comparison(form)
            if parsed[0] == "input":
                if not allow_inputs:
                    raise ParseError("input bounds inside 'or' are not supported", line=_line(form))
                _, index, op, bound = parsed
                if op in (Comparison.LE, Comparison.LT):
                    self.upper[index] = min(self.upper.get(index, np.inf), bound)
                else:
                    self.lower[index] = max(self.lower.get(index, -np.inf), bound)
                return None
            return ("atom", parsed[1])
        if head == "and":
            children = [self.formula(child, allow_inputs) for child in form[2:]]
            children = [child for child in children if child is not None]
            return ("and", children) if children else None
        if head == "or":
            children = [self.formula(child, allow_inputs=False) for child in form[2:]]
            children = [child for child in children if child is not None]
            return ("or", children) if children else None
        raise ParseError(f"unsupported construct '{head}'", line=_line(form))

    # -- top level --------------------------------------------------------
    def read(self, forms):
        for form in forms:
            if not isinstance(form, list):
                raise ParseError(f"unexpected token '{form.text}'", line=form.line)
            head = _head(form)
            if head == "declare-const":
                self.declare(form)
            elif head == "assert":
                if len(form) != 3:
                    raise ParseError("'assert' takes one formula", line=_line(form))
                tree = self.formula(form[2])
                if tree is not None:
                    self.output_formulas.append(tree)
            else:
                raise ParseError(f"unsupported construct '{head}'", line=_line(form))

    def declare(self, form):
        if len(form) != 4 or not isinstance(form[2], _Token):
            raise ParseError("malformed declare-const", line=_line(form))
        match = _VAR_RE.match(form[2].text)
        if not match:
            raise ParseError(f"unsupported variable name '{form[2].text}'", line=_line(form))
        kind, index = match.group(1), int(match.group(2))
        limit = self.net.input_dim if kind == "X" else self.net.output_dim
        if index >= limit:
            raise ParseError(f"{form[2].text} is out of range for the network", line=_line(form))
        self.declared.add((kind, index))


def _dnf(tree) -> List[List[LinearConstraint]]:
    kind, payload = tree
    if kind == "atom":
        return [[payload]]
    if kind == "or":
        return [disjunct for child in payload for disjunct in _dnf(child)]
    disjuncts = [[]]
    for child in payload:
        disjuncts = [left + right for left, right in product(disjuncts, _dnf(child))]
    return disjuncts


def parse_vnnlib(text: str, net: Network, name: str = "") -> VerificationProblem:
    """Parse a property; the asserts describe a counterexample (the negated property)."""
    reader = _VnnlibReader(net)
    reader.read(_read_forms(_tokenize(text)))

    for i in range(net.input_dim):
        if i not in reader.lower or i not in reader.upper:
            raise ParseError(f"missing box bound for X_{i}")
        if reader.lower[i] > reader.upper[i]:
            raise ParseError(f"empty box for X_{i}")
    if not reader.output_formulas:
        raise ParseError("property has no output constraint")

    disjuncts = _dnf(("and", reader.output_formulas))
    return VerificationProblem(
        net=net,
        lower=np.array([reader.lower[i] for i in range(net.input_dim)]),
        upper=np.array([reader.upper[i] for i in range(net.input_dim)]),
        negated_output=tuple(tuple(d) for d in disjuncts),
        name=name,
    )


def _format_constraint(constraint: LinearConstraint) -> str:
    terms = [f"(* {c!r} Y_{j})" for j, c in enumerate(constraint.coeffs) if c != 0]
    if not terms:
        lhs = "0.0"
    elif len(terms) == 1:
        lhs = terms[0]
    else:
        lhs = f"(+ {' '.join(terms)})"
    return f"({constraint.op.value} {lhs} {constraint.rhs!r})"


def format_vnnlib(problem: VerificationProblem) -> str:
    net = problem.net
    lines = [f"(declare-const X_{i} Real)" for i in range(net.input_dim)]
    lines += [f"(declare-const Y_{j} Real)" for j in range(net.output_dim)]
    lines.append("")
    for i, (lo, hi) in enumerate(problem.input_box):
        lines.append(f"(assert (>= X_{i} {lo!r}))")
        lines.append(f"(assert (<= X_{i} {hi!r}))")
    lines.append("")
    conjunctions = [
        "(and " + " ".join(_format_constraint(c) for c in disjunct) + ")"
        for disjunct in problem.negated_output
    ]
    lines.append(f"(assert (or {' '.join(conjunctions)}))")
    return "\n".join(lines) + "\n"


def load_problem(net_path, prop_path) -> VerificationProblem:
    net = load_network(net_path)
    with open(prop_path, "r", encoding="utf-8") as f:
        return parse_vnnlib(f.read(), net, name=str(prop_path))
