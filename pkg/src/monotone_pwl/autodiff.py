"""Tape-based reverse-mode automatic differentiation.

Every operation appends a :class:`TapeNode` to a :class:`Tape`. Because
parents are always recorded before their children, a single reverse sweep
over the tape is enough to accumulate adjoints.

Node values are float64 numpy arrays. A 0-d array is a plain scalar; the
matrix primitives (``matmul``, ``transpose``, ``total``, ``fill``) exist so a
whole minibatch can flow through one tape, but there is no implicit
broadcasting: elementwise operands must have identical shapes.

:func:`backward_as_graph` records the reverse pass itself onto a new tape,
so the gradients it produces can be differentiated again (double backprop)::

    tape = record(lambda x: x * x, x=3.0)
    gtape = backward_as_graph(tape, tape.output)
    backward(gtape, gtape.gradients["x"])["x"]   # -> 2.0
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy.special import expit

__all__ = [
    "Op",
    "TapeNode",
    "Tape",
    "Var",
    "AutodiffError",
    "NonFiniteValueError",
    "ShapeError",
    "UnsupportedPrimitiveError",
    "record",
    "backward",
    "backward_as_graph",
    "tanh",
    "sigmoid",
    "softplus",
    "exp",
    "sin",
    "cos",
    "log",
    "max0",
    "step",
    "matmul",
    "transpose",
    "total",
    "fill",
    "evaluate",
    "gradient_values",
]


class AutodiffError(Exception):
    pass


class NonFiniteValueError(AutodiffError, FloatingPointError):
    def __init__(self, index: int, op: "Op"):
        super().__init__(f"node {index} ({op.value}) produced a non-finite value")
        self.index = index
        self.op = op


class ShapeError(AutodiffError, ValueError):
    pass


class UnsupportedPrimitiveError(AutodiffError):
    pass


class Op(enum.Enum):
    INPUT = "input"
    CONST = "const"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"
    NEG = "neg"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    SOFTPLUS = "softplus"
    EXP = "exp"
    SIN = "sin"
    COS = "cos"
    LOG = "log"
    MAX0 = "max0"
    STEP = "step"
    MATMUL = "matmul"
    TRANSPOSE = "transpose"
    SUM = "sum"
    FILL = "fill"


_ELEMENTWISE_BINARY = {Op.ADD, Op.SUB, Op.MUL, Op.DIV}


@dataclass(frozen=True)
class TapeNode:
    """One recorded operation.

    ``local_partials`` holds d(value)/d(parent) evaluated at record time for
    elementwise primitives. Structural primitives (matmul, transpose, sum,
    fill) store ``None`` per parent: their vector-Jacobian products are
    formed from the operand values instead.
    """

    value: np.ndarray
    op: Op
    parents: tuple[int, ...] = ()
    local_partials: tuple = ()
    shape: tuple[int, ...] | None = None  # target shape, FILL only


def _forward(op: Op, args: list[np.ndarray], shape=None) -> np.ndarray:
    if op is Op.ADD:
        return args[0] + args[1]
    if op is Op.SUB:
        return args[0] - args[1]
    if op is Op.MUL:
        return args[0] * args[1]
    if op is Op.DIV:
        return args[0] / args[1]
    if op is Op.NEG:
        return -args[0]
    if op is Op.TANH:
        return np.tanh(args[0])
    if op is Op.SIGMOID:
        return expit(args[0])
    if op is Op.SOFTPLUS:
        return np.logaddexp(0.0, args[0])
    if op is Op.EXP:
        return np.exp(args[0])
    if op is Op.SIN:
        return np.sin(args[0])
    if op is Op.COS:
        return np.cos(args[0])
    if op is Op.LOG:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(args[0])
    if op is Op.MAX0:
        return np.maximum(args[0], 0.0)
    if op is Op.STEP:
        return (args[0] > 0.0).astype(np.float64)
    if op is Op.MATMUL:
        return args[0] @ args[1]
    if op is Op.TRANSPOSE:
        return np.ascontiguousarray(args[0].T)
    if op is Op.SUM:
        return np.asarray(args[0].sum())
    if op is Op.FILL:
        return np.full(shape, float(args[0]))
    raise UnsupportedPrimitiveError(op)


def _partials(op: Op, args: list[np.ndarray], out: np.ndarray) -> tuple:
    if op is Op.ADD:
        return (1.0, 1.0)
    if op is Op.SUB:
        return (1.0, -1.0)
    if op is Op.MUL:
        return (args[1], args[0])
    if op is Op.DIV:
        return (1.0 / args[1], -out / args[1])
    if op is Op.NEG:
        return (-1.0,)
    if op is Op.TANH:
        return (1.0 - out * out,)
    if op is Op.SIGMOID:
        return (out * (1.0 - out),)
    if op is Op.SOFTPLUS:
        return (expit(args[0]),)
    if op is Op.EXP:
        return (out,)
    if op is Op.SIN:
        return (np.cos(args[0]),)
    if op is Op.COS:
        return (-np.sin(args[0]),)
    if op is Op.LOG:
        return (1.0 / args[0],)
    if op is Op.MAX0:
        # subgradient at exactly 0 is 0
        return ((args[0] > 0.0).astype(np.float64),)
    if op is Op.STEP:
        return (0.0,)
    return (None,) * len(args)


class Tape:
    """Ordered list of nodes plus named input slots.

    A tape is open for recording until :meth:`freeze` is called; afterwards
    it is read-only and may be shared between threads.
    """

    def __init__(self) -> None:
        self.nodes: list[TapeNode] = []
        self.input_slots: dict[str, int] = {}
        self.gradients: dict[str, int] = {}
        self.output: int | None = None
        self._frozen = False

    def __len__(self) -> int:
        return len(self.nodes)

    # recording -------------------------------------------------------

    def _push(self, node: TapeNode) -> Var:
        if self._frozen:
            raise AutodiffError("tape is frozen")
        index = len(self.nodes)
        if not np.all(np.isfinite(node.value)):
            raise NonFiniteValueError(index, node.op)
        self.nodes.append(node)
        return Var(self, index)

    def input(self, name: str, value) -> Var:
        if name in self.input_slots:
            raise AutodiffError(f"duplicate input slot {name!r}")
        arr = np.array(value, dtype=np.float64)
        var = self._push(TapeNode(arr, Op.INPUT))
        self.input_slots[name] = var.index
        return var

    def const(self, value) -> Var:
        return self._push(TapeNode(np.array(value, dtype=np.float64), Op.CONST))

    def apply(self, op: Op, *operands: Var, shape=None) -> Var:
        for v in operands:
            if v.tape is not self:
                raise AutodiffError("operand recorded on a different tape")
        args = [self.nodes[v.index].value for v in operands]
        if op in _ELEMENTWISE_BINARY and args[0].shape != args[1].shape:
            raise ShapeError(f"{op.value}: shapes {args[0].shape} and {args[1].shape} differ")
        if op is Op.MATMUL and (args[0].ndim != 2 or args[1].ndim != 2
                                or args[0].shape[1] != args[1].shape[0]):
            raise ShapeError(f"matmul: incompatible shapes {args[0].shape} @ {args[1].shape}")
        if op is Op.FILL and args[0].ndim != 0:
            raise ShapeError("fill expects a scalar operand")
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            out = _forward(op, args, shape)
            partials = _partials(op, args, out)
        return self._push(TapeNode(
            out, op, tuple(v.index for v in operands), partials,
            tuple(shape) if shape is not None else None,
        ))

    def var(self, index: int) -> Var:
        return Var(self, index)

    def value(self, index: int) -> np.ndarray:
        return self.nodes[index].value

    def freeze(self) -> "Tape":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def copy(self) -> "Tape":
        """Unfrozen tape sharing this tape's (immutable) nodes."""
        new = Tape()
        new.nodes = list(self.nodes)
        new.input_slots = dict(self.input_slots)
        new.gradients = dict(self.gradients)
        new.output = self.output
        return new

    def replay(self, **inputs) -> "Tape":
        """Re-evaluate every node with new input values.

        Inputs not given keep their recorded values.
        """
        new = Tape()
        new.input_slots = dict(self.input_slots)
        new.gradients = dict(self.gradients)
        new.output = self.output
        by_index = {idx: name for name, idx in self.input_slots.items()}
        unknown = set(inputs) - set(self.input_slots)
        if unknown:
            raise AutodiffError(f"unknown inputs: {sorted(unknown)}")
        for i, node in enumerate(self.nodes):
            if node.op is Op.INPUT:
                name = by_index[i]
                value = np.array(inputs.get(name, node.value), dtype=np.float64)
                if value.shape != node.value.shape:
                    raise ShapeError(f"input {name!r}: expected shape {node.value.shape}")
                new_node = TapeNode(value, Op.INPUT)
            elif node.op is Op.CONST:
                new_node = node
            else:
                args = [new.nodes[p].value for p in node.parents]
                with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                    out = _forward(node.op, args, node.shape)
                    partials = _partials(node.op, args, out)
                new_node = TapeNode(out, node.op, node.parents, partials, node.shape)
            if not np.all(np.isfinite(new_node.value)):
                raise NonFiniteValueError(i, node.op)
            new.nodes.append(new_node)
        return new.freeze() if self._frozen else new


class Var:
    """Handle to a node on a tape; supports arithmetic operators."""

    __slots__ = ("tape", "index")
    __array_priority__ = 1000

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        node = self.tape.nodes[self.index]
        return f"Var(#{self.index}, {node.op.value}, shape={node.value.shape})"

    def _lift(self, other) -> Var:
        if isinstance(other, Var):
            return other
        arr = np.asarray(other, dtype=np.float64)
        if arr.ndim == 0 and self.value.ndim != 0:
            # a bare number next to an array is expanded as a constant
            arr = np.full(self.value.shape, float(arr))
        return self.tape.const(arr)

    def __add__(self, other):
        return self.tape.apply(Op.ADD, self, self._lift(other))

    def __radd__(self, other):
        return self.tape.apply(Op.ADD, self._lift(other), self)

    def __sub__(self, other):
        return self.tape.apply(Op.SUB, self, self._lift(other))

    def __rsub__(self, other):
        return self.tape.apply(Op.SUB, self._lift(other), self)

    def __mul__(self, other):
        return self.tape.apply(Op.MUL, self, self._lift(other))

    def __rmul__(self, other):
        return self.tape.apply(Op.MUL, self._lift(other), self)

    def __truediv__(self, other):
        return self.tape.apply(Op.DIV, self, self._lift(other))

    def __rtruediv__(self, other):
        return self.tape.apply(Op.DIV, self._lift(other), self)

    def __neg__(self):
        return self.tape.apply(Op.NEG, self)

    def __matmul__(self, other):
        return self.tape.apply(Op.MATMUL, self, self._lift(other))

    def __rmatmul__(self, other):
        return self.tape.apply(Op.MATMUL, self._lift(other), self)

    @property
    def T(self) -> Var:
        return self.tape.apply(Op.TRANSPOSE, self)


def _unary(op: Op) -> Callable[[Var], Var]:
    def fn(v: Var) -> Var:
        return v.tape.apply(op, v)

    fn.__name__ = op.value
    fn.__doc__ = f"Elementwise {op.value}."
    return fn


tanh = _unary(Op.TANH)
sigmoid = _unary(Op.SIGMOID)
softplus = _unary(Op.SOFTPLUS)
exp = _unary(Op.EXP)
sin = _unary(Op.SIN)
cos = _unary(Op.COS)
log = _unary(Op.LOG)
max0 = _unary(Op.MAX0)
step = _unary(Op.STEP)


def matmul(a: Var, b) -> Var:
    return a @ b


def transpose(a: Var) -> Var:
    return a.T


def total(a: Var) -> Var:
    """Sum of all entries, as a 0-d node."""
    return a.tape.apply(Op.SUM, a)


def fill(s: Var, shape) -> Var:
    """Array of ``shape`` with every entry equal to the scalar ``s``."""
    return s.tape.apply(Op.FILL, s, shape=tuple(shape))


def record(builder: Callable[..., Var], **inputs) -> Tape:
    """Record ``builder(**handles)`` and return the frozen tape.

    Each keyword becomes a named input slot; the builder receives a
    :class:`Var` per keyword and must return the output node.
    """
    tape = Tape()
    handles = {name: tape.input(name, value) for name, value in inputs.items()}
    out = builder(**handles)
    if not isinstance(out, Var) or out.tape is not tape:
        raise AutodiffError("builder must return a Var recorded on the tape")
    tape.output = out.index
    return tape.freeze()


# reverse sweeps -------------------------------------------------------


def _dependents(tape: Tape, names: Iterable[str] | None) -> np.ndarray | None:
    """Mask of nodes whose value depends on any of the named inputs."""
    if names is None:
        return None
    mask = np.zeros(len(tape.nodes), dtype=bool)
    for name in names:
        mask[tape.input_slots[name]] = True
    for i, node in enumerate(tape.nodes):
        if not mask[i] and node.parents:
            mask[i] = any(mask[p] for p in node.parents)
    return mask


def _seed_index(tape: Tape, seed) -> int:
    if seed is None:
        if tape.output is None:
            raise AutodiffError("tape has no output; pass a seed node")
        return tape.output
    return seed.index if isinstance(seed, Var) else int(seed)


def _as_result(arr: np.ndarray):
    return float(arr) if arr.ndim == 0 else arr


def backward(tape: Tape, seed=None, wrt: Iterable[str] | None = None) -> dict:
    """Derivatives of the scalar ``seed`` node w.r.t. every input slot.

    Inputs the seed does not reach get zeros. ``wrt`` restricts the sweep
    to the named inputs (others are omitted from the result).
    """
    seed = _seed_index(tape, seed)
    nodes = tape.nodes
    if nodes[seed].value.ndim != 0:
        raise ShapeError(f"seed node {seed} is not scalar")
    names = list(tape.input_slots) if wrt is None else list(wrt)
    live = _dependents(tape, wrt)
    adj: dict[int, np.ndarray] = {seed: np.asarray(1.0)}
    for i in range(seed, -1, -1):
        g = adj.pop(i, None)
        if g is None:
            continue
        node = nodes[i]
        if node.op is Op.INPUT:
            adj[i] = g  # keep for collection
            continue
        for k, p in enumerate(node.parents):
            if live is not None and not live[p]:
                continue
            contrib = _vjp_value(node, k, g, nodes)
            if contrib is None:
                continue
            adj[p] = adj[p] + contrib if p in adj else contrib
    out = {}
    for name in names:
        idx = tape.input_slots[name]
        g = adj.get(idx)
        out[name] = _as_result(np.zeros_like(nodes[idx].value) if g is None else g)
    return out


def _vjp_value(node: TapeNode, k: int, g: np.ndarray, nodes: list[TapeNode]):
    op = node.op
    if op is Op.MATMUL:
        a, b = (nodes[p].value for p in node.parents)
        return g @ b.T if k == 0 else a.T @ g
    if op is Op.TRANSPOSE:
        return g.T
    if op is Op.SUM:
        return np.full(nodes[node.parents[0]].value.shape, float(g))
    if op is Op.FILL:
        return np.asarray(g.sum())
    if op is Op.STEP:
        return None
    partial = node.local_partials[k]
    if isinstance(partial, float):
        return g if partial == 1.0 else g * partial
    return g * partial


def backward_as_graph(tape: Tape, seed=None, wrt: Iterable[str] | None = None) -> Tape:
    """Record the reverse pass onto a copy of ``tape``.

    Returns an open tape holding the original nodes followed by the adjoint
    computation. ``result.gradients[name]`` is the node index of
    d(seed)/d(input ``name``); those nodes can feed further recording and a
    second :func:`backward`.
    """
    seed = _seed_index(tape, seed)
    if tape.nodes[seed].value.ndim != 0:
        raise ShapeError(f"seed node {seed} is not scalar")
    names = list(tape.input_slots) if wrt is None else list(wrt)
    live = _dependents(tape, wrt)
    new = tape.copy()
    new.gradients = {}
    adj: dict[int, Var] = {seed: new.const(1.0)}
    for i in range(seed, -1, -1):
        g = adj.get(i)
        if g is None:
            continue
        node = tape.nodes[i]
        for k, p in enumerate(node.parents):
            if live is not None and not live[p]:
                continue
            contrib = _vjp_graph(new, i, node, k, g)
            if contrib is None:
                continue
            adj[p] = adj[p] + contrib if p in adj else contrib
    for name in names:
        idx = tape.input_slots[name]
        g = adj.get(idx)
        if g is None:
            g = new.const(np.zeros_like(tape.nodes[idx].value))
        new.gradients[name] = g.index
    return new


def _vjp_graph(t: Tape, i: int, node: TapeNode, k: int, g: Var) -> Var | None:
    op = node.op
    out = t.var(i)
    args = [t.var(p) for p in node.parents]
    if op is Op.ADD:
        return g
    if op is Op.SUB:
        return g if k == 0 else -g
    if op is Op.MUL:
        return g * args[1 - k]
    if op is Op.DIV:
        return g / args[1] if k == 0 else -(g * out) / args[1]
    if op is Op.NEG:
        return -g
    if op is Op.TANH:
        return g * (1.0 - out * out)
    if op is Op.SIGMOID:
        return g * (out * (1.0 - out))
    if op is Op.SOFTPLUS:
        return g * sigmoid(args[0])
    if op is Op.EXP:
        return g * out
    if op is Op.SIN:
        return g * cos(args[0])
    if op is Op.COS:
        return -(g * sin(args[0]))
    if op is Op.LOG:
        return g / args[0]
    if op is Op.MAX0:
        return g * step(args[0])
    if op is Op.STEP:
        return None
    if op is Op.MATMUL:
        return g @ args[1].T if k == 0 else args[0].T @ g
    if op is Op.TRANSPOSE:
        return g.T
    if op is Op.SUM:
        return fill(g, node_shape(t, node.parents[0]))
    if op is Op.FILL:
        return total(g)
    raise UnsupportedPrimitiveError(f"no recordable derivative for {op.value}")


def node_shape(t: Tape, index: int) -> tuple[int, ...]:
    return t.nodes[index].value.shape


def evaluate(tape: Tape, index: int | None = None):
    """Value of a node (default: the tape output) as float or array."""
    return _as_result(tape.value(_seed_index(tape, index)))


def gradient_values(tape: Tape, names: Mapping[str, int] | None = None) -> dict:
    """Values of the gradient nodes recorded by :func:`backward_as_graph`."""
    names = tape.gradients if names is None else names
    return {name: _as_result(tape.value(idx)) for name, idx in names.items()}
