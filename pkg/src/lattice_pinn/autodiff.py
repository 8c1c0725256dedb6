"""Scalar reverse-mode automatic differentiation on an explicit tape.

Forward-mode tangents are recorded as ordinary tape nodes, so a directional
derivative of a program is itself a differentiable quantity: reverse-sweeping
from any function of a tangent yields second-order (parameter) gradients.

The graph is scalar: every node is one scalar operation with at most two
parents. Node *values* may be 1-D numpy arrays, in which case the same scalar
graph is evaluated elementwise over a batch of independent sample points.
Nothing in the graph ever mixes batch lanes, so adjoints stay elementwise too.
"""

from __future__ import annotations

import math
from enum import IntEnum
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

from .errors import GraphError, RecordError, SeedError

Value = Union[float, np.ndarray]


class Op(IntEnum):
    CONST = 0
    VAR = 1
    ADD = 2
    SUB = 3
    MUL = 4
    DIV = 5
    NEG = 6
    EXP = 7
    LN = 8
    TANH = 9
    MAX0 = 10   # max(x, 0); derivative at exactly 0 is defined as 0
    POWI = 11   # integer power, exponent stored out-of-band


class Node(NamedTuple):
    """Read-only view of one tape entry."""

    id: int
    op: Op
    parents: tuple[int, ...]
    value: Value
    adjoint: Value


class Dual(NamedTuple):
    """A primal node paired with its forward-tangent node on the same tape."""

    primal: int
    tangent: int


def _is_finite(v: Value) -> bool:
    if isinstance(v, np.ndarray):
        return bool(np.isfinite(v).all())
    return math.isfinite(v)


class Tape:
    """Append-only computation record.

    Node ids are dense and strictly increasing; parents always precede their
    consumers, so descending id order is a reverse topological order. Values
    are immutable once recorded; adjoints are written only by reverse sweeps.
    Every tape starts with the cached constants 0.0 (id 0) and 1.0 (id 1).
    """

    def __init__(self):
        self._op: list[int] = []
        self._pa: list[int] = []
        self._pb: list[int] = []
        self._aux: list[int] = []
        self._val: list[Value] = []
        self.adjoints: list[Value] = []
        self._const_cache: dict[float, int] = {}
        self.zero = self.const(0.0)
        self.one = self.const(1.0)

    def __len__(self) -> int:
        return len(self._op)

    def node(self, i: int) -> Node:
        if not 0 <= i < len(self._op):
            raise GraphError(f"node {i} is not on the tape")
        parents = tuple(p for p in (self._pa[i], self._pb[i]) if p >= 0)
        adj = self.adjoints[i] if i < len(self.adjoints) else 0.0
        return Node(i, Op(self._op[i]), parents, self._val[i], adj)

    def value(self, i: int) -> Value:
        return self._val[i]

    # -- raw recording ------------------------------------------------------

    def _append(self, op: int, pa: int, pb: int, aux: int, value: Value) -> int:
        if not _is_finite(value):
            raise RecordError(f"refusing to record non-finite value for op {Op(op).name}")
        self._op.append(op)
        self._pa.append(pa)
        self._pb.append(pb)
        self._aux.append(aux)
        self._val.append(value)
        return len(self._op) - 1

    def _check_parent(self, p: int) -> int:
        if not 0 <= p < len(self._op):
            raise GraphError(f"parent {p} is not on the tape")
        return p

    # -- leaves --------------------------------------------------------------

    def const(self, v: Value) -> int:
        if isinstance(v, np.ndarray):
            return self._append(Op.CONST, -1, -1, 0, np.array(v, dtype=float))
        v = float(v)
        cached = self._const_cache.get(v)
        if cached is not None:
            return cached
        nid = self._append(Op.CONST, -1, -1, 0, v)
        self._const_cache[v] = nid
        return nid

    def var(self, v: Value) -> int:
        if isinstance(v, np.ndarray):
            return self._append(Op.VAR, -1, -1, 0, np.array(v, dtype=float))
        return self._append(Op.VAR, -1, -1, 0, float(v))

    # -- arithmetic ----------------------------------------------------------

    def add(self, a: int, b: int) -> int:
        return self._append(Op.ADD, a, b, 0, self._val[a] + self._val[b])

    def sub(self, a: int, b: int) -> int:
        return self._append(Op.SUB, a, b, 0, self._val[a] - self._val[b])

    def mul(self, a: int, b: int) -> int:
        return self._append(Op.MUL, a, b, 0, self._val[a] * self._val[b])

    def div(self, a: int, b: int) -> int:
        va, vb = self._val[a], self._val[b]
        if isinstance(va, np.ndarray) or isinstance(vb, np.ndarray):
            with np.errstate(divide="ignore", invalid="ignore"):
                v = va / vb
        else:
            try:
                v = va / vb
            except ZeroDivisionError:
                raise RecordError("division by zero") from None
        return self._append(Op.DIV, a, b, 0, v)

    def neg(self, a: int) -> int:
        return self._append(Op.NEG, a, -1, 0, -self._val[a])

    def exp(self, a: int) -> int:
        va = self._val[a]
        if isinstance(va, np.ndarray):
            with np.errstate(over="ignore"):
                v = np.exp(va)
        else:
            try:
                v = math.exp(va)
            except OverflowError:
                raise RecordError("exp overflow") from None
        return self._append(Op.EXP, a, -1, 0, v)

    def ln(self, a: int) -> int:
        va = self._val[a]
        if isinstance(va, np.ndarray):
            with np.errstate(divide="ignore", invalid="ignore"):
                v = np.log(va)
        else:
            try:
                v = math.log(va)
            except ValueError:
                raise RecordError("log of non-positive value") from None
        return self._append(Op.LN, a, -1, 0, v)

    def tanh(self, a: int) -> int:
        va = self._val[a]
        v = np.tanh(va) if isinstance(va, np.ndarray) else math.tanh(va)
        return self._append(Op.TANH, a, -1, 0, v)

    def max0(self, a: int) -> int:
        va = self._val[a]
        v = np.maximum(va, 0.0) if isinstance(va, np.ndarray) else (va if va > 0.0 else 0.0)
        return self._append(Op.MAX0, a, -1, 0, v)

    def powi(self, a: int, n: int) -> int:
        n = int(n)
        va = self._val[a]
        if isinstance(va, np.ndarray):
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                v = va ** n
        else:
            try:
                v = va ** n
            except (ZeroDivisionError, OverflowError):
                raise RecordError(f"power {n} not finite at base {va}") from None
        return self._append(Op.POWI, a, -1, n, v)

    # -- forward tangents (recorded onto the same tape) -----------------------

    def lift(self, node: int) -> Dual:
        """Wrap a plain node as a Dual with a structurally zero tangent."""
        return Dual(node, self.zero)

    def dual_add(self, a: Dual, b: Dual) -> Dual:
        p = self.add(a.primal, b.primal)
        za, zb = a.tangent == self.zero, b.tangent == self.zero
        if za and zb:
            t = self.zero
        elif za:
            t = b.tangent
        elif zb:
            t = a.tangent
        else:
            t = self.add(a.tangent, b.tangent)
        return Dual(p, t)

    def dual_sub(self, a: Dual, b: Dual) -> Dual:
        p = self.sub(a.primal, b.primal)
        za, zb = a.tangent == self.zero, b.tangent == self.zero
        if za and zb:
            t = self.zero
        elif zb:
            t = a.tangent
        elif za:
            t = self.neg(b.tangent)
        else:
            t = self.sub(a.tangent, b.tangent)
        return Dual(p, t)

    def dual_neg(self, a: Dual) -> Dual:
        t = self.zero if a.tangent == self.zero else self.neg(a.tangent)
        return Dual(self.neg(a.primal), t)

    def dual_mul(self, a: Dual, b: Dual) -> Dual:
        p = self.mul(a.primal, b.primal)
        terms = []
        if a.tangent != self.zero:
            terms.append(self.mul(a.tangent, b.primal))
        if b.tangent != self.zero:
            terms.append(self.mul(a.primal, b.tangent))
        if not terms:
            t = self.zero
        elif len(terms) == 1:
            t = terms[0]
        else:
            t = self.add(terms[0], terms[1])
        return Dual(p, t)

    def dual_div(self, a: Dual, b: Dual) -> Dual:
        q = self.div(a.primal, b.primal)
        za, zb = a.tangent == self.zero, b.tangent == self.zero
        if za and zb:
            t = self.zero
        elif zb:
            t = self.div(a.tangent, b.primal)
        else:
            qbt = self.mul(q, b.tangent)
            num = self.neg(qbt) if za else self.sub(a.tangent, qbt)
            t = self.div(num, b.primal)
        return Dual(q, t)

    def dual_exp(self, a: Dual) -> Dual:
        e = self.exp(a.primal)
        t = self.zero if a.tangent == self.zero else self.mul(e, a.tangent)
        return Dual(e, t)

    def dual_ln(self, a: Dual) -> Dual:
        l = self.ln(a.primal)
        t = self.zero if a.tangent == self.zero else self.div(a.tangent, a.primal)
        return Dual(l, t)

    def dual_tanh(self, a: Dual) -> Dual:
        th = self.tanh(a.primal)
        if a.tangent == self.zero:
            t = self.zero
        else:
            sech2 = self.sub(self.one, self.mul(th, th))
            t = self.mul(sech2, a.tangent)
        return Dual(th, t)

    def dual_max0(self, a: Dual) -> Dual:
        r = self.max0(a.primal)
        if a.tangent == self.zero:
            t = self.zero
        else:
            # The gate is the a.e. derivative of max(x, 0); it is locally
            # constant, so recording it as a constant is exact away from 0.
            va = self._val[a.primal]
            gate = (va > 0.0).astype(float) if isinstance(va, np.ndarray) else (1.0 if va > 0.0 else 0.0)
            t = self.mul(self.const(gate), a.tangent)
        return Dual(r, t)

    def dual_powi(self, a: Dual, n: int) -> Dual:
        p = self.powi(a.primal, n)
        if a.tangent == self.zero or n == 0:
            t = self.zero
        else:
            deriv = self.mul(self.const(float(n)), self.powi(a.primal, n - 1))
            t = self.mul(deriv, a.tangent)
        return Dual(p, t)


_COMPUTE = {
    Op.ADD: lambda t, a, b: t.add(a, b),
    Op.SUB: lambda t, a, b: t.sub(a, b),
    Op.MUL: lambda t, a, b: t.mul(a, b),
    Op.DIV: lambda t, a, b: t.div(a, b),
    Op.NEG: lambda t, a: t.neg(a),
    Op.EXP: lambda t, a: t.exp(a),
    Op.LN: lambda t, a: t.ln(a),
    Op.TANH: lambda t, a: t.tanh(a),
    Op.MAX0: lambda t, a: t.max0(a),
}


def record(tape: Tape, op: Op, parents: Sequence[int] = (), value: Value | None = None, aux: int = 0) -> int:
    """Append one node. Leaf ops take an explicit value; arithmetic ops
    compute theirs from the parents. Non-finite results raise RecordError."""
    for p in parents:
        tape._check_parent(p)
    if op == Op.CONST:
        return tape.const(value)
    if op == Op.VAR:
        return tape.var(value)
    if op == Op.POWI:
        (a,) = parents
        return tape.powi(a, aux)
    fn = _COMPUTE.get(op)
    if fn is None:
        raise GraphError(f"unknown op {op}")
    return fn(tape, *parents)


def reverse_sweep(tape: Tape, root: int) -> dict[int, Value]:
    """Chain rule in reverse topological (descending id) order.

    Returns the adjoint d(root)/d(v) for every variable node v. Tape values
    are untouched; the per-node adjoints are also left on ``tape.adjoints``.
    """
    n = len(tape)
    if not 0 <= root < n:
        raise GraphError(f"root {root} is not on the tape")
    ops, pa, pb, aux, val = tape._op, tape._pa, tape._pb, tape._aux, tape._val
    adj: list[Value] = [0.0] * n
    adj[root] = 1.0
    for i in range(root, -1, -1):
        a = adj[i]
        if isinstance(a, float) and a == 0.0 and i != root:
            continue
        op = ops[i]
        if op <= Op.VAR:
            continue
        x = pa[i]
        if op == Op.ADD:
            y = pb[i]
            adj[x] = adj[x] + a
            adj[y] = adj[y] + a
        elif op == Op.SUB:
            y = pb[i]
            adj[x] = adj[x] + a
            adj[y] = adj[y] - a
        elif op == Op.MUL:
            y = pb[i]
            adj[x] = adj[x] + a * val[y]
            adj[y] = adj[y] + a * val[x]
        elif op == Op.DIV:
            y = pb[i]
            adj[x] = adj[x] + a / val[y]
            adj[y] = adj[y] - a * val[i] / val[y]
        elif op == Op.NEG:
            adj[x] = adj[x] - a
        elif op == Op.EXP:
            adj[x] = adj[x] + a * val[i]
        elif op == Op.LN:
            adj[x] = adj[x] + a / val[x]
        elif op == Op.TANH:
            adj[x] = adj[x] + a * (1.0 - val[i] * val[i])
        elif op == Op.MAX0:
            vx = val[x]
            gate = (vx > 0.0).astype(float) if isinstance(vx, np.ndarray) else (1.0 if vx > 0.0 else 0.0)
            adj[x] = adj[x] + a * gate
        elif op == Op.POWI:
            k = aux[i]
            if k != 0:
                adj[x] = adj[x] + a * k * val[x] ** (k - 1)
    tape.adjoints = adj
    return {i: adj[i] for i in range(n) if ops[i] == Op.VAR}


def dual_forward(tape: Tape, inputs: Sequence[Dual], program: Callable[[Tape, Sequence[Dual]], Dual]) -> Dual:
    """Run a program on Duals; the returned tangent is the exact directional
    derivative in the seeded direction and is itself a tape node."""
    seeded = sum(1 for d in inputs if d.tangent == tape.one)
    if seeded > 1:
        raise SeedError(f"{seeded} inputs carry the unit tangent seed, want at most one")
    out = program(tape, inputs)
    if not isinstance(out, Dual):
        raise GraphError("program must return a Dual")
    return out


def grad_check(program: Callable[[Tape, list[int]], int], point: Sequence[float], step: float) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|).

    The central differences for all coordinates are evaluated in a single
    array-valued pass: leaf j carries the vector of probe values.
    """
    point = [float(v) for v in point]
    n = len(point)

    tape = Tape()
    leaves = [tape.var(v) for v in point]
    root = program(tape, leaves)
    grads = reverse_sweep(tape, root)
    analytic = np.array([grads.get(l, 0.0) for l in leaves])

    probes = [np.full(2 * n, v) for v in point]
    for j in range(n):
        probes[j][2 * j] += step
        probes[j][2 * j + 1] -= step
    fd_tape = Tape()
    fd_leaves = [fd_tape.var(p) for p in probes]
    fd_root = program(fd_tape, fd_leaves)
    vals = np.asarray(fd_tape.value(fd_root), dtype=float)
    if vals.ndim == 0:  # constant program
        vals = np.full(2 * n, float(vals))
    fd = (vals[0::2] - vals[1::2]) / (2.0 * step)

    denom = np.maximum(1.0, np.abs(analytic))
    errs = np.abs(analytic - fd) / denom
    return float(errs.max()) if n else 0.0
