"""Reverse-mode automatic differentiation on an explicit tape.

The tape records a scalar computation graph; every node carries a float64
numpy value so one recorded graph can be evaluated at a whole batch of
points simultaneously (the value is then an array over the batch).  Leaves
are parameters or inputs; ``backward`` runs a single reverse sweep and
returns one adjoint per node.

Node count is the memory proxy used everywhere else: ``num_slots`` counts
scalar float64 slots across all recorded values, so it grows linearly with
both the structural size of the graph and the batch width.
"""

from __future__ import annotations

import math

import numpy as np

PRIMITIVES = ("add", "sub", "mul", "div", "tanh", "sin", "cos", "exp", "sqrt", "pow2")

# structured (non-elementwise) opcodes
_STRUCTURED = ("leaf", "affine", "linear_nb", "project", "dotvec", "mean", "sum", "bsum")


class AdDomainError(ArithmeticError):
    """Raised for primitive evaluations outside their domain (div by zero, sqrt of negative)."""


def _as_value(x):
    if isinstance(x, Var):
        raise TypeError("expected a constant, got a tape variable")
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(adj, shape):
    """Reduce an adjoint back to the shape of the operand it belongs to."""
    if adj.shape == shape:
        return adj
    if shape == ():
        return adj.sum()
    extra = adj.ndim - len(shape)
    if extra > 0:
        adj = adj.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and adj.shape[i] != 1)
    if axes:
        adj = adj.sum(axis=axes, keepdims=True)
    return adj


class Var:
    """Handle to one tape node."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape, idx):
        self.tape = tape
        self.idx = idx

    @property
    def value(self):
        return self.tape.values[self.idx]

    def __repr__(self):
        return f"Var(idx={self.idx}, value={self.value!r})"

    def __add__(self, other):
        return self.tape.record("add", self, other)

    def __radd__(self, other):
        return self.tape.record("add", other, self)

    def __sub__(self, other):
        return self.tape.record("sub", self, other)

    def __rsub__(self, other):
        return self.tape.record("sub", other, self)

    def __mul__(self, other):
        return self.tape.record("mul", self, other)

    def __rmul__(self, other):
        return self.tape.record("mul", other, self)

    def __truediv__(self, other):
        return self.tape.record("div", self, other)

    def __rtruediv__(self, other):
        return self.tape.record("div", other, self)

    def __neg__(self):
        return self.tape.record("mul", self, -1.0)

    def tanh(self):
        return self.tape.record("tanh", self)

    def sin(self):
        return self.tape.record("sin", self)

    def cos(self):
        return self.tape.record("cos", self)

    def exp(self):
        return self.tape.record("exp", self)

    def sqrt(self):
        return self.tape.record("sqrt", self)

    def pow2(self):
        return self.tape.record("pow2", self)


class Tape:
    """Append-only record of a computation; topologically ordered by construction."""

    def __init__(self):
        self.ops = []
        self.parents = []   # tuple of parent indices (None for constant operands)
        self.partials = []  # local partials for elementwise ops, aux payload otherwise
        self.values = []
        self.num_slots = 0

    def __len__(self):
        return len(self.ops)

    def _push(self, op, parents, partials, value):
        self.ops.append(op)
        self.parents.append(parents)
        self.partials.append(partials)
        self.values.append(value)
        self.num_slots += value.size
        return Var(self, len(self.ops) - 1)

    def leaf(self, value):
        """Register an input/parameter leaf."""
        return self._push("leaf", (), None, np.asarray(value, dtype=np.float64))

    def constant(self, value):
        # historical alias: constants enter as leaves with no adjoint consumers
        return self.leaf(value)

    def record(self, op, *args):
        """Apply a scalar primitive, appending one node with its local partials.

        Operands may be tape variables or plain constants; constants do not
        become nodes of their own.
        """
        if op in ("add", "sub", "mul", "div"):
            a, b = args
            av = a.value if isinstance(a, Var) else _as_value(a)
            bv = b.value if isinstance(b, Var) else _as_value(b)
            if op == "add":
                val, pa, pb = av + bv, 1.0, 1.0
            elif op == "sub":
                val, pa, pb = av - bv, 1.0, -1.0
            elif op == "mul":
                val, pa, pb = av * bv, bv, av
            else:
                if np.any(bv == 0.0):
                    raise AdDomainError("division by zero on the tape")
                val = av / bv
                pa = 1.0 / bv
                pb = -val / bv
            parents = (a.idx if isinstance(a, Var) else None,
                       b.idx if isinstance(b, Var) else None)
            return self._push(op, parents, (pa, pb), np.asarray(val, dtype=np.float64))

        (x,) = args
        xv = x.value if isinstance(x, Var) else _as_value(x)
        if op == "tanh":
            val = np.tanh(xv)
            partial = 1.0 - val * val
        elif op == "sin":
            val = np.sin(xv)
            partial = np.cos(xv)
        elif op == "cos":
            val = np.cos(xv)
            partial = -np.sin(xv)
        elif op == "exp":
            val = np.exp(xv)
            partial = val
        elif op == "sqrt":
            if np.any(xv < 0.0):
                raise AdDomainError("sqrt of a negative value on the tape")
            val = np.sqrt(xv)
            partial = 0.5 / val
        elif op == "pow2":
            val = xv * xv
            partial = 2.0 * xv
        else:
            raise ValueError(f"unknown primitive {op!r}")
        parent = (x.idx if isinstance(x, Var) else None,)
        return self._push(op, parent, (partial,), np.asarray(val, dtype=np.float64))

    # -- structured ops ------------------------------------------------------

    def affine(self, h, W, b):
        """h @ W.T + b for h (B, in), W (out, in), b (out,)."""
        val = h.value @ W.value.T + b.value
        return self._push("affine", (h.idx, W.idx, b.idx), None, val)

    def linear_nb(self, h, W):
        """h @ W.T without bias (jet coefficients of an affine layer)."""
        val = h.value @ W.value.T
        return self._push("linear_nb", (h.idx, W.idx), None, val)

    def project(self, h, w, b0):
        """Scalar head: h @ w + b0 for h (B, in), w (in,), scalar b0."""
        val = h.value @ w.value + b0.value
        return self._push("project", (h.idx, w.idx, b0.idx), None, val)

    def dotvec(self, h, w):
        """h @ w without bias."""
        val = h.value @ w.value
        return self._push("dotvec", (h.idx, w.idx), None, val)

    def mean(self, x):
        val = np.asarray(x.value.mean(), dtype=np.float64)
        return self._push("mean", (x.idx,), None, val)

    def sum(self, x):
        val = np.asarray(x.value.sum(), dtype=np.float64)
        return self._push("sum", (x.idx,), None, val)

    def bsum(self, x):
        """Sum over the trailing axis: (B, k) -> (B,)."""
        val = x.value.sum(axis=-1)
        return self._push("bsum", (x.idx,), None, val)

    # -- reverse sweep ---------------------------------------------------------

    def backward(self, root):
        """Single reverse sweep from a scalar root; returns one adjoint per node.

        Nodes unreachable from the root keep adjoint None.  Repeated calls are
        independent (fresh adjoint buffers), so several roots of one recorded
        forward pass can be differentiated in sequence.
        """
        ridx = root.idx if isinstance(root, Var) else int(root)
        if self.values[ridx].size != 1:
            raise ValueError("backward requires a scalar root node")
        adj = [None] * len(self.ops)
        adj[ridx] = np.ones_like(self.values[ridx])
        ops, parents, partials, values = self.ops, self.parents, self.partials, self.values
        for i in range(ridx, -1, -1):
            a = adj[i]
            if a is None:
                continue
            op = ops[i]
            if op == "leaf":
                continue
            par = parents[i]
            if op == "affine" or op == "linear_nb" or op == "project" or op == "dotvec":
                h = values[par[0]]
                W = values[par[1]]
                if op == "affine" or op == "linear_nb":
                    _acc(adj, par[0], a @ W)
                    _acc(adj, par[1], a.T @ h)
                    if op == "affine":
                        _acc(adj, par[2], a.sum(axis=0))
                else:
                    _acc(adj, par[0], a[:, None] * W[None, :])
                    _acc(adj, par[1], h.T @ a)
                    if op == "project":
                        _acc(adj, par[2], np.asarray(a.sum()))
            elif op == "mean":
                x = values[par[0]]
                _acc(adj, par[0], np.full_like(x, float(a) / x.size))
            elif op == "sum":
                x = values[par[0]]
                _acc(adj, par[0], np.full_like(x, float(a)))
            elif op == "bsum":
                x = values[par[0]]
                _acc(adj, par[0], np.broadcast_to(a[..., None], x.shape).copy())
            else:
                for p, partial in zip(par, partials[i]):
                    if p is not None:
                        contrib = a * partial
                        shape = values[p].shape
                        if contrib.shape != shape:
                            contrib = _unbroadcast(contrib, shape)
                        _acc(adj, p, contrib)
        return adj


def _acc(adj, idx, contrib):
    cur = adj[idx]
    if cur is None:
        adj[idx] = np.asarray(contrib, dtype=np.float64)
    else:
        cur += contrib


def jet_eval(fn, seed, direction, order):
    """Taylor-jet of a composed primitive function along one input coordinate.

    ``fn`` maps a list of Jets to a Jet using the helpers in :mod:`cpl.jets`;
    ``seed`` is the evaluation point (sequence of floats).  Returns the jet of
    normalized coefficients f^(k)/k! for k = 0..order.
    """
    from .jets import Jet

    if order not in (1, 2, 3):
        raise ValueError("jet order must be 1, 2 or 3")
    args = []
    for i, s in enumerate(seed):
        coeffs = [np.float64(s)] + [None] * order
        if i == direction:
            coeffs[1] = np.float64(1.0)
        args.append(Jet(coeffs))
    return fn(args)


def finite_diff_gradient(f, x, rel_h=1e-5):
    """Central finite differences of a scalar function of a flat vector.

    Independent oracle for backward(); h is scaled per coordinate by
    max(1, |x_i|).
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        h = rel_h * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def finite_diff_derivatives(f, x0, order, h=1e-3, richardson=True):
    """Derivatives of a scalar function of one variable, orders 1..order.

    Central stencils, optionally with one Richardson extrapolation step.
    Used as the oracle for jet coefficients.
    """

    def stencil(h):
        d = []
        if order >= 1:
            d.append((f(x0 + h) - f(x0 - h)) / (2 * h))
        if order >= 2:
            d.append((f(x0 + h) - 2 * f(x0) + f(x0 - h)) / h**2)
        if order >= 3:
            d.append((f(x0 + 2 * h) - 2 * f(x0 + h) + 2 * f(x0 - h) - f(x0 - 2 * h)) / (2 * h**3))
        return np.array(d)

    if not richardson:
        return stencil(h)
    coarse = stencil(h)
    fine = stencil(h / 2.0)
    return (4.0 * fine - coarse) / 3.0


def jet_to_derivatives(jet):
    """Convert normalized Taylor coefficients to raw derivatives f^(k)."""
    out = []
    for k, c in enumerate(jet.coeffs):
        v = 0.0 if c is None else (c.value if isinstance(c, Var) else c)
        out.append(np.asarray(v, dtype=np.float64) * math.factorial(k))
    return out
