"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every helper here is operand-generic: called with plain floats or ndarrays
it computes in numpy and returns a plain value; called with at least one
`Var` it records a node so `backward` can later accumulate vector-Jacobian
products in reverse topological order. Numerical code written once against
these helpers therefore serves both fast evaluation and exact gradients,
which is how the unrolled ODE solves inside training losses are
differentiated.

Only the primitives the dynamics models need are provided (affine maps,
tanh, log, elementwise arithmetic, slicing, concatenation). Var-against-Var
arithmetic assumes matching shapes; there is no broadcasting between Vars.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Var",
    "const",
    "affine",
    "tanh",
    "log",
    "exp",
    "add_n",
    "total",
    "concat",
    "slice_reshape",
    "backward",
    "find_nonfinite",
]


class Var:
    """One tape node: a value plus the recipe for its local gradients."""

    __slots__ = ("value", "parents", "vjp", "grad", "op")

    def __init__(self, value, parents=(), vjp=None, op="leaf"):
        self.value = np.asarray(value, dtype=float)
        self.parents = parents
        self.vjp = vjp
        self.grad = None
        self.op = op

    # --- elementwise arithmetic -------------------------------------
    def __add__(self, other):
        if isinstance(other, Var):
            out = Var(self.value + other.value, (self, other), op="add")
            out.vjp = lambda g: (g, g)
            return out
        out = Var(self.value + other, (self,), op="add")
        out.vjp = lambda g: (g,)
        return out

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            out = Var(self.value - other.value, (self, other), op="sub")
            out.vjp = lambda g: (g, -g)
            return out
        out = Var(self.value - other, (self,), op="sub")
        out.vjp = lambda g: (g,)
        return out

    def __rsub__(self, other):
        out = Var(other - self.value, (self,), op="rsub")
        out.vjp = lambda g: (-g,)
        return out

    def __mul__(self, other):
        if isinstance(other, Var):
            out = Var(self.value * other.value, (self, other), op="mul")
            a, b = self.value, other.value
            out.vjp = lambda g: (b * g, a * g)
            return out
        out = Var(self.value * other, (self,), op="mul")
        out.vjp = lambda g, c=other: (c * g,)
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            out = Var(self.value / other.value, (self, other), op="div")
            a, b = self.value, other.value
            out.vjp = lambda g: (g / b, -a / (b * b) * g)
            return out
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        out = Var(other / self.value, (self,), op="rdiv")
        v = self.value
        out.vjp = lambda g, c=other: (-c / (v * v) * g,)
        return out

    def __neg__(self):
        out = Var(-self.value, (self,), op="neg")
        out.vjp = lambda g: (-g,)
        return out


def const(value) -> Var:
    """Wrap a constant as a leaf Var that receives no gradient."""
    return Var(value, (), None, op="const")


def _any_var(items) -> bool:
    return any(isinstance(x, Var) for x in items)


def affine(W, b, x):
    """W @ x + b, the fused building block of one MLP layer."""
    if not _any_var((W, b, x)):
        return W @ x + b
    Wv = W if isinstance(W, Var) else const(W)
    bv = b if isinstance(b, Var) else const(b)
    xv = x if isinstance(x, Var) else const(x)
    out = Var(Wv.value @ xv.value + bv.value, (Wv, bv, xv), op="affine")
    Wval, xval = Wv.value, xv.value
    out.vjp = lambda g: (np.outer(g, xval), g, Wval.T @ g)
    return out


def tanh(x):
    if not isinstance(x, Var):
        return np.tanh(x)
    y = np.tanh(x.value)
    out = Var(y, (x,), op="tanh")
    out.vjp = lambda g: ((1.0 - y * y) * g,)
    return out


def log(x):
    if not isinstance(x, Var):
        return np.log(x)
    out = Var(np.log(x.value), (x,), op="log")
    v = x.value
    out.vjp = lambda g: (g / v,)
    return out


def exp(x):
    if not isinstance(x, Var):
        return np.exp(x)
    y = np.exp(x.value)
    out = Var(y, (x,), op="exp")
    out.vjp = lambda g: (y * g,)
    return out


def add_n(items):
    """Sum a sequence in one node (cheaper than a chain of binary adds)."""
    if not _any_var(items):
        return sum(items)
    vars_ = tuple(x if isinstance(x, Var) else const(x) for x in items)
    total = vars_[0].value.copy()
    for v in vars_[1:]:
        total += v.value
    out = Var(total, vars_, op="add_n")
    k = len(vars_)
    out.vjp = lambda g: (g,) * k
    return out


def total(x):
    """Sum all entries down to a single-element value."""
    if not isinstance(x, Var):
        return np.sum(x, keepdims=True)
    out = Var(np.sum(x.value, keepdims=True), (x,), op="total")
    n = x.value.shape
    out.vjp = lambda g: (np.broadcast_to(g, n).copy(),)
    return out


def concat(items):
    """Concatenate 1-d pieces; gradient slices back into each piece."""
    if not _any_var(items):
        return np.concatenate([np.atleast_1d(np.asarray(x, float)) for x in items])
    vars_ = tuple(x if isinstance(x, Var) else const(np.atleast_1d(x)) for x in items)
    values = [np.atleast_1d(v.value) for v in vars_]
    out = Var(np.concatenate(values), vars_, op="concat")
    bounds = np.cumsum([0] + [v.size for v in values])
    out.vjp = lambda g: tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(vars_)))
    return out


def slice_reshape(x, start, stop, shape):
    """View x[start:stop] as `shape`; gradient scatters back into place."""
    if not isinstance(x, Var):
        return x[start:stop].reshape(shape)
    out = Var(x.value[start:stop].reshape(shape), (x,), op="slice")
    n = x.value.size

    def vjp(g):
        full = np.zeros(n)
        full[start:stop] = np.ravel(g)
        return (full,)

    out.vjp = vjp
    return out


def _topo_order(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Var) -> None:
    """Populate .grad on every node reachable from root (seeded with ones)."""
    order = _topo_order(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        g = node.grad
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if parent.grad is None:
                # vjps may hand back g itself (or a view of it); copy before
                # another sibling accumulates in place.
                if pg is g or getattr(pg, "base", None) is g:
                    pg = pg.copy()
                parent.grad = pg
            else:
                np.add(parent.grad, pg, out=parent.grad)


def find_nonfinite(root: Var):
    """First node (forward order) with a non-finite value, or None."""
    for i, node in enumerate(_topo_order(root)):
        if not np.all(np.isfinite(node.value)):
            return f"node #{i} (op '{node.op}')"
    return None
