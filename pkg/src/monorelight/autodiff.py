"""Reverse-mode automatic differentiation over dynamically built tapes.

The engine operates on float64 numpy arrays. A :class:`Tensor` is one tape
node; ops append nodes in creation order, which is already a valid
topological order for the backward sweep. Every op also accepts plain
ndarrays (returning ndarrays) so the same decoder code runs in a cheap
non-differentiable mode inside inner loops such as sphere tracing, and it
accepts :class:`Jet` values to propagate forward-mode tangents whose
entries are themselves tape nodes. That second layer is what makes spatial
SDF gradients (surface normals, Eikonal terms) differentiable with respect
to network parameters without a general second-order engine.

Conventions:
  * reductions and slicing in code shared between the numpy / Tensor / Jet
    modes must address axes from the end (``axis=-1``, ``x[..., a:b]``)
    because Jet tangents carry extra leading direction axes;
  * non-finite op outputs raise :class:`NonFiniteError` naming the node.
"""

from __future__ import annotations

import itertools

import numpy as np

__all__ = [
    "AutodiffError",
    "NonFiniteError",
    "Tensor",
    "Jet",
    "param",
    "constant",
    "forward",
    "backward",
    "vjp",
    "gradient_check",
    "set_finite_checks",
]


class AutodiffError(RuntimeError):
    """Raised for misuse of the tape (e.g. backward before forward)."""


class NonFiniteError(AutodiffError):
    """Raised when an op produces NaN or infinity; names the node."""


_FINITE_CHECKS = True
_TID = itertools.count()


def set_finite_checks(enabled: bool) -> bool:
    """Toggle per-op finiteness checks; returns the previous setting."""
    global _FINITE_CHECKS
    previous = _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)
    return previous


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """One node of the tape: a value, an optional gradient and its parents."""

    __slots__ = ("value", "grad", "name", "requires_grad", "_parents", "_tid", "_fwd_done")

    def __init__(self, value, parents=(), name=None, requires_grad=False):
        self.value = _as_array(value)
        self.grad = None
        self.name = name
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in parents)
        # constants do not need their ancestry retained
        self._parents = tuple((p, fn) for p, fn in parents if p.requires_grad)
        self._tid = next(_TID)
        self._fwd_done = False
        if _FINITE_CHECKS and not np.all(np.isfinite(self.value)):
            raise NonFiniteError(
                f"non-finite value in node '{self._label()}' with shape {self.value.shape}"
            )

    def _label(self) -> str:
        return self.name if self.name else f"node#{self._tid}"

    # -- python niceties -------------------------------------------------
    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        return f"Tensor({self._label()}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, idx):
        return getitem(self, idx)


class Jet:
    """Forward-mode pair (primal, tangent); tangent has leading direction axes.

    Both halves may be ndarrays or Tensors. With Tensor halves, the tangent
    of an SDF evaluated at seeded unit directions is the spatial gradient as
    a tape node, so losses built from it backpropagate into parameters.
    """

    __slots__ = ("primal", "tangent")

    def __init__(self, primal, tangent):
        self.primal = primal
        self.tangent = tangent

    def __repr__(self):
        return f"Jet(primal={self.primal!r})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def param(name: str, value) -> Tensor:
    """Create a named differentiable leaf."""
    return Tensor(value, name=name, requires_grad=True)


def constant(value, name=None) -> Tensor:
    return Tensor(value, name=name)


def _is_jet(x) -> bool:
    return isinstance(x, Jet)


def _is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def _value(x):
    if _is_tensor(x):
        return x.value
    return x


# ---------------------------------------------------------------------------
# elementwise binary ops
# ---------------------------------------------------------------------------


def add(a, b):
    if _is_jet(a) or _is_jet(b):
        pa, ta = (a.primal, a.tangent) if _is_jet(a) else (a, 0.0)
        pb, tb = (b.primal, b.tangent) if _is_jet(b) else (b, 0.0)
        return Jet(add(pa, pb), add(ta, tb))
    if _is_tensor(a) or _is_tensor(b):
        if not _is_tensor(a):
            a = constant(a)
        if not _is_tensor(b):
            b = constant(b)
        out = Tensor(
            a.value + b.value,
            parents=(
                (a, lambda g: _unbroadcast(g, a.value.shape)),
                (b, lambda g: _unbroadcast(g, b.value.shape)),
            ),
            name="add",
        )
        return out
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return a + b
    return _as_array(a) + _as_array(b)


def sub(a, b):
    return add(a, mul(b, -1.0))


def mul(a, b):
    if _is_jet(a) or _is_jet(b):
        pa, ta = (a.primal, a.tangent) if _is_jet(a) else (a, None)
        pb, tb = (b.primal, b.tangent) if _is_jet(b) else (b, None)
        tangent = 0.0
        if ta is not None:
            tangent = add(tangent, mul(ta, pb))
        if tb is not None:
            tangent = add(tangent, mul(pa, tb))
        return Jet(mul(pa, pb), tangent)
    if _is_tensor(a) or _is_tensor(b):
        if not _is_tensor(a):
            a = constant(a)
        if not _is_tensor(b):
            b = constant(b)
        av, bv = a.value, b.value
        return Tensor(
            av * bv,
            parents=(
                (a, lambda g: _unbroadcast(g * bv, av.shape)),
                (b, lambda g: _unbroadcast(g * av, bv.shape)),
            ),
            name="mul",
        )
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return a * b
    return _as_array(a) * _as_array(b)


def div(a, b):
    if _is_jet(a) or _is_jet(b):
        pa, ta = (a.primal, a.tangent) if _is_jet(a) else (a, None)
        pb, tb = (b.primal, b.tangent) if _is_jet(b) else (b, None)
        out = div(pa, pb)
        tangent = 0.0
        if ta is not None:
            tangent = add(tangent, div(ta, pb))
        if tb is not None:
            tangent = sub(tangent, div(mul(out, tb), pb))
        return Jet(out, tangent)
    if _is_tensor(a) or _is_tensor(b):
        if not _is_tensor(a):
            a = constant(a)
        if not _is_tensor(b):
            b = constant(b)
        av, bv = a.value, b.value
        out_v = av / bv
        return Tensor(
            out_v,
            parents=(
                (a, lambda g: _unbroadcast(g / bv, av.shape)),
                (b, lambda g: _unbroadcast(-g * out_v / bv, bv.shape)),
            ),
            name="div",
        )
    return _as_array(a) / _as_array(b)


def maximum(a, b):
    """Elementwise max; ties route the gradient to the first argument."""
    if _is_jet(a) or _is_jet(b):
        pa, ta = (a.primal, a.tangent) if _is_jet(a) else (a, 0.0)
        pb, tb = (b.primal, b.tangent) if _is_jet(b) else (b, 0.0)
        mask = (_value(pa) >= _value(pb)).astype(np.float64)
        return Jet(maximum(pa, pb), add(mul(ta, mask), mul(tb, 1.0 - mask)))
    if _is_tensor(a) or _is_tensor(b):
        if not _is_tensor(a):
            a = constant(a)
        if not _is_tensor(b):
            b = constant(b)
        av, bv = a.value, b.value
        mask = (av >= bv).astype(np.float64)
        return Tensor(
            np.maximum(av, bv),
            parents=(
                (a, lambda g: _unbroadcast(g * mask, av.shape)),
                (b, lambda g: _unbroadcast(g * (1.0 - mask), bv.shape)),
            ),
            name="maximum",
        )
    return np.maximum(_as_array(a), _as_array(b))


def minimum(a, b):
    if _is_jet(a) or _is_jet(b) or _is_tensor(a) or _is_tensor(b):
        return mul(maximum(mul(a, -1.0), mul(b, -1.0)), -1.0)
    return np.minimum(_as_array(a), _as_array(b))


def clip(x, lo, hi):
    return minimum(maximum(x, lo), hi)


def power(x, exponent: float):
    """x ** exponent with a constant exponent."""
    if _is_jet(x):
        return Jet(power(x.primal, exponent),
                   mul(mul(power(x.primal, exponent - 1.0), exponent), x.tangent))
    if _is_tensor(x):
        xv = x.value
        return Tensor(
            xv ** exponent,
            parents=((x, lambda g: _unbroadcast(g * exponent * xv ** (exponent - 1.0), xv.shape)),),
            name="pow",
        )
    return _as_array(x) ** exponent


# ---------------------------------------------------------------------------
# matmul
# ---------------------------------------------------------------------------


def matmul(a, b):
    """Matrix product; supports stacked leading axes on either side."""
    if _is_jet(a) or _is_jet(b):
        pa, ta = (a.primal, a.tangent) if _is_jet(a) else (a, None)
        pb, tb = (b.primal, b.tangent) if _is_jet(b) else (b, None)
        tangent = 0.0
        if ta is not None:
            tangent = add(tangent, matmul(ta, pb))
        if tb is not None:
            tangent = add(tangent, matmul(pa, tb))
        return Jet(matmul(pa, pb), tangent)
    if _is_tensor(a) or _is_tensor(b):
        if not _is_tensor(a):
            a = constant(a)
        if not _is_tensor(b):
            b = constant(b)
        av, bv = a.value, b.value
        return Tensor(
            av @ bv,
            parents=(
                (a, lambda g: _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)),
                (b, lambda g: _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)),
            ),
            name="matmul",
        )
    return _as_array(a) @ _as_array(b)


# ---------------------------------------------------------------------------
# elementwise unary ops
# ---------------------------------------------------------------------------


def _unary(x, fn_value, fn_grad, name):
    """Tensor / ndarray unary op; Jet rules are written per-op because the
    local derivative must itself stay on the tape for second-order use."""
    if _is_tensor(x):
        xv = x.value
        with np.errstate(all="ignore"):  # non-finite outputs raise below
            out_v = fn_value(xv)
        return Tensor(out_v, parents=((x, lambda g: g * fn_grad(xv)),), name=name)
    return fn_value(_as_array(x))


def exp(x):
    if _is_jet(x):
        out = exp(x.primal)
        return Jet(out, mul(x.tangent, out))
    return _unary(x, np.exp, np.exp, "exp")


def log(x):
    if _is_jet(x):
        return Jet(log(x.primal), div(x.tangent, x.primal))
    return _unary(x, np.log, lambda v: 1.0 / v, "log")


def sqrt(x):
    if _is_jet(x):
        out = sqrt(x.primal)
        return Jet(out, div(x.tangent, mul(out, 2.0)))
    return _unary(x, np.sqrt, lambda v: 0.5 / np.sqrt(v), "sqrt")


def sin(x):
    if _is_jet(x):
        return Jet(sin(x.primal), mul(x.tangent, cos(x.primal)))
    return _unary(x, np.sin, np.cos, "sin")


def cos(x):
    if _is_jet(x):
        return Jet(cos(x.primal), mul(x.tangent, mul(sin(x.primal), -1.0)))
    return _unary(x, np.cos, lambda v: -np.sin(v), "cos")


def tanh(x):
    if _is_jet(x):
        out = tanh(x.primal)
        return Jet(out, mul(x.tangent, sub(1.0, mul(out, out))))
    return _unary(x, np.tanh, lambda v: 1.0 - np.tanh(v) ** 2, "tanh")


def _sigmoid_value(v):
    v = _as_array(v)
    pos = 1.0 / (1.0 + np.exp(-np.abs(v)))
    return np.where(v >= 0, pos, 1.0 - pos)


def sigmoid(x):
    if _is_jet(x):
        out = sigmoid(x.primal)
        return Jet(out, mul(x.tangent, mul(out, sub(1.0, out))))
    return _unary(x, _sigmoid_value, lambda v: _sigmoid_value(v) * (1.0 - _sigmoid_value(v)), "sigmoid")


def softplus(x, beta: float = 1.0):
    """log(1 + exp(beta x)) / beta, numerically stable for large |x|."""
    if _is_jet(x):
        return Jet(softplus(x.primal, beta), mul(x.tangent, sigmoid(mul(x.primal, beta))))

    def value(v):
        return np.logaddexp(0.0, beta * v) / beta

    def grad(v):
        return _sigmoid_value(beta * v)

    return _unary(x, value, grad, "softplus")


def absolute(x):
    """|x| with sign subgradient (0 at the kink)."""
    if _is_jet(x):
        sign = np.sign(_value(x.primal))
        return Jet(absolute(x.primal), mul(x.tangent, sign))
    return _unary(x, np.abs, np.sign, "abs")


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------


def reduce_sum(x, axis=None, keepdims: bool = False):
    if _is_jet(x):
        # Jet tangents carry leading direction axes; only end-relative axes
        # keep primal and tangent reductions aligned.
        if axis is not None and not _axis_from_end(axis):
            raise AutodiffError("Jet reductions require negative axis indices")
        return Jet(reduce_sum(x.primal, axis, keepdims), reduce_sum(x.tangent, axis, keepdims))
    if _is_tensor(x):
        xv = x.value

        def vjp_fn(g):
            if axis is None:
                return np.broadcast_to(g, xv.shape).copy()
            gg = g
            if not keepdims:
                gg = np.expand_dims(g, axis)
            return np.broadcast_to(gg, xv.shape).copy()

        return Tensor(xv.sum(axis=axis, keepdims=keepdims), parents=((x, vjp_fn),), name="sum")
    return _as_array(x).sum(axis=axis, keepdims=keepdims)


def _axis_from_end(axis) -> bool:
    axes = axis if isinstance(axis, tuple) else (axis,)
    return all(a < 0 for a in axes)


def reduce_mean(x, axis=None, keepdims: bool = False):
    v = _value(x.primal) if _is_jet(x) else _value(x)
    if axis is None:
        n = v.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for a in axes:
            n *= v.shape[a]
    return div(reduce_sum(x, axis, keepdims), float(n))


def l2norm(x, axis=-1, keepdims: bool = False):
    """Euclidean norm along ``axis`` with a zero subgradient at the origin."""
    if _is_jet(x):
        n = l2norm(x.primal, axis=axis, keepdims=True)
        safe = maximum(n, 1e-300)
        t = div(reduce_sum(mul(x.primal, x.tangent), axis=axis, keepdims=True), safe)
        if not keepdims:
            n = squeeze(n, axis)
            t = squeeze(t, axis)
        return Jet(n, t)
    if _is_tensor(x):
        xv = x.value
        nv = np.sqrt(np.sum(xv * xv, axis=axis, keepdims=True))

        def vjp_fn(g):
            gg = g if keepdims else np.expand_dims(g, axis)
            with np.errstate(invalid="ignore", divide="ignore"):
                d = np.where(nv > 0, xv / np.where(nv > 0, nv, 1.0), 0.0)
            return gg * d

        out_v = nv if keepdims else np.squeeze(nv, axis=axis)
        return Tensor(out_v, parents=((x, vjp_fn),), name="l2norm")
    xv = _as_array(x)
    return np.sqrt(np.sum(xv * xv, axis=axis, keepdims=keepdims))


def squeeze(x, axis):
    if _is_jet(x):
        return Jet(squeeze(x.primal, axis), squeeze(x.tangent, axis))
    if _is_tensor(x):
        xv = x.value
        return Tensor(np.squeeze(xv, axis=axis), parents=((x, lambda g: g.reshape(xv.shape)),), name="squeeze")
    return np.squeeze(_as_array(x), axis=axis)


def reshape(x, shape):
    if _is_tensor(x):
        xv = x.value
        return Tensor(xv.reshape(shape), parents=((x, lambda g: g.reshape(xv.shape)),), name="reshape")
    return _as_array(x).reshape(shape)


def concat(parts, axis=-1):
    """Concatenate along an end-relative axis (Jet-safe)."""
    if any(_is_jet(p) for p in parts):
        if axis >= 0:
            raise AutodiffError("Jet concat requires a negative axis")
        prim = []
        tang = []
        for p in parts:
            if _is_jet(p):
                prim.append(p.primal)
                tang.append(p.tangent)
            else:
                prim.append(p)
                tang.append(mul(p, 0.0))
        # tangents may carry broadcast leading direction axes; align first
        tang = _broadcast_tangents(prim, tang)
        return Jet(concat(prim, axis), concat(tang, axis))
    if any(_is_tensor(p) for p in parts):
        parts = [p if _is_tensor(p) else constant(p) for p in parts]
        values = [p.value for p in parts]
        out = np.concatenate(values, axis=axis)
        sizes = [v.shape[axis] for v in values]
        offsets = np.cumsum([0] + sizes)

        def make_vjp(i):
            lo, hi = offsets[i], offsets[i + 1]

            def vjp_fn(g):
                slicer = [slice(None)] * g.ndim
                slicer[axis] = slice(lo, hi)
                return g[tuple(slicer)]

            return vjp_fn

        return Tensor(out, parents=tuple((p, make_vjp(i)) for i, p in enumerate(parts)), name="concat")
    return np.concatenate([_as_array(p) for p in parts], axis=axis)


def _broadcast_tangents(primals, tangents):
    """Broadcast zero/low-rank tangents so concat sees consistent shapes."""
    lead_ndim = 0
    for p, t in zip(primals, tangents):
        extra = np.ndim(_value(t)) - np.ndim(_value(p))
        lead_ndim = max(lead_ndim, extra)
    lead_shape = None
    for p, t in zip(primals, tangents):
        if np.ndim(_value(t)) - np.ndim(_value(p)) == lead_ndim and lead_ndim > 0:
            lead_shape = np.shape(_value(t))[:lead_ndim]
            break
    out = []
    for p, t in zip(primals, tangents):
        tv = _value(t)
        pv = _value(p)
        if np.ndim(tv) < np.ndim(pv) + lead_ndim and lead_shape is not None:
            target = lead_shape + np.shape(pv)
            out.append(broadcast_to(t, target))
        else:
            out.append(t)
    return out


def broadcast_to(x, shape):
    if _is_tensor(x):
        xv = x.value
        return Tensor(
            np.broadcast_to(xv, shape).copy(),
            parents=((x, lambda g: _unbroadcast(g, xv.shape)),),
            name="broadcast",
        )
    return np.broadcast_to(_as_array(x), shape).copy()


def getitem(x, idx):
    if _is_jet(x):
        if not isinstance(idx, tuple):
            idx = (idx,)
        if not all(isinstance(i, slice) or i is Ellipsis for i in idx):
            raise AutodiffError("Jet getitem supports only slices / ellipsis")
        if idx and idx[0] is not Ellipsis:
            idx = (Ellipsis,) + tuple(i for i in idx if i is not Ellipsis)
        return Jet(getitem(x.primal, idx), getitem(x.tangent, idx))
    if _is_tensor(x):
        xv = x.value
        has_int_index = any(
            isinstance(i, np.ndarray) and i.dtype.kind in "iu"
            for i in (idx if isinstance(idx, tuple) else (idx,))
        )

        def vjp_fn(g):
            out = np.zeros_like(xv)
            if has_int_index:
                # integer gathers may repeat rows; scatter-add
                np.add.at(out, idx, g)
            else:
                out[idx] += g
            return out

        return Tensor(xv[idx], parents=((x, vjp_fn),), name="getitem")
    return _as_array(x)[idx]


def take_last(x, start, stop):
    """Slice the final axis; works across numpy / Tensor / Jet."""
    return getitem(x, (Ellipsis, slice(start, stop)))


def gather_rows(x, index: np.ndarray):
    """Select rows by integer index with scatter-add backward."""
    index = np.asarray(index, dtype=np.intp)
    return getitem(x, index)


def where(mask, a, b):
    """Select by a constant boolean mask."""
    mask = np.asarray(mask)
    m = mask.astype(np.float64)
    return add(mul(a, m), mul(b, 1.0 - m))


def detach(x):
    """Cut the tape: the result is a constant with the same value."""
    if _is_tensor(x):
        return constant(x.value.copy())
    return _as_array(x).copy()


def stack_last(parts):
    """Stack equally shaped arrays along a new final axis."""
    expanded = [reshape(p, _value(p).shape + (1,)) for p in parts]
    return concat(expanded, axis=-1)


# ---------------------------------------------------------------------------
# forward / backward protocol
# ---------------------------------------------------------------------------


def forward(root: Tensor) -> float:
    """Validate and return the scalar value at the root of a graph.

    All node values are populated at construction time; this checks the
    root is a finite scalar and arms it for :func:`backward`.
    """
    if not _is_tensor(root):
        raise AutodiffError("forward expects a Tensor root")
    if root.value.size != 1:
        raise AutodiffError(f"forward root must be scalar, got shape {root.value.shape}")
    if not np.all(np.isfinite(root.value)):
        raise NonFiniteError(f"non-finite value at root '{root._label()}'")
    root._fwd_done = True
    return float(root.value)


def _toposort_from(root: Tensor):
    seen = {id(root)}
    nodes = [root]
    stack = [root]
    while stack:
        node = stack.pop()
        for parent, _ in node._parents:
            if id(parent) not in seen:
                seen.add(id(parent))
                nodes.append(parent)
                stack.append(parent)
    nodes.sort(key=lambda n: n._tid, reverse=True)
    return nodes


def backward(root: Tensor) -> dict:
    """Reverse sweep from a scalar root; returns {leaf name: gradient}.

    Also stores gradients on every reachable leaf's ``.grad``. Requires a
    prior :func:`forward` call on the same root.
    """
    if not root._fwd_done:
        raise AutodiffError("backward called before forward on this root")
    return vjp(root, np.ones_like(root.value))


def vjp(root: Tensor, seed: np.ndarray) -> dict:
    """Backward sweep with an explicit adjoint seed at the root."""
    seed = _as_array(seed)
    if seed.shape != root.value.shape:
        raise AutodiffError("seed shape must match the root value shape")
    pending = {id(root): seed}
    grads: dict = {}
    for node in _toposort_from(root):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node._parents:
            for parent, vjp_fn in node._parents:
                contrib = vjp_fn(g)
                if _FINITE_CHECKS and not np.all(np.isfinite(contrib)):
                    raise NonFiniteError(
                        f"non-finite gradient flowing into '{parent._label()}' "
                        f"from '{node._label()}'"
                    )
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + contrib
                else:
                    pending[key] = contrib
        else:
            node.grad = g if node.grad is None else node.grad + g
            if node.name is not None:
                if node.name in grads:
                    grads[node.name] = grads[node.name] + g
                else:
                    grads[node.name] = g
    return grads


def gradient_check(fn, point: np.ndarray, step: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference grads.

    ``fn`` maps a Tensor leaf (same shape as ``point``) to a scalar Tensor.
    The error for each coordinate is |analytic - numeric| / max(1, |analytic|).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    point = _as_array(point)
    leaf = param("gradient_check/x", point.copy())
    out = fn(leaf)
    forward(out)
    backward(out)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(point)
    analytic = analytic.reshape(point.shape)

    flat = point.ravel()
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        perturbed = flat.copy()
        perturbed[i] = flat[i] + step
        hi = fn(Tensor(perturbed.reshape(point.shape)))
        perturbed[i] = flat[i] - step
        lo = fn(Tensor(perturbed.reshape(point.shape)))
        hi_v, lo_v = float(hi.value), float(lo.value)
        if not (np.isfinite(hi_v) and np.isfinite(lo_v)):
            raise NonFiniteError(f"function non-finite near coordinate {i} during gradient_check")
        numeric[i] = (hi_v - lo_v) / (2.0 * step)
    numeric = numeric.reshape(point.shape)
    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom))
