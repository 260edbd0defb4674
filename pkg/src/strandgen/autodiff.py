"""Reverse-mode automatic differentiation on dense numpy arrays.

Forward evaluation is eager, but every node records its parents together
with forward/backward closures, so a graph can be re-evaluated after leaf
mutation (used by the finite-difference checker) and differentiated once
per node in reverse topological order.  float32 is the working precision
for training; gradient checks run the same graphs in float64.

Also hosts the optimizers used across the toolkit: AdamW with decoupled
weight decay (Adam = weight_decay 0) and exponential moving averages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class Tensor:
    """A node in the recorded computation graph."""

    __slots__ = ("data", "requires_grad", "parents", "op", "_fwd", "_bwd")

    def __init__(self, data, requires_grad=False, parents=(), op="leaf",
                 fwd=None, bwd=None):
        if isinstance(data, Tensor):
            raise TypeError("cannot wrap a Tensor in a Tensor")
        if not isinstance(data, np.ndarray):
            # keep the dtype of numpy scalars (full reductions return those)
            data = np.asarray(data)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(DEFAULT_DTYPE)
        self.data = data
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in parents)
        self.parents = tuple(parents)
        self.op = op
        self._fwd = fwd
        self._bwd = bwd

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.data.shape}, grad={self.requires_grad})"

    # operator sugar (scalars and arrays lift to constant leaves)
    def _lift(self, other):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        return add(self, self._lift(other))

    def __radd__(self, other):
        return add(self._lift(other), self)

    def __sub__(self, other):
        return sub(self, self._lift(other))

    def __rsub__(self, other):
        return sub(self._lift(other), self)

    def __mul__(self, other):
        return mul(self, self._lift(other))

    def __rmul__(self, other):
        return mul(self._lift(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, self._lift(other))


def _node(op, parents, fwd, bwd):
    data = fwd(*[p.data for p in parents])
    return Tensor(data, parents=parents, op=op, fwd=fwd, bwd=bwd)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise ops

def _pair(a, b):
    """Lift plain scalars/arrays to constant leaves (dtype of the Tensor side)."""
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.data.dtype))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.data.dtype))
    return a, b


def add(a, b):
    a, b = _pair(a, b)
    return _node("add", (a, b),
                 lambda x, y: x + y,
                 lambda ps, out, g: (_unbroadcast(g, ps[0].shape),
                                     _unbroadcast(g, ps[1].shape)))


def sub(a, b):
    a, b = _pair(a, b)
    return _node("sub", (a, b),
                 lambda x, y: x - y,
                 lambda ps, out, g: (_unbroadcast(g, ps[0].shape),
                                     _unbroadcast(-g, ps[1].shape)))


def mul(a, b):
    a, b = _pair(a, b)
    return _node("mul", (a, b),
                 lambda x, y: x * y,
                 lambda ps, out, g: (_unbroadcast(g * ps[1], ps[0].shape),
                                     _unbroadcast(g * ps[0], ps[1].shape)))


def neg(a):
    return _node("neg", (a,), lambda x: -x, lambda ps, out, g: (-g,))


def exp(a):
    return _node("exp", (a,), np.exp, lambda ps, out, g: (g * out,))


def silu(a):
    def fwd(x):
        s = 1.0 / (1.0 + np.exp(-x))
        return x * s

    def bwd(ps, out, g):
        x = ps[0]
        s = 1.0 / (1.0 + np.exp(-x))
        return (g * (s * (1.0 + x * (1.0 - s))),)

    return _node("silu", (a,), fwd, bwd)


def softmax(a):
    """Softmax along the last axis."""

    def fwd(x):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def bwd(ps, out, g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _node("softmax", (a,), fwd, bwd)


# ---------------------------------------------------------------------------
# linear algebra / shape ops

def matmul(a, b):
    def bwd(ps, out, g):
        x, y = ps
        return (g @ y.T, x.T @ g)

    return _node("matmul", (a, b), lambda x, y: x @ y, bwd)


def transpose(a, axes=None):
    def fwd(x):
        return np.transpose(x, axes)

    def bwd(ps, out, g):
        inv = None if axes is None else np.argsort(axes)
        return (np.transpose(g, inv),)

    return _node("transpose", (a,), fwd, bwd)


def reshape(a, shape):
    shape = tuple(shape)

    def bwd(ps, out, g):
        return (g.reshape(ps[0].shape),)

    return _node("reshape", (a,), lambda x: x.reshape(shape), bwd)


def concat(tensors, axis=0):
    tensors = tuple(tensors)
    if not tensors:
        raise ValueError("concat of empty sequence")

    def fwd(*xs):
        return np.concatenate(xs, axis=axis)

    def bwd(ps, out, g):
        sizes = [p.shape[axis] for p in ps]
        splits = np.cumsum(sizes)[:-1]
        return tuple(np.split(g, splits, axis=axis))

    return _node("concat", tensors, fwd, bwd)


def slice_(a, key):
    """Basic (non-overlapping) slicing; `key` is anything ndarray[key] accepts
    as a basic index (slices / ints / tuples thereof)."""

    def fwd(x):
        return x[key]

    def bwd(ps, out, g):
        gx = np.zeros_like(ps[0])
        gx[key] = g
        return (gx,)

    return _node("slice", (a,), fwd, bwd)


def reduce_sum(a, axis=None, keepdims=False):
    def fwd(x):
        return x.sum(axis=axis, keepdims=keepdims)

    def bwd(ps, out, g):
        x = ps[0]
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        axes = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node("reduce_sum", (a,), fwd, bwd)


def reduce_mean(a, axis=None, keepdims=False):
    def fwd(x):
        return x.mean(axis=axis, keepdims=keepdims)

    def bwd(ps, out, g):
        x = ps[0]
        if axis is None:
            n = x.size
            return (np.broadcast_to(g / n, x.shape).copy(),)
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([x.shape[ax] for ax in axes]))
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return _node("reduce_mean", (a,), fwd, bwd)


# ---------------------------------------------------------------------------
# 2-D image ops (channel-first layout: (C, H, W))

def conv2d(x, w, b=None, stride=1):
    """2-D convolution with symmetric k//2 padding ("same" for stride 1).

    x: (C, H, W), w: (O, C, kh, kw), b: (O,) or None.  Output spatial size is
    H/stride (stride must divide H and W for strided use).  Implemented as
    im2col + one GEMM per direction.
    """
    parents = (x, w) if b is None else (x, w, b)

    def geom(xs, ws):
        _, H, W = xs
        O, C, kh, kw = ws
        ph, pw = kh // 2, kw // 2
        Ho = (H + 2 * ph - kh) // stride + 1
        Wo = (W + 2 * pw - kw) // stride + 1
        return ph, pw, Ho, Wo

    def im2col(xd, wd):
        C = xd.shape[0]
        O, _, kh, kw = wd.shape
        ph, pw, Ho, Wo = geom(xd.shape, wd.shape)
        xp = np.pad(xd, ((0, 0), (ph, ph), (pw, pw)))
        hs = (Ho - 1) * stride + 1
        ws_ = (Wo - 1) * stride + 1
        cols = np.empty((C, kh, kw, Ho, Wo), dtype=xd.dtype)
        for di in range(kh):
            for dj in range(kw):
                cols[:, di, dj] = xp[:, di:di + hs:stride, dj:dj + ws_:stride]
        return cols.reshape(C * kh * kw, Ho * Wo)

    def fwd(xd, wd, bd=None):
        O, C, kh, kw = wd.shape
        _, _, Ho, Wo = geom(xd.shape, wd.shape)
        cols = im2col(xd, wd)
        out = (wd.reshape(O, C * kh * kw) @ cols).reshape(O, Ho, Wo)
        if bd is not None:
            out += bd[:, None, None]
        return out

    def bwd(ps, out, g):
        xd, wd = ps[0], ps[1]
        O, C, kh, kw = wd.shape
        ph, pw, Ho, Wo = geom(xd.shape, wd.shape)
        g_mat = g.reshape(O, Ho * Wo)
        cols = im2col(xd, wd)
        gw = (g_mat @ cols.T).reshape(wd.shape)
        gcols = (wd.reshape(O, C * kh * kw).T @ g_mat).reshape(
            C, kh, kw, Ho, Wo)
        H, W = xd.shape[1:]
        gxp = np.zeros((C, H + 2 * ph, W + 2 * pw), dtype=xd.dtype)
        hs = (Ho - 1) * stride + 1
        ws_ = (Wo - 1) * stride + 1
        for di in range(kh):
            for dj in range(kw):
                gxp[:, di:di + hs:stride, dj:dj + ws_:stride] += gcols[:, di, dj]
        gx = gxp[:, ph:ph + H, pw:pw + W]
        grads = [gx, gw]
        if len(ps) == 3:
            grads.append(g.sum(axis=(1, 2)))
        return tuple(grads)

    return _node("conv2d", parents, fwd, bwd)


def group_norm(x, num_groups, eps=1e-5):
    """Per-group normalization of (C, H, W) to zero mean / unit variance.

    Affine scale/shift is applied by the caller with broadcast mul/add so
    their gradients fall out of those ops.
    """
    C = x.data.shape[0]
    if C % num_groups != 0:
        raise ValueError(f"channels {C} not divisible by groups {num_groups}")

    def fwd(xd):
        v = xd.reshape(num_groups, -1)
        mu = v.mean(axis=1, keepdims=True)
        var = v.var(axis=1, keepdims=True)
        xhat = (v - mu) / np.sqrt(var + np.asarray(eps, dtype=xd.dtype))
        return xhat.reshape(xd.shape)

    def bwd(ps, out, g):
        xd = ps[0]
        v = xd.reshape(num_groups, -1)
        n = v.shape[1]
        mu = v.mean(axis=1, keepdims=True)
        var = v.var(axis=1, keepdims=True)
        s = np.sqrt(var + np.asarray(eps, dtype=xd.dtype))
        xhat = (v - mu) / s
        gv = g.reshape(num_groups, -1)
        gx = (gv - gv.mean(axis=1, keepdims=True)
              - xhat * (gv * xhat).mean(axis=1, keepdims=True)) / s
        return (gx.reshape(xd.shape),)

    return _node("group_norm", (x,), fwd, bwd)


def resize_nearest(x, factor):
    """Integer-factor nearest upsampling of (C, H, W)."""
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be >= 1")

    def fwd(xd):
        return xd.repeat(factor, axis=1).repeat(factor, axis=2)

    def bwd(ps, out, g):
        C, H, W = ps[0].shape
        return (g.reshape(C, H, factor, W, factor).sum(axis=(2, 4)),)

    return _node("resize_nearest", (x,), fwd, bwd)


def _bilinear_coeffs(n_in, n_out):
    # half-pixel centers, edge-clamped
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    i0 = np.clip(np.floor(src).astype(np.int64), 0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    t = np.clip(src - i0, 0.0, 1.0)
    return i0, i1, t


def resize_bilinear(x, out_hw):
    """Bilinear resampling of (C, H, W) to (C, out_h, out_w), half-pixel centers."""
    out_h, out_w = int(out_hw[0]), int(out_hw[1])

    def coeffs(shape):
        _, H, W = shape
        return _bilinear_coeffs(H, out_h), _bilinear_coeffs(W, out_w)

    def fwd(xd):
        (i0, i1, ti), (j0, j1, tj) = coeffs(xd.shape)
        ti = ti[:, None].astype(xd.dtype)
        tj = tj[None, :].astype(xd.dtype)
        a = xd[:, i0][:, :, j0]
        b = xd[:, i0][:, :, j1]
        c = xd[:, i1][:, :, j0]
        d = xd[:, i1][:, :, j1]
        top = a + tj * (b - a)
        bot = c + tj * (d - c)
        return np.ascontiguousarray(top + ti * (bot - top))

    def bwd(ps, out, g):
        xd = ps[0]
        C = xd.shape[0]
        (i0, i1, ti), (j0, j1, tj) = coeffs(xd.shape)
        gx = np.zeros_like(xd)
        wts = [((1 - ti)[:, None] * (1 - tj)[None, :], i0, j0),
               ((1 - ti)[:, None] * tj[None, :], i0, j1),
               (ti[:, None] * (1 - tj)[None, :], i1, j0),
               (ti[:, None] * tj[None, :], i1, j1)]
        for w, ii, jj in wts:
            contrib = (g * w.astype(xd.dtype))
            np.add.at(gx, (slice(None), ii[:, None], jj[None, :]), contrib)
        return (gx,)

    return _node("resize_bilinear", (x,), fwd, bwd)


# ---------------------------------------------------------------------------
# backward pass

def _topo_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
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


def reevaluate(root):
    """Recompute the recorded graph from current leaf data; returns root data."""
    for node in _topo_order(root):
        if node.parents:
            node.data = np.asarray(node._fwd(*[p.data for p in node.parents]))
    return root.data


def grad(loss, wrt):
    """Reverse-mode gradients of scalar `loss` w.r.t. the tensors in `wrt`.

    Returns one array per entry of `wrt` (zeros when the parameter does not
    influence the loss).  Raises on non-scalar losses and on parameters that
    were created without requires_grad (detached).
    """
    wrt = list(wrt)
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    for i, p in enumerate(wrt):
        if not p.requires_grad:
            raise ValueError(f"parameter {i} is detached (requires_grad=False)")
    grads = {id(loss): np.ones_like(loss.data)}
    order = _topo_order(loss)
    for node in reversed(order):
        if not node.parents or node._bwd is None:
            continue
        g = grads.pop(id(node), None)
        if g is None or not node.requires_grad:
            continue
        parent_data = [p.data for p in node.parents]
        pgrads = node._bwd(parent_data, node.data, g)
        for p, pg in zip(node.parents, pgrads):
            if not p.requires_grad or pg is None:
                continue
            acc = grads.get(id(p))
            if acc is None:
                # copy when the returned grad aliases g or another array
                # (e.g. add passes g through for both parents)
                grads[id(p)] = pg.copy() if (pg is g or pg.base is not None) else pg
            else:
                acc += pg
    out = []
    for p in wrt:
        g = grads.get(id(p))
        out.append(np.zeros_like(p.data) if g is None else g)
    return out


# ---------------------------------------------------------------------------
# optimizers

@dataclass
class AdamWState:
    """Moments and hyperparameters for AdamW (decoupled weight decay)."""

    lr: float = 1e-4
    beta1: float = 0.95
    beta2: float = 0.999
    eps: float = 1e-6
    weight_decay: float = 1e-3
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(state, params, grads):
    """One AdamW step, in place on `params` (dict name -> array).

    p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name}: "
                             f"{g.shape} vs {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
        v = state.v.get(name)
        if v is None:
            v = state.v[name] = np.zeros_like(p)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p -= state.lr * (m_hat / (np.sqrt(v_hat) + state.eps)
                         + state.weight_decay * p)
    return params, state


def ema_update(shadow, params, decay):
    """shadow <- decay * shadow + (1 - decay) * params, in place on shadow."""
    if not 0.0 <= decay < 1.0:
        raise ValueError(f"decay must be in [0, 1), got {decay}")
    for name, p in params.items():
        s = shadow[name]
        if s.shape != p.shape:
            raise ValueError(f"shape mismatch for {name}")
        s *= decay
        s += (1.0 - decay) * p
    return shadow


# ---------------------------------------------------------------------------
# gradient verification

def finite_diff_check(builder, params, h=1e-5, max_coords=64, seed=0,
                      tolerance=1e-4):
    """Check reverse-mode gradients against central finite differences.

    builder: callable(list[Tensor]) -> scalar loss Tensor; called with
    requires_grad leaves wrapping float64 copies of `params` (list of arrays).
    A seeded subsample of at most `max_coords` coordinates per parameter is
    perturbed.  Each op node of the graph is additionally checked locally
    (its backward rule against differences through its own forward), which
    identifies the failing op when the end-to-end check trips.

    Returns a dict: max_rel_error, failing_op (or None), per_param, per_op,
    passed.
    """
    rng = np.random.default_rng(seed)
    leaves = [Tensor(np.asarray(p, dtype=np.float64).copy(), requires_grad=True)
              for p in params]
    loss = builder(leaves)
    analytic = grad(loss, leaves)

    def rel_err(a, b):
        return abs(a - b) / max(abs(a), abs(b), 1e-6)

    per_param = []
    max_err = 0.0
    for leaf, g in zip(leaves, analytic):
        n = leaf.data.size
        idx = np.arange(n) if n <= max_coords else rng.choice(
            n, size=max_coords, replace=False)
        flat = leaf.data
        worst = 0.0
        for k in np.sort(idx):
            orig = flat.flat[k]
            flat.flat[k] = orig + h
            fp = float(reevaluate(loss))
            flat.flat[k] = orig - h
            fm = float(reevaluate(loss))
            flat.flat[k] = orig
            fd = (fp - fm) / (2.0 * h)
            worst = max(worst, rel_err(float(g.flat[k]), fd))
        per_param.append(worst)
        max_err = max(max_err, worst)
    reevaluate(loss)

    per_op, failing_op = _local_op_checks(loss, rng, h)
    worst_local = max(per_op.values(), default=0.0)
    return {
        "max_rel_error": max(max_err, worst_local),
        "failing_op": failing_op if worst_local > tolerance else None,
        "per_param": per_param,
        "per_op": per_op,
        "passed": max_err <= tolerance and worst_local <= tolerance,
    }


def _local_op_checks(root, rng, h, coords_per_node=4):
    """FD-verify each op node's backward rule in isolation.

    For node y = f(x1..xk) and a fixed random cotangent R, the backward rule
    gives d<y,R>/dx_i; central differences through f alone give the oracle.
    """
    per_op = {}
    failing = None
    worst = 0.0
    for node in _topo_order(root):
        if not node.parents or node._bwd is None:
            continue
        # copies so duplicated parents (e.g. mul(x, x)) get independent slots
        pdata = [p.data.copy() for p in node.parents]
        R = rng.standard_normal(node.data.shape).astype(node.data.dtype)
        claimed = node._bwd(pdata, node.data, R)
        err = 0.0
        for pi, (pd, cg) in enumerate(zip(pdata, claimed)):
            if cg is None:
                continue
            if pd.dtype != np.float64:
                continue  # FD needs double precision; skip f32 constants
            n = pd.size
            take = min(coords_per_node, n)
            idx = rng.choice(n, size=take, replace=False)
            for k in idx:
                orig = pd.flat[k]
                pd.flat[k] = orig + h
                fp = float(np.sum(node._fwd(*pdata) * R))
                pd.flat[k] = orig - h
                fm = float(np.sum(node._fwd(*pdata) * R))
                pd.flat[k] = orig
                fd = (fp - fm) / (2.0 * h)
                a = float(cg.flat[k])
                err = max(err, abs(a - fd) / max(abs(a), abs(fd), 1e-6))
        prev = per_op.get(node.op, 0.0)
        per_op[node.op] = max(prev, err)
        if err > worst:
            worst = err
            failing = node.op
    return per_op, failing


# canonical single-op graphs used by the registered-op check ------------------

def _op_cases(rng):
    def t(*shape):
        return rng.standard_normal(shape)

    return {
        "add": lambda ps: reduce_sum(add(ps[0], ps[1])),
        "sub": lambda ps: reduce_sum(sub(ps[0], ps[1])),
        "mul": lambda ps: reduce_sum(mul(ps[0], ps[1])),
        "neg": lambda ps: reduce_sum(neg(ps[0])),
        "exp": lambda ps: reduce_sum(exp(ps[0])),
        "silu": lambda ps: reduce_sum(silu(ps[0])),
        "softmax": lambda ps: reduce_sum(mul(softmax(ps[0]), ps[1])),
        "matmul": lambda ps: reduce_sum(matmul(ps[0], ps[1])),
        "transpose": lambda ps: reduce_sum(mul(transpose(ps[0], (1, 0)), ps[1])),
        "reshape": lambda ps: reduce_sum(mul(reshape(ps[0], (-1,)), ps[1])),
        "concat": lambda ps: reduce_sum(mul(concat([ps[0], ps[1]], axis=0), ps[2])),
        "slice": lambda ps: reduce_sum(mul(slice_(ps[0], (slice(1, 3), slice(0, 2))), ps[1])),
        "reduce_sum": lambda ps: reduce_sum(mul(reduce_sum(ps[0], axis=1), ps[1])),
        "reduce_mean": lambda ps: reduce_sum(mul(reduce_mean(ps[0], axis=0, keepdims=True), ps[1])),
        "conv2d": lambda ps: reduce_sum(mul(conv2d(ps[0], ps[1], ps[2]), ps[3])),
        "conv2d_stride2": lambda ps: reduce_sum(mul(conv2d(ps[0], ps[1], ps[2], stride=2), ps[3])),
        "group_norm": lambda ps: reduce_sum(mul(group_norm(ps[0], 2), ps[1])),
        "resize_nearest": lambda ps: reduce_sum(mul(resize_nearest(ps[0], 2), ps[1])),
        "resize_bilinear": lambda ps: reduce_sum(mul(resize_bilinear(ps[0], (5, 7)), ps[1])),
    }, {
        "add": [t(3, 4), t(3, 4)],
        "sub": [t(3, 4), t(4,)],
        "mul": [t(3, 4), t(3, 1)],
        "neg": [t(5,)],
        "exp": [t(3, 3) * 0.5],
        "silu": [t(4, 4)],
        "softmax": [t(3, 5), t(3, 5)],
        "matmul": [t(3, 4), t(4, 2)],
        "transpose": [t(3, 4), t(4, 3)],
        "reshape": [t(2, 6), t(12,)],
        "concat": [t(2, 3), t(4, 3), t(6, 3)],
        "slice": [t(4, 5), t(2, 2)],
        "reduce_sum": [t(3, 4), t(3,)],
        "reduce_mean": [t(3, 4), t(1, 4)],
        "conv2d": [t(2, 6, 6), t(3, 2, 3, 3), t(3,), t(3, 6, 6)],
        "conv2d_stride2": [t(2, 6, 6), t(3, 2, 3, 3), t(3,), t(3, 3, 3)],
        "group_norm": [t(4, 3, 3), t(4, 3, 3)],
        "resize_nearest": [t(2, 3, 3), t(2, 6, 6)],
        "resize_bilinear": [t(2, 3, 4), t(2, 5, 7)],
    }


REGISTERED_OPS = tuple(sorted(_op_cases(np.random.default_rng(0))[0]))


def check_registered_ops(seed=0, tolerance=1e-4):
    """Run the finite-difference check on every registered op.

    Returns dict op name -> report; every report must pass for a healthy build.
    """
    rng = np.random.default_rng(seed)
    builders, inputs = _op_cases(rng)
    reports = {}
    for name in sorted(builders):
        reports[name] = finite_diff_check(
            builders[name], inputs[name], tolerance=tolerance,
            seed=seed + len(name))
    return reports


def random_composition_check(seed, depth=6, tolerance=1e-4):
    """FD-check a random composition of registered ops (depth <= `depth`).

    Grows a pool of tensors from three random leaves, repeatedly applying a
    randomly chosen applicable op, then reduces to a scalar loss.
    """
    rng = np.random.default_rng(seed)

    def build(leaves):
        pool = list(leaves)

        def pick():
            return pool[int(rng.integers(len(pool)))]

        for _ in range(depth):
            choice = rng.integers(7)
            a = pick()
            if choice == 0:
                b = pick()
                if a.shape == b.shape:
                    pool.append(add(a, b))
            elif choice == 1:
                b = pick()
                if a.shape == b.shape:
                    pool.append(mul(a, b))
            elif choice == 2:
                pool.append(silu(a))
            elif choice == 3 and a.data.ndim == 2:
                pool.append(softmax(a))
            elif choice == 4 and a.data.ndim == 2:
                pool.append(transpose(a, (1, 0)))
            elif choice == 5 and a.data.ndim == 2 and a.shape[0] == a.shape[1]:
                pool.append(matmul(a, a))
            elif choice == 6:
                pool.append(exp(a * 0.25))
        out = pool[-1]
        return reduce_mean(out) if out.data.size > 1 else reshape(out, ())

    leaves = [rng.standard_normal((4, 4)) for _ in range(3)]
    return finite_diff_check(build, leaves, tolerance=tolerance, seed=seed)
