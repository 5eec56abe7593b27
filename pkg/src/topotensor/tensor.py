"""Dense multi-mode tensors with reverse-mode automatic differentiation.

DenseTensor wraps a float64 ndarray and records every operation on a tape
(parents + a vector-Jacobian closure). Calling backward() on a scalar result
walks the tape in reverse topological order and accumulates gradients into
the .grad field of every tensor that requires them. The op set is exactly
what the layers in this package need; there is no broadcasting magic beyond
numpy semantics plus gradient unbroadcasting.
"""
from __future__ import annotations

import numpy as np

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


class DenseTensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, _parents=(), _vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self.grad = None
        self._parents = tuple(_parents) if self.requires_grad else ()
        self._vjp = _vjp if self.requires_grad else None

    # -- bookkeeping ------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "DenseTensor":
        return DenseTensor(self.data)

    def __repr__(self):
        return f"DenseTensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self, seed=None):
        """Reverse-mode sweep from this tensor.

        seed defaults to 1.0 and is only optional for scalar outputs; pass an
        upstream gradient array for non-scalar roots.
        """
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that requires no grad")
        if seed is None:
            if self.data.size != 1:
                raise RuntimeError("backward() without seed needs a scalar output")
            seed = np.ones_like(self.data)
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != self.data.shape:
            raise ValueError(f"seed shape {seed.shape} != output shape {self.data.shape}")

        # iterative topological order over the recorded tape
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        self.grad = seed if self.grad is None else self.grad + seed
        for node in reversed(order):
            if node._vjp is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                if not parent.requires_grad or g is None:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, c):
        return pow_const(self, c)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int)
                       else shape[0])

    def transpose(self, axes=None):
        return transpose(self, axes)

    @property
    def T(self):
        return transpose(self, None)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis, keepdims)


def _wrap(x) -> DenseTensor:
    return x if isinstance(x, DenseTensor) else DenseTensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> DenseTensor:
    a, b = _wrap(a), _wrap(b)
    out = DenseTensor(a.data + b.data, _parents=(a, b),
                      _vjp=lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
    return out


def mul(a, b) -> DenseTensor:
    a, b = _wrap(a), _wrap(b)
    return DenseTensor(a.data * b.data, _parents=(a, b),
                       _vjp=lambda g: (_unbroadcast(g * b.data, a.shape),
                                       _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> DenseTensor:
    a, b = _wrap(a), _wrap(b)
    return DenseTensor(a.data / b.data, _parents=(a, b),
                       _vjp=lambda g: (_unbroadcast(g / b.data, a.shape),
                                       _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


def pow_const(a, c: float) -> DenseTensor:
    a = _wrap(a)
    c = float(c)
    out_data = a.data ** c
    return DenseTensor(out_data, _parents=(a,),
                       _vjp=lambda g: (g * c * a.data ** (c - 1.0),))


def matmul(a, b) -> DenseTensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner modes differ: {a.shape} vs {b.shape}")
    return DenseTensor(a.data @ b.data, _parents=(a, b),
                       _vjp=lambda g: (g @ b.data.T, a.data.T @ g))


def reshape(a, shape) -> DenseTensor:
    a = _wrap(a)
    return DenseTensor(a.data.reshape(shape), _parents=(a,),
                       _vjp=lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> DenseTensor:
    a = _wrap(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = np.argsort(axes)
    return DenseTensor(a.data.transpose(axes), _parents=(a,),
                       _vjp=lambda g: (g.transpose(inverse),))


def concatenate(tensors, axis: int = 0) -> DenseTensor:
    """Join tensors along an existing mode; other modes must match exactly."""
    ts = [_wrap(t) for t in tensors]
    if not ts:
        raise ValueError("concatenate needs at least one tensor")
    ref = ts[0].shape
    for t in ts[1:]:
        if t.ndim != len(ref):
            raise ValueError(f"concatenate rank mismatch: {len(ref)} vs {t.ndim}")
        for m, (s0, s1) in enumerate(zip(ref, t.shape)):
            if m != (axis % len(ref)) and s0 != s1:
                raise ValueError(f"concatenate shape mismatch on mode {m}: {s0} vs {s1}")
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return DenseTensor(np.concatenate([t.data for t in ts], axis=axis),
                       _parents=tuple(ts), _vjp=vjp)


def stack(tensors, axis: int = 0) -> DenseTensor:
    ts = [_wrap(t) for t in tensors]
    for t in ts[1:]:
        if t.shape != ts[0].shape:
            raise ValueError(f"stack shape mismatch: {ts[0].shape} vs {t.shape}")

    def vjp(g):
        moved = np.moveaxis(g, axis, 0)
        return tuple(moved[k] for k in range(len(ts)))

    return DenseTensor(np.stack([t.data for t in ts], axis=axis),
                       _parents=tuple(ts), _vjp=vjp)


def tensor_sum(a, axis=None, keepdims=False) -> DenseTensor:
    a = _wrap(a)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return DenseTensor(a.data.sum(axis=axis, keepdims=keepdims), _parents=(a,), _vjp=vjp)


def tensor_mean(a, axis=None, keepdims=False) -> DenseTensor:
    a = _wrap(a)
    if axis is None:
        n = a.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.shape[ax] for ax in axis]))
    else:
        n = a.shape[axis]
    return mul(tensor_sum(a, axis, keepdims), 1.0 / n)


def relu(a) -> DenseTensor:
    a = _wrap(a)
    mask = a.data > 0
    return DenseTensor(a.data * mask, _parents=(a,), _vjp=lambda g: (g * mask,))


def exp(a) -> DenseTensor:
    a = _wrap(a)
    out_data = np.exp(a.data)
    return DenseTensor(out_data, _parents=(a,), _vjp=lambda g: (g * out_data,))


def log(a) -> DenseTensor:
    a = _wrap(a)
    return DenseTensor(np.log(a.data), _parents=(a,), _vjp=lambda g: (g / a.data,))


def clamp_min(a, floor: float) -> DenseTensor:
    """max(a, floor) elementwise; gradient flows only where a > floor."""
    a = _wrap(a)
    mask = a.data > floor
    return DenseTensor(np.maximum(a.data, floor), _parents=(a,),
                       _vjp=lambda g: (g * mask,))


def einsum(spec: str, *tensors) -> DenseTensor:
    """Einstein summation with autodiff over every operand.

    The spec must use explicit letters (no ellipsis) and every letter of each
    operand has to appear in the output or in another operand, so that each
    vector-Jacobian product is itself an einsum.
    """
    ts = [_wrap(t) for t in tensors]
    if "." in spec:
        raise ValueError("einsum spec must not use ellipsis")
    lhs, out_subs = spec.replace(" ", "").split("->")
    in_subs = lhs.split(",")
    if len(in_subs) != len(ts):
        raise ValueError(f"spec has {len(in_subs)} operands, got {len(ts)} tensors")
    for k, sub in enumerate(in_subs):
        if len(set(sub)) != len(sub):
            raise ValueError(f"operand {k} repeats a letter in {spec!r}")
        external = set(out_subs) | set("".join(s for i, s in enumerate(in_subs) if i != k))
        missing = set(sub) - external
        if missing:
            raise ValueError(f"operand {k} letters {sorted(missing)} appear nowhere "
                             f"else in {spec!r}; gradients would be ambiguous")

    def vjp(g):
        grads = []
        for k, sub in enumerate(in_subs):
            operands = [g] + [t.data for i, t in enumerate(ts) if i != k]
            subs = [out_subs] + [s for i, s in enumerate(in_subs) if i != k]
            grads.append(np.einsum(f"{','.join(subs)}->{sub}", *operands,
                                   optimize=True))
        return tuple(grads)

    return DenseTensor(np.einsum(spec, *[t.data for t in ts], optimize=True),
                       _parents=tuple(ts), _vjp=vjp)


def conv2d(x, w, b) -> DenseTensor:
    """Valid 2-D convolution, stride 1: (B,C,H,W) x (O,C,k,k) -> (B,O,H',W').

    Implemented as one im2col matmul so the backward pass is two more
    matmuls plus a shift-and-add scatter for the input gradient.
    """
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    bsz, cin, h, wd = x.shape
    out_ch, cin2, k, k2 = w.shape
    if cin != cin2 or k != k2:
        raise ValueError(f"kernel shape {w.shape} incompatible with input {x.shape}")
    if h < k or wd < k:
        raise ValueError(f"spatial resolution {h}x{wd} below kernel size {k}")
    h2, w2 = h - k + 1, wd - k + 1
    windows = np.lib.stride_tricks.sliding_window_view(x.data, (k, k), axis=(2, 3))
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * h2 * w2, cin * k * k)
    wmat = w.data.reshape(out_ch, cin * k * k).T
    out_mat = cols @ wmat + b.data
    out_data = out_mat.reshape(bsz, h2, w2, out_ch).transpose(0, 3, 1, 2)

    def vjp(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(bsz * h2 * w2, out_ch)
        dw = (gmat.T @ cols).reshape(out_ch, cin, k, k)
        db = gmat.sum(axis=0)
        dcols = (gmat @ wmat.T).reshape(bsz, h2, w2, cin, k, k).transpose(0, 3, 1, 2, 4, 5)
        dx = np.zeros((bsz, cin, h, wd))
        for dy in range(k):
            for dx_ in range(k):
                dx[:, :, dy:dy + h2, dx_:dx_ + w2] += dcols[:, :, :, :, dy, dx_]
        return dx, dw, db

    return DenseTensor(out_data, _parents=(x, w, b), _vjp=vjp)


def finite_difference_check(fn, params, step: float = 1e-4, num_coords: int = 50,
                            rng: np.random.Generator | None = None) -> float:
    """Compare tape gradients of a scalar-valued fn against central differences.

    fn takes no arguments and closes over params (DenseTensors with
    requires_grad). For each parameter, up to num_coords coordinates are
    perturbed by +-step and the symmetric quotient is compared with the
    recorded gradient. Returns the maximum relative error over all sampled
    coordinates; the scale floor keeps near-zero gradients honest without
    amplifying float noise.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    out = fn()
    if out.size != 1:
        raise ValueError("finite_difference_check needs a scalar-valued fn")
    out.backward()
    grads = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.data.reshape(-1)
        n = min(num_coords, flat.size)
        coords = rng.choice(flat.size, size=n, replace=False)
        for c in coords:
            keep = flat[c]
            flat[c] = keep + step
            up = float(fn().data)
            flat[c] = keep - step
            down = float(fn().data)
            flat[c] = keep
            numeric = (up - down) / (2.0 * step)
            analytic = g.reshape(-1)[c]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-3)
            worst = max(worst, err)
    return worst
