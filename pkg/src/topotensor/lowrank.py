"""Low-rank tensor weights (CP, Tucker, tensor-train, dense) and the TTL.

A weight parameterizes a dense tensor of shape input_shape + output_shape.
``low_rank_inner_product`` contracts an input tensor against the leading
(input) modes without ever materializing the dense weight: each format is a
single einsum over its factors, so the tape differentiates through every
parameter. ``reconstruct`` densifies a weight and exists for oracles, debug
dumps and checkpoint-free export.

The tensorized layer (TTL) is the affine map h -> relu(<W, h> + b) where the
contraction runs over the trailing modes of h and any leading modes are
treated as batch.
"""
from __future__ import annotations

import numpy as np

from .tensor import DenseTensor, einsum, relu, reshape, add

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


class CPWeight:
    """Sum of rank-1 terms: coeffs[r] * outer(factors[0][:, r], ...)."""

    def __init__(self, factors, coeffs):
        self.factors = [f if isinstance(f, DenseTensor) else DenseTensor(f) for f in factors]
        self.coeffs = coeffs if isinstance(coeffs, DenseTensor) else DenseTensor(coeffs)
        rank = self.coeffs.shape[0]
        for m, f in enumerate(self.factors):
            if f.ndim != 2 or f.shape[1] != rank:
                raise ValueError(f"CP factor {m} must be (D_{m}, {rank}), got {f.shape}")

    @property
    def shape(self):
        return tuple(f.shape[0] for f in self.factors)

    @property
    def rank(self):
        return self.coeffs.shape[0]

    def named_params(self, prefix):
        for m, f in enumerate(self.factors):
            yield f"{prefix}.factor{m}", f
        yield f"{prefix}.coeffs", self.coeffs


class TuckerWeight:
    """Core tensor multiplied by one factor matrix per mode."""

    def __init__(self, core, factors):
        self.core = core if isinstance(core, DenseTensor) else DenseTensor(core)
        self.factors = [f if isinstance(f, DenseTensor) else DenseTensor(f) for f in factors]
        if self.core.ndim != len(self.factors):
            raise ValueError(f"core has {self.core.ndim} modes for "
                             f"{len(self.factors)} factors")
        for m, f in enumerate(self.factors):
            if f.ndim != 2 or f.shape[1] != self.core.shape[m]:
                raise ValueError(f"Tucker factor {m} must be (D_{m}, {self.core.shape[m]}), "
                                 f"got {f.shape}")
            if self.core.shape[m] > f.shape[0]:
                raise ValueError(f"Tucker rank {self.core.shape[m]} exceeds mode "
                                 f"size {f.shape[0]} on mode {m}")

    @property
    def shape(self):
        return tuple(f.shape[0] for f in self.factors)

    def named_params(self, prefix):
        yield f"{prefix}.core", self.core
        for m, f in enumerate(self.factors):
            yield f"{prefix}.factor{m}", f


class TTWeight:
    """Tensor-train cores of shape (R_{i-1}, D_i, R_i) with R_0 = 1, plus a
    boundary core (R_M, 1, 1) closing the chain."""

    def __init__(self, cores):
        self.cores = [c if isinstance(c, DenseTensor) else DenseTensor(c) for c in cores]
        if len(self.cores) < 2:
            raise ValueError("tensor train needs at least one mode core plus the boundary")
        if self.cores[0].shape[0] != 1:
            raise ValueError(f"first core must have R_0 = 1, got {self.cores[0].shape}")
        last = self.cores[-1]
        if last.shape[1:] != (1, 1):
            raise ValueError(f"boundary core must be (R_M, 1, 1), got {last.shape}")
        for i in range(len(self.cores) - 1):
            if self.cores[i].shape[2] != self.cores[i + 1].shape[0]:
                raise ValueError(f"rank mismatch between cores {i} and {i + 1}: "
                                 f"{self.cores[i].shape} vs {self.cores[i + 1].shape}")

    @property
    def shape(self):
        return tuple(c.shape[1] for c in self.cores[:-1])

    def named_params(self, prefix):
        for i, c in enumerate(self.cores):
            yield f"{prefix}.core{i}", c


def _weight_shape(w):
    if isinstance(w, (CPWeight, TuckerWeight, TTWeight)):
        return w.shape
    if isinstance(w, DenseTensor):
        return w.shape
    raise TypeError(f"unsupported weight type {type(w).__name__}")


def cp_reconstruct(w: CPWeight) -> DenseTensor:
    m = len(w.factors)
    out = _LETTERS[:m]
    spec = ",".join(f"{out[i]}z" for i in range(m)) + ",z->" + out
    return einsum(spec, *w.factors, w.coeffs)


def tucker_reconstruct(w: TuckerWeight) -> DenseTensor:
    m = len(w.factors)
    out = _LETTERS[:m]
    rank_letters = _LETTERS[m:2 * m]
    spec = (",".join(f"{out[i]}{rank_letters[i]}" for i in range(m))
            + f",{rank_letters}->{out}")
    return einsum(spec, *w.factors, w.core)


def tt_reconstruct(w: TTWeight) -> DenseTensor:
    m = len(w.cores) - 1
    out = _LETTERS[:m]
    bonds = _LETTERS[m:2 * m + 1]
    first = reshape(w.cores[0], w.cores[0].shape[1:])          # (D_1, R_1)
    boundary = reshape(w.cores[-1], (w.cores[-1].shape[0],))   # (R_M,)
    subs = [f"{out[0]}{bonds[1]}"]
    operands = [first]
    for i in range(1, m):
        subs.append(f"{bonds[i]}{out[i]}{bonds[i + 1]}")
        operands.append(w.cores[i])
    subs.append(bonds[m])
    operands.append(boundary)
    return einsum(",".join(subs) + "->" + out, *operands)


def reconstruct(w) -> DenseTensor:
    if isinstance(w, CPWeight):
        return cp_reconstruct(w)
    if isinstance(w, TuckerWeight):
        return tucker_reconstruct(w)
    if isinstance(w, TTWeight):
        return tt_reconstruct(w)
    if isinstance(w, DenseTensor):
        return w
    raise TypeError(f"unsupported weight type {type(w).__name__}")


def low_rank_inner_product(w, h, batch_ndim: int = 0) -> DenseTensor:
    """Contract h's trailing modes against the weight's leading modes.

    h has shape batch_shape + input_shape where input_shape matches the first
    h.ndim - batch_ndim modes of the weight; the remaining weight modes form
    the output. The contraction never builds the dense weight: it is one
    einsum over the format's factors.
    """
    h = h if isinstance(h, DenseTensor) else DenseTensor(h)
    wshape = _weight_shape(w)
    m = h.ndim - batch_ndim
    if m < 1:
        raise ValueError("input must contribute at least one contracted mode")
    if m > len(wshape):
        raise ValueError(f"input has {m} contractable modes, weight only {len(wshape)}")
    for j in range(m):
        if h.shape[batch_ndim + j] != wshape[j]:
            raise ValueError(f"shared mode {j} size mismatch: weight {wshape[j]} "
                             f"vs input {h.shape[batch_ndim + j]}")
    k = len(wshape) - m
    batch = _LETTERS[:batch_ndim]
    ins = _LETTERS[batch_ndim:batch_ndim + m]
    outs = _LETTERS[batch_ndim + m:batch_ndim + m + k]
    h_sub = batch + ins
    out_sub = batch + outs

    if isinstance(w, DenseTensor):
        return einsum(f"{h_sub},{ins}{outs}->{out_sub}", h, w)

    if isinstance(w, CPWeight):
        r = _LETTERS[batch_ndim + m + k]
        subs = [h_sub] + [f"{c}{r}" for c in ins] + [r] + [f"{c}{r}" for c in outs]
        return einsum(",".join(subs) + "->" + out_sub,
                      h, *w.factors[:m], w.coeffs, *w.factors[m:])

    if isinstance(w, TuckerWeight):
        ranks = _LETTERS[batch_ndim + m + k:batch_ndim + 2 * (m + k)]
        subs = ([h_sub] + [f"{ins[j]}{ranks[j]}" for j in range(m)]
                + [ranks] + [f"{outs[j]}{ranks[m + j]}" for j in range(k)])
        return einsum(",".join(subs) + "->" + out_sub,
                      h, *w.factors[:m], w.core, *w.factors[m:])

    # tensor train: squeeze the unit bonds at both ends, then chain
    bonds = _LETTERS[batch_ndim + m + k:batch_ndim + 2 * (m + k) + 1]
    first = reshape(w.cores[0], w.cores[0].shape[1:])
    boundary = reshape(w.cores[-1], (w.cores[-1].shape[0],))
    mode_sub = ins + outs
    subs = [h_sub, f"{mode_sub[0]}{bonds[1]}"]
    operands = [h, first]
    for i in range(1, m + k):
        subs.append(f"{bonds[i]}{mode_sub[i]}{bonds[i + 1]}")
        operands.append(w.cores[i])
    subs.append(bonds[m + k])
    operands.append(boundary)
    return einsum(",".join(subs) + "->" + out_sub, *operands)


# -- initialization ---------------------------------------------------------

def _uniform(rng, shape, bound):
    return DenseTensor(rng.uniform(-bound, bound, shape), requires_grad=True)


def _unit_columns(rng, d, r, bound):
    """Uniform draw, then each column rescaled to unit L2 norm.

    The norm constraint is applied at initialization only; optimization is
    free to move the columns off the unit sphere (scale migrates into the
    coefficients or the core).
    """
    raw = rng.uniform(-bound, bound, (d, r))
    raw /= np.linalg.norm(raw, axis=0, keepdims=True)
    return DenseTensor(raw, requires_grad=True)


def make_cp(shape, rank: int, rng: np.random.Generator) -> CPWeight:
    """CP factors: uniform draws normalized to unit-norm columns; coefficients one.

    Unit-norm columns make the reconstructed tensor's entry variance R / prod(shape),
    which keeps contraction outputs on the scale of the inputs.
    """
    factors = [_unit_columns(rng, d, rank, 1.0 / np.sqrt(d * rank)) for d in shape]
    return CPWeight(factors, DenseTensor(np.ones(rank), requires_grad=True))


def make_tucker(shape, rank: int, rng: np.random.Generator) -> TuckerWeight:
    ranks = [min(rank, d) for d in shape]
    factors = [_unit_columns(rng, d, r, 1.0 / np.sqrt(d * r))
               for d, r in zip(shape, ranks)]
    # unit-norm columns contribute ~1/D_m variance per mode; a core variance of
    # max(R)/prod(R) puts the reconstruction's entry variance at max(R)/prod(D),
    # the same scale the unit-norm rank-R construction above yields
    core_var = float(max(ranks)) / float(np.prod(ranks))
    core = _uniform(rng, tuple(ranks), np.sqrt(3.0 * core_var))
    return TuckerWeight(core, factors)


def make_tt(shape, rank: int, rng: np.random.Generator) -> TTWeight:
    m = len(shape)
    left = np.cumprod([1] + list(shape))
    ranks = [1] + [int(min(rank, left[j])) for j in range(1, m + 1)]
    # the reconstruction sums prod(ranks[1:]) independent sign products across
    # m+1 cores; split the target entry variance max(R)/prod(shape) (mirroring
    # the unit-norm construction above) evenly so the chain neither explodes
    # nor vanishes with depth
    bond_product = float(np.prod(ranks[1:]))
    target = float(max(ranks)) / float(np.prod(shape))
    per_core_var = (target / bond_product) ** (1.0 / (m + 1))
    bound = np.sqrt(3.0 * per_core_var)
    cores = []
    for i in range(m):
        cores.append(_uniform(rng, (ranks[i], shape[i], ranks[i + 1]), bound))
    cores.append(_uniform(rng, (ranks[m], 1, 1), bound))
    return TTWeight(cores)


def make_dense_weight(shape, input_ndim: int, rng: np.random.Generator) -> DenseTensor:
    fan_in = int(np.prod(shape[:input_ndim]))
    return _uniform(rng, shape, 1.0 / np.sqrt(fan_in))


def make_weight(fmt: str, shape, rank: int, rng, input_ndim: int | None = None):
    if fmt == "cp":
        return make_cp(shape, rank, rng)
    if fmt == "tucker":
        return make_tucker(shape, rank, rng)
    if fmt == "tt":
        return make_tt(shape, rank, rng)
    if fmt == "dense":
        return make_dense_weight(shape, input_ndim if input_ndim is not None
                                 else len(shape), rng)
    raise ValueError(f"unknown weight format {fmt!r}; valid: cp, tucker, tt, dense")


# -- tensorized layer --------------------------------------------------------

class TTL:
    """Affine low-rank contraction plus bias, followed by ReLU.

    Input tensors carry batch_shape + input_shape; the layer contracts the
    input modes and emits batch_shape + output_shape. forward() records the
    pass so backward() can be driven with an upstream gradient.
    """

    def __init__(self, input_shape, output_shape, fmt: str = "cp", rank: int = 32,
                 rng: np.random.Generator | None = None, name: str = "ttl"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_shape = tuple(input_shape)
        self.output_shape = tuple(output_shape)
        self.name = name
        self.weight = make_weight(fmt, self.input_shape + self.output_shape, rank,
                                  rng, input_ndim=len(self.input_shape))
        self.bias = DenseTensor(np.zeros(self.output_shape), requires_grad=True)
        self._recorded = None

    @property
    def widths(self):
        return list(self.input_shape) + list(self.output_shape)

    def named_params(self, prefix: str | None = None):
        prefix = prefix if prefix is not None else self.name
        if isinstance(self.weight, DenseTensor):
            yield f"{prefix}.weight", self.weight
        else:
            yield from self.weight.named_params(f"{prefix}.weight")
        yield f"{prefix}.bias", self.bias

    def forward(self, h: DenseTensor) -> DenseTensor:
        if h.shape[h.ndim - len(self.input_shape):] != self.input_shape:
            raise ValueError(f"input trailing modes {h.shape} do not end in "
                             f"{self.input_shape}")
        batch_ndim = h.ndim - len(self.input_shape)
        out = relu(add(low_rank_inner_product(self.weight, h, batch_ndim), self.bias))
        self._recorded = (h, out)
        return out

    def backward(self, grad_out: np.ndarray):
        """Seed the recorded output with grad_out; returns (param grads, input grad)."""
        if self._recorded is None:
            raise RuntimeError("ttl backward called before any recorded forward")
        h, out = self._recorded
        for _, p in self.named_params():
            p.zero_grad()
        h.zero_grad()
        out.backward(np.asarray(grad_out, dtype=np.float64))
        grads = {name: p.grad for name, p in self.named_params()}
        return grads, h.grad


def ttl_forward(layer: TTL, h: DenseTensor) -> DenseTensor:
    return layer.forward(h)


def ttl_backward(layer: TTL, grad_out: np.ndarray):
    return layer.backward(grad_out)
