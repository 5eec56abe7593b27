"""Differentiable building blocks: GCN stack, CNN encoder, MLP, Adam.

Every layer exposes named_params() so the optimizer, checkpoints and gradient
checks all see one flat {name: DenseTensor} view. Both contrastive views are
encoded by the same layer objects, so weight sharing holds by construction.
"""
from __future__ import annotations

import numpy as np

from .graphs import Graph, normalized_adjacency_power
from .tensor import (
    DenseTensor, add, conv2d, einsum, exp, finite_difference_check,
    log, matmul, mul, pow_const, relu, reshape, tensor_mean, tensor_sum,
)

__all__ = [
    "Linear", "BatchNorm", "Dropout", "GCNLayer", "GCNEncoder", "CNNEncoder",
    "MLPClassifier", "AdamState", "adam_step", "cross_entropy", "gcn_forward",
    "cnn_encode", "mlp_classify", "finite_difference_check",
]


def _he_uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return DenseTensor(rng.uniform(-bound, bound, shape), requires_grad=True)


class Linear:
    def __init__(self, in_width: int, out_width: int, rng, name: str = "linear"):
        self.name = name
        self.weight = _he_uniform(rng, in_width, (in_width, out_width))
        self.bias = DenseTensor(np.zeros(out_width), requires_grad=True)

    def named_params(self, prefix=None):
        prefix = prefix or self.name
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias

    def forward(self, x: DenseTensor) -> DenseTensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ValueError(f"{self.name}: input width {x.shape[-1]} != "
                             f"{self.weight.shape[0]}")
        if x.ndim == 2:
            return add(matmul(x, self.weight), self.bias)
        return add(einsum(_batched_spec(x.ndim), x, self.weight), self.bias)


def _batched_spec(ndim: int) -> str:
    batch = "abcde"[:ndim - 1]
    return f"{batch}i,io->{batch}o"


class BatchNorm:
    """Per-feature normalization over the leading (batch) axis.

    Training mode normalizes with batch statistics on the tape and, when
    update_running is set, folds them into the running estimates (unbiased
    variance, momentum 0.1). Inference mode is the deterministic affine map
    through the running statistics.
    """

    def __init__(self, width: int, eps: float = 1e-5, momentum: float = 0.1,
                 name: str = "bn"):
        self.name = name
        self.eps = eps
        self.momentum = momentum
        self.gamma = DenseTensor(np.ones(width), requires_grad=True)
        self.beta = DenseTensor(np.zeros(width), requires_grad=True)
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)

    def named_params(self, prefix=None):
        prefix = prefix or self.name
        yield f"{prefix}.gamma", self.gamma
        yield f"{prefix}.beta", self.beta

    def state_arrays(self, prefix=None):
        prefix = prefix or self.name
        return {f"{prefix}.running_mean": self.running_mean,
                f"{prefix}.running_var": self.running_var}

    def forward(self, x: DenseTensor, training: bool,
                update_running: bool | None = None) -> DenseTensor:
        if update_running is None:
            update_running = training
        if training:
            n = x.shape[0]
            mu = tensor_mean(x, axis=0, keepdims=True)
            centered = x - mu
            var = tensor_mean(centered * centered, axis=0, keepdims=True)
            if update_running:
                m = self.momentum
                batch_var = var.data.reshape(-1)
                unbiased = batch_var * (n / (n - 1)) if n > 1 else batch_var
                self.running_mean = (1 - m) * self.running_mean \
                    + m * mu.data.reshape(-1)
                self.running_var = (1 - m) * self.running_var + m * unbiased
            inv = pow_const(var + self.eps, -0.5)
            return add(mul(mul(centered, inv), self.gamma), self.beta)
        inv = 1.0 / np.sqrt(self.running_var + self.eps)
        normalized = mul(x - DenseTensor(self.running_mean), DenseTensor(inv))
        return add(mul(normalized, self.gamma), self.beta)


class Dropout:
    """Inverted dropout; masks come from an explicit rng so training runs are
    reproducible and gradient checks can pin a mask."""

    def __init__(self, rate: float = 0.5):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x: DenseTensor, training: bool,
                rng: np.random.Generator | None = None,
                mask: np.ndarray | None = None) -> DenseTensor:
        if not training or self.rate == 0.0:
            return x
        if mask is None:
            if rng is None:
                raise ValueError("training-mode dropout needs an rng or a mask")
            keep = (rng.random(x.shape) >= self.rate)
            mask = keep.astype(np.float64) / (1.0 - self.rate)
        return mul(x, DenseTensor(mask))


class GCNLayer:
    """One propagation step: relu(A_hat^tau C W) through linear+batchnorm+relu."""

    def __init__(self, in_width: int, out_width: int, rng, name: str = "gcn"):
        self.name = name
        self.weight = _he_uniform(rng, in_width, (in_width, out_width))
        self.mlp = Linear(out_width, out_width, rng, name=f"{name}.mlp")
        self.bn = BatchNorm(out_width, name=f"{name}.bn")

    def named_params(self, prefix=None):
        prefix = prefix or self.name
        yield f"{prefix}.weight", self.weight
        yield from self.mlp.named_params(f"{prefix}.mlp")
        yield from self.bn.named_params(f"{prefix}.bn")

    def forward(self, a_hat: DenseTensor, c: DenseTensor, training: bool,
                update_running: bool | None = None) -> DenseTensor:
        if c.shape[-1] != self.weight.shape[0]:
            raise ValueError(f"{self.name}: feature width {c.shape[-1]} != "
                             f"{self.weight.shape[0]}")
        propagated = relu(matmul(matmul(a_hat, c), self.weight))
        return relu(self.bn.forward(self.mlp.forward(propagated), training,
                                    update_running))


class GCNEncoder:
    """L stacked GCN layers; forward returns every layer's node embeddings."""

    def __init__(self, in_width: int, hidden: int = 32, layers: int = 3,
                 tau: int = 1, rng=None, name: str = "graph_enc"):
        if tau < 1:
            raise ValueError(f"propagation power tau must be >= 1, got {tau}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.name = name
        self.tau = tau
        widths = [in_width] + [hidden] * layers
        self.layers = [GCNLayer(widths[i], widths[i + 1], rng,
                                name=f"{name}.layer{i}")
                       for i in range(layers)]

    def named_params(self, prefix=None):
        prefix = prefix or self.name
        for i, layer in enumerate(self.layers):
            yield from layer.named_params(f"{prefix}.layer{i}")

    def propagation_matrix(self, g: Graph) -> DenseTensor:
        return DenseTensor(normalized_adjacency_power(g, self.tau))

    def forward(self, g: Graph, training: bool,
                update_running: bool | None = None) -> list[DenseTensor]:
        if g.features.shape[1] != self.layers[0].weight.shape[0]:
            raise ValueError(f"graph feature width {g.features.shape[1]} != "
                             f"encoder input width {self.layers[0].weight.shape[0]}")
        a_hat = self.propagation_matrix(g)
        c = DenseTensor(g.features)
        outs = []
        for layer in self.layers:
            c = layer.forward(a_hat, c, training, update_running)
            outs.append(c)
        return outs


def gcn_forward(g: Graph, encoder: GCNEncoder, training: bool = False,
                update_running: bool | None = None) -> list[DenseTensor]:
    return encoder.forward(g, training, update_running)


class CNNEncoder:
    """Two conv+ReLU blocks over the K*M image channels, spatial mean pool,
    and (only when M > 1) a linear head folding the channels to head_width."""

    def __init__(self, in_channels: int, images_per_filtration: int,
                 channels=(16, 32), kernel: int = 3, head_width: int = 32,
                 rng=None, name: str = "topo_enc"):
        if kernel % 2 != 1:
            raise ValueError(f"kernel size must be odd, got {kernel}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.name = name
        self.images_per_filtration = images_per_filtration
        self.head_width = head_width
        c1, c2 = channels
        self.w1 = _he_uniform(rng, in_channels * kernel * kernel,
                              (c1, in_channels, kernel, kernel))
        self.b1 = DenseTensor(np.zeros(c1), requires_grad=True)
        self.w2 = _he_uniform(rng, c1 * kernel * kernel, (c2, c1, kernel, kernel))
        self.b2 = DenseTensor(np.zeros(c2), requires_grad=True)
        self.head = Linear(c2, head_width, rng, name=f"{name}.head") \
            if images_per_filtration > 1 else None
        if self.head is None and c2 != head_width:
            raise ValueError(f"without a head, final channels {c2} must equal "
                             f"head width {head_width}")

    def named_params(self, prefix=None):
        prefix = prefix or self.name
        yield f"{prefix}.w1", self.w1
        yield f"{prefix}.b1", self.b1
        yield f"{prefix}.w2", self.w2
        yield f"{prefix}.b2", self.b2
        if self.head is not None:
            yield from self.head.named_params(f"{prefix}.head")

    def forward(self, z: DenseTensor) -> DenseTensor:
        """z: (B, K, M, P, P) or a single (K, M, P, P) tensor."""
        z = z if isinstance(z, DenseTensor) else DenseTensor(z)
        single = z.ndim == 4
        if single:
            z = reshape(z, (1,) + z.shape)
        b, k, m, p, p2 = z.shape
        x = reshape(z, (b, k * m, p, p2))
        x = relu(conv2d(x, self.w1, self.b1))
        x = relu(conv2d(x, self.w2, self.b2))
        pooled = tensor_mean(x, axis=(2, 3))
        out = self.head.forward(pooled) if self.head is not None else pooled
        return reshape(out, out.shape[1:]) if single else out


def cnn_encode(z, encoder: CNNEncoder) -> DenseTensor:
    return encoder.forward(z)


class MLPClassifier:
    """Linear -> ReLU -> Dropout -> Linear classification head."""

    def __init__(self, in_width: int, hidden: int, num_classes: int,
                 dropout: float = 0.5, rng=None, name: str = "classifier"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.name = name
        self.fc1 = Linear(in_width, hidden, rng, name=f"{name}.fc1")
        self.fc2 = Linear(hidden, num_classes, rng, name=f"{name}.fc2")
        self.dropout = Dropout(dropout)

    def named_params(self, prefix=None):
        prefix = prefix or self.name
        yield from self.fc1.named_params(f"{prefix}.fc1")
        yield from self.fc2.named_params(f"{prefix}.fc2")

    def forward(self, x: DenseTensor, training: bool = False,
                rng: np.random.Generator | None = None,
                dropout_mask: np.ndarray | None = None) -> DenseTensor:
        h = relu(self.fc1.forward(x))
        h = self.dropout.forward(h, training, rng=rng, mask=dropout_mask)
        return self.fc2.forward(h)


def mlp_classify(x, head: MLPClassifier, training: bool = False,
                 rng=None, dropout_mask=None) -> DenseTensor:
    return head.forward(x, training, rng=rng, dropout_mask=dropout_mask)


def cross_entropy(logits: DenseTensor, labels: np.ndarray) -> DenseTensor:
    """Mean softmax cross-entropy; labels are integer class indices."""
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} != ({n},)")
    shift = DenseTensor(logits.data.max(axis=1, keepdims=True))
    z = logits - shift
    log_norm = log(tensor_sum(exp(z), axis=1, keepdims=True))
    log_probs = z - log_norm
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    picked = tensor_sum(mul(log_probs, DenseTensor(onehot)))
    return picked * (-1.0 / n)


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float((np.argmax(logits, axis=1) == np.asarray(labels)).mean())


class AdamState:
    def __init__(self, params: dict[str, DenseTensor], lr: float = 1e-3,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}


def adam_step(params: dict[str, DenseTensor], state: AdamState) -> None:
    """One bias-corrected Adam update from each parameter's .grad (missing or
    None gradients count as zero)."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    scale = state.lr * np.sqrt(1.0 - b2 ** t) / (1.0 - b1 ** t)
    for name, p in params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m[name] = b1 * state.m[name] + (1 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1 - b2) * (g * g)
        p.data = p.data - scale * m / (np.sqrt(v) + state.eps)
