"""Two-channel contrastive objective over paired graph views.

For a batch of N graphs, each channel embeds two augmented views into rows
0..N-1 and N..2N-1 of one matrix. Anchor i's positive is row N+i; every other
row is a negative. The printed loss excludes the positive from the
denominator; a flag restores the classic form that keeps it. The combined
objective weights the graph and topological channels by alpha and beta.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import AugmentationKind, apply as apply_augmentation
from .pimage import build_epi_tensor, inject_noise
from .nn import AdamState, adam_step
from .tensor import (
    DenseTensor, clamp_min, concatenate, exp, log, matmul, mul, pow_const,
    tensor_mean, tensor_sum, transpose,
)

NORM_FLOOR = 1e-12


@dataclass
class LossWeights:
    alpha: float = 1.0
    beta: float = 0.3
    zeta: float = 0.5
    include_positive_in_denominator: bool = False

    def __post_init__(self):
        if self.zeta <= 0:
            raise ValueError(f"temperature must be positive, got {self.zeta}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("channel weights must be nonnegative")


class ViewBatch:
    """Paired view embeddings, one row per graph, equal shapes."""

    def __init__(self, view1: DenseTensor, view2: DenseTensor, channel: str = ""):
        view1 = view1 if isinstance(view1, DenseTensor) else DenseTensor(view1)
        view2 = view2 if isinstance(view2, DenseTensor) else DenseTensor(view2)
        if view1.shape != view2.shape or view1.ndim != 2:
            raise ValueError(f"paired views must be equal N x E matrices, got "
                             f"{view1.shape} and {view2.shape}")
        self.view1 = view1
        self.view2 = view2
        self.channel = channel

    @property
    def size(self) -> int:
        return self.view1.shape[0]


def cosine_similarity(a: DenseTensor, b: DenseTensor) -> DenseTensor:
    a = a if isinstance(a, DenseTensor) else DenseTensor(a)
    b = b if isinstance(b, DenseTensor) else DenseTensor(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"cosine needs equal-length vectors, got {a.shape} "
                         f"and {b.shape}")
    dot = tensor_sum(mul(a, b))
    na = pow_const(clamp_min(tensor_sum(mul(a, a)), NORM_FLOOR ** 2), 0.5)
    nb = pow_const(clamp_min(tensor_sum(mul(b, b)), NORM_FLOOR ** 2), 0.5)
    return dot / (na * nb)


def _normalize_rows(x: DenseTensor) -> DenseTensor:
    sumsq = tensor_sum(mul(x, x), axis=1, keepdims=True)
    return mul(x, pow_const(clamp_min(sumsq, NORM_FLOOR ** 2), -0.5))


def nt_xent(batch: ViewBatch, zeta: float = 0.5,
            include_positive: bool = False) -> DenseTensor:
    """Mean contrastive loss over the N anchors of a paired-view batch.

    Similarities ride the tape, so calling backward() on the result yields
    gradients with respect to both view matrices.
    """
    if zeta <= 0:
        raise ValueError(f"temperature must be positive, got {zeta}")
    n = batch.size
    if n < 2:
        raise ValueError("contrastive batch needs at least 2 graphs: a single "
                         "pair leaves no negatives")
    z = concatenate([batch.view1, batch.view2], axis=0)
    zn = _normalize_rows(z)
    sims = mul(matmul(zn, transpose(zn)), 1.0 / zeta)        # (2N, 2N)

    take_anchor_rows = np.zeros((n, 2 * n))
    take_anchor_rows[np.arange(n), np.arange(n)] = 1.0
    anchor_sims = matmul(DenseTensor(take_anchor_rows), sims)  # (N, 2N)

    positive_mask = np.zeros((n, 2 * n))
    positive_mask[np.arange(n), n + np.arange(n)] = 1.0
    positives = tensor_sum(mul(anchor_sims, DenseTensor(positive_mask)), axis=1)

    denom_mask = np.ones((n, 2 * n))
    denom_mask[np.arange(n), np.arange(n)] = 0.0             # never self
    if not include_positive:
        denom_mask[np.arange(n), n + np.arange(n)] = 0.0     # printed form
    denominators = tensor_sum(mul(exp(anchor_sims), DenseTensor(denom_mask)),
                              axis=1)
    return tensor_mean(log(denominators) - positives)


def combined_loss(graph_batch: ViewBatch, topo_batch: ViewBatch | None,
                  weights: LossWeights):
    """alpha * graph loss + beta * topo loss.

    Returns (total, graph_loss, topo_loss); topo_loss is None when beta is 0
    or no topological batch exists, and no topological work is done then.
    """
    lg = nt_xent(graph_batch, weights.zeta,
                 weights.include_positive_in_denominator)
    if weights.beta == 0.0 or topo_batch is None:
        return lg * weights.alpha, lg, None
    lt = nt_xent(topo_batch, weights.zeta,
                 weights.include_positive_in_denominator)
    return lg * weights.alpha + lt * weights.beta, lg, lt


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


# stream tags: keep every consumer of the run seed on a disjoint key prefix
TAG_SHUFFLE, TAG_AUGMENT, TAG_NOISE, TAG_DROPOUT, TAG_INIT, TAG_FOLDS = range(6)
TAG_FINETUNE_SHUFFLE = 6


def pretrain_epoch(model, dataset, cfg, state: AdamState, epoch: int,
                   pair: tuple[AugmentationKind, AugmentationKind],
                   epi_lookup=None):
    """One pass of contrastive pretraining; returns mean (graph, topo, total)
    losses over the graphs that formed full batches.

    cfg needs: seed, batch, alpha/beta/zeta (effective), sigma (effective),
    include_positive_in_denominator, filtration_kinds, resolution, bandwidth,
    diagram_mode. epi_lookup maps a graph object to a precomputed image tensor
    (used when an augmentation returns the original graph unchanged).
    """
    weights = LossWeights(cfg.alpha, cfg.effective_beta(), cfg.zeta,
                          cfg.include_positive_in_denominator)
    use_topo = weights.beta > 0.0
    order = _stream(cfg.seed, TAG_SHUFFLE, epoch).permutation(len(dataset.graphs))
    sums = np.zeros(3)
    used = 0
    for start in range(0, len(order), cfg.batch):
        idx = order[start:start + cfg.batch]
        if len(idx) < 2:
            continue
        views = ([], [])
        for i in idx:
            g = dataset.graphs[i]
            for v, kind in enumerate(pair):
                rng = _stream(cfg.seed, TAG_AUGMENT, epoch, int(i), v)
                views[v].append(apply_augmentation(g, kind, rng))
        graph_batch = ViewBatch(
            model.graph_embed(views[0], training=True),
            model.graph_embed(views[1], training=True), channel="graph")
        topo_batch = None
        if use_topo:
            epis = []
            for v, kind in enumerate(pair):
                unchanged = kind.kind == "identical" and epi_lookup is not None
                for slot, i in enumerate(idx):
                    if unchanged:
                        epi = epi_lookup(int(i))
                    else:
                        epi = build_epi_tensor(views[v][slot], cfg.filtration_kinds,
                                               cfg.resolution, cfg.bandwidth,
                                               mode=cfg.diagram_mode())
                    noise_rng = _stream(cfg.seed, TAG_NOISE, epoch, int(i), v)
                    epis.append(inject_noise(epi, cfg.effective_sigma(), noise_rng))
            half = len(idx)
            stackd = np.stack(epis)
            topo_batch = ViewBatch(model.topo_embed(stackd[:half], training=True),
                                   model.topo_embed(stackd[half:], training=True),
                                   channel="topo")
        total, lg, lt = combined_loss(graph_batch, topo_batch, weights)
        params = model.pretrain_parameters()
        for p in params.values():
            p.zero_grad()
        total.backward()
        adam_step(params, state)
        sums += np.array([lg.item(), lt.item() if lt is not None else 0.0,
                          total.item()]) * len(idx)
        used += len(idx)
    if used == 0:
        raise ValueError("dataset has no batch of at least 2 graphs; "
                         "lower the batch size or add graphs")
    return tuple(sums / used)
