"""End-to-end orchestration: dataset resolution, contrastive pretraining,
stratified cross-validated fine-tuning, and report rendering.

Every random draw comes from a SeedSequence keyed by (run seed, purpose tag,
...indices), so results depend only on the configuration and seed - not on
wall clock, worker count, or call order.
"""
from __future__ import annotations

import json
import multiprocessing
import os
import time
import zlib
from dataclasses import dataclass, asdict

import numpy as np

from .config import RunConfig
from .augment import pair_for_dataset
from .contrastive import (
    TAG_DROPOUT, TAG_FINETUNE_SHUFFLE, TAG_FOLDS, TAG_INIT, _stream,
    pretrain_epoch,
)
from .graphs import DatasetError, GraphDataset, load_tudataset
from .model import ModelConfig, TwoChannelModel
from .nn import AdamState, accuracy, adam_step, cross_entropy
from .pimage import build_epi_tensor, load_epi_cache, save_epi_cache
from .synth import SYNTHETIC_DATASETS


class PipelineError(Exception):
    pass


def load_dataset(cfg: RunConfig) -> GraphDataset:
    """Synthetic names resolve to generators; anything else is a TU-format
    directory under the data root."""
    if cfg.dataset in SYNTHETIC_DATASETS:
        return SYNTHETIC_DATASETS[cfg.dataset]()
    root = cfg.resolved_data_root()
    if root is None:
        raise DatasetError(f"dataset {cfg.dataset!r} is not a built-in synthetic "
                           f"set and no data root is configured (flag --data-root "
                           f"or ${'TOPOTENSOR_DATA'})")
    return load_tudataset(root, cfg.dataset)


def ensure_outdir(cfg: RunConfig) -> str:
    try:
        os.makedirs(cfg.out, exist_ok=True)
        probe = os.path.join(cfg.out, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("ok")
        os.unlink(probe)
    except OSError as exc:
        raise PipelineError(f"output directory {cfg.out!r} is not writable: "
                            f"{exc}") from exc
    return cfg.out


def _epi_job(args):
    g, kinds, resolution, bandwidth, mode = args
    return build_epi_tensor(g, kinds, resolution, bandwidth, mode=mode)


def epi_stack(dataset: GraphDataset, cfg: RunConfig) -> np.ndarray:
    """Image tensors of the original graphs, (n, K, 2, P, P).

    With the cache enabled the stack always round-trips through the 32-bit
    on-disk encoding, so cached and cache-building runs see identical values.
    """
    cache_path = None
    if cfg.epi_cache:
        tag = f"{dataset.name}_{cfg.content_hash()[:12]}_{cfg.diagram_mode()}"
        cache_path = os.path.join(ensure_outdir(cfg), f"epi_{tag}.cache")
        if os.path.exists(cache_path):
            stack = load_epi_cache(cache_path)
            if len(stack) == len(dataset.graphs):
                return stack
    jobs = [(g, cfg.filtration_kinds, cfg.resolution, cfg.bandwidth,
             cfg.diagram_mode()) for g in dataset.graphs]
    if cfg.workers > 0:
        with multiprocessing.Pool(cfg.workers) as pool:
            tensors = pool.map(_epi_job, jobs)
    else:
        tensors = [_epi_job(job) for job in jobs]
    stack = np.stack(tensors)
    if cache_path is not None:
        save_epi_cache(cache_path, stack, quantize=True)
        stack = load_epi_cache(cache_path)
    return stack


def stratified_folds(labels: np.ndarray, n_folds: int,
                     rng: np.random.Generator) -> list:
    """Class-balanced k-fold split; returns (train_idx, test_idx) arrays."""
    labels = np.asarray(labels)
    if len(labels) < n_folds:
        raise ValueError(f"cannot split {len(labels)} graphs into {n_folds} folds")
    buckets = [[] for _ in range(n_folds)]
    for cls in sorted(set(labels.tolist())):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(len(members))]
        for pos, idx in enumerate(members):
            buckets[pos % n_folds].append(int(idx))
    folds = []
    everything = set(range(len(labels)))
    for bucket in buckets:
        test = sorted(bucket)
        train = sorted(everything - set(test))
        folds.append((np.array(train, dtype=int), np.array(test, dtype=int)))
    return folds


def fold_rng(cfg: RunConfig, dataset_name: str) -> np.random.Generator:
    """The fold partition is a function of (dataset name, seed) alone."""
    key = zlib.crc32(dataset_name.encode("utf-8"))
    return _stream(cfg.seed, TAG_FOLDS, key)


def build_model(cfg: RunConfig, dataset: GraphDataset,
                fold: int | None = None) -> TwoChannelModel:
    mc = ModelConfig(
        feature_dim=dataset.feature_dim,
        num_classes=dataset.num_classes,
        hidden=cfg.hidden,
        gcn_layers=cfg.gcn_layers,
        tau=cfg.tau,
        ttl_format=cfg.ttl_format,
        ttl_rank=cfg.ttl_rank,
        filtration_kinds=tuple(cfg.filtration_kinds),
        resolution=cfg.resolution,
        bandwidth=cfg.bandwidth,
        dropout=cfg.dropout,
        use_tda=cfg.use_tda(),
        use_ttl=cfg.use_ttl(),
        diagram_mode=cfg.diagram_mode(),
    )
    key = [cfg.seed, TAG_INIT] if fold is None else [cfg.seed, TAG_INIT, fold + 1]
    return TwoChannelModel(mc, rng=_stream(*key))


def write_loss_csv(path: str, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,graph_loss,topo_loss,total_loss\n")
        for epoch, g, t, total in rows:
            fh.write(f"{epoch},{g:.10f},{t:.10f},{total:.10f}\n")


def pretrain(cfg: RunConfig, dataset: GraphDataset | None = None):
    """Contrastive pretraining; writes checkpoint.bin and pretrain_loss.csv.

    Returns (model, loss rows, checkpoint path).
    """
    cfg.validate()
    dataset = dataset if dataset is not None else load_dataset(cfg)
    outdir = ensure_outdir(cfg)
    model = build_model(cfg, dataset)
    params = model.pretrain_parameters()
    state = AdamState(params, lr=cfg.lr)
    pair = pair_for_dataset(dataset.name)
    lookup = None
    if cfg.use_tda() and cfg.effective_beta() > 0 \
            and "identical" in (pair[0].kind, pair[1].kind):
        originals = epi_stack(dataset, cfg)
        lookup = lambda i: originals[i]
    rows = []
    for epoch in range(cfg.pretrain_epochs):
        g_loss, t_loss, total = pretrain_epoch(model, dataset, cfg, state,
                                               epoch, pair, lookup)
        rows.append((epoch, g_loss, t_loss, total))
    write_loss_csv(os.path.join(outdir, "pretrain_loss.csv"), rows)
    ckpt = os.path.join(outdir, "checkpoint.bin")
    model.save_pretrained(ckpt, {"config_hash": cfg.content_hash(),
                                 "dataset": dataset.name,
                                 "pretrain_epochs": cfg.pretrain_epochs})
    return model, rows, ckpt


@dataclass
class EvalReport:
    dataset: str
    variant: str
    seed: int
    config_hash: str
    fold_accuracies: list
    mean: float
    std: float
    seconds: float

    @classmethod
    def from_folds(cls, cfg: RunConfig, dataset_name: str, accs: list,
                   seconds: float) -> "EvalReport":
        accs = [float(a) for a in accs]
        return cls(dataset=dataset_name, variant=cfg.variant_label(),
                   seed=cfg.seed, config_hash=cfg.content_hash(),
                   fold_accuracies=accs, mean=float(np.mean(accs)),
                   std=float(np.std(accs)), seconds=float(seconds))

    def to_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path: str) -> "EvalReport":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(**{f: raw[f] for f in cls.__dataclass_fields__})

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("fold,accuracy\n")
            for k, acc in enumerate(self.fold_accuracies):
                fh.write(f"{k},{acc:.10f}\n")
            fh.write(f"mean,{self.mean:.10f}\n")
            fh.write(f"std,{self.std:.10f}\n")

    def summary(self) -> str:
        return (f"{self.dataset} [{self.variant}] seed={self.seed}: "
                f"{100 * self.mean:.2f}% +- {100 * self.std:.2f}%")


def finetune(cfg: RunConfig, checkpoint: str | None = None,
             dataset: GraphDataset | None = None) -> EvalReport:
    """Stratified k-fold evaluation: each fold reloads the pretrained encoders,
    fine-tunes everything end to end on the training split's original graphs,
    and scores the held-out split."""
    cfg.validate()
    dataset = dataset if dataset is not None else load_dataset(cfg)
    outdir = ensure_outdir(cfg)
    ckpt = checkpoint or os.path.join(outdir, "checkpoint.bin")
    if not os.path.isfile(ckpt):
        raise PipelineError(f"no checkpoint at {ckpt}; run pretrain first "
                            f"or pass --checkpoint")
    labels = dataset.labels()
    folds = stratified_folds(labels, cfg.folds, fold_rng(cfg, dataset.name))
    epis = epi_stack(dataset, cfg) if cfg.use_tda() else None
    started = time.perf_counter()
    accs = []
    for k, (train_idx, test_idx) in enumerate(folds):
        model = build_model(cfg, dataset, fold=k)
        model.load_pretrained(ckpt)
        params = model.parameters()
        state = AdamState(params, lr=cfg.lr)
        for epoch in range(cfg.finetune_epochs):
            order = _stream(cfg.seed, TAG_FINETUNE_SHUFFLE, k, epoch) \
                .permutation(train_idx)
            for batch_no, start in enumerate(range(0, len(order), cfg.batch)):
                bidx = order[start:start + cfg.batch]
                graphs = [dataset.graphs[i] for i in bidx]
                gvec = model.graph_embed(graphs, training=True)
                tvec = model.topo_embed(epis[bidx], training=True) \
                    if epis is not None else None
                drop_rng = _stream(cfg.seed, TAG_DROPOUT, k, epoch, batch_no)
                logits = model.classify(gvec, tvec, training=True, rng=drop_rng)
                loss = cross_entropy(logits, labels[bidx])
                for p in params.values():
                    p.zero_grad()
                loss.backward()
                adam_step(params, state)
        test_graphs = [dataset.graphs[i] for i in test_idx]
        gvec = model.graph_embed(test_graphs, training=False)
        tvec = model.topo_embed(epis[test_idx], training=False) \
            if epis is not None else None
        logits = model.classify(gvec, tvec, training=False)
        accs.append(accuracy(logits.data, labels[test_idx]))
    report = EvalReport.from_folds(cfg, dataset.name, accs,
                                   time.perf_counter() - started)
    report.to_json(os.path.join(outdir, "report.json"))
    report.to_csv(os.path.join(outdir, "report.csv"))
    return report


def render_reports(paths: list) -> tuple[str, int, list]:
    """Markdown comparison table for any number of report.json files.

    Returns (markdown text, skipped count, warnings)."""
    rows = []
    warnings = []
    for path in paths:
        try:
            rows.append(EvalReport.from_json(path))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            warnings.append(f"skipping {path}: {exc}")
    lines = [
        "| dataset | variant | seed | accuracy | folds | config |",
        "|---|---|---|---|---|---|",
    ]
    for r in rows:
        lines.append(f"| {r.dataset} | {r.variant} | {r.seed} | "
                     f"{100 * r.mean:.2f}% ± {100 * r.std:.2f}% | "
                     f"{len(r.fold_accuracies)} | {r.config_hash[:8]} |")
    skipped = len(warnings)
    lines.append("")
    lines.append(f"reports: {len(rows)} rendered, {skipped} skipped")
    return "\n".join(lines) + "\n", skipped, warnings
