"""Run configuration: flat key=value files, CLI overrides, content hashing.

Files hold one dotted key per line (`loss.zeta = 0.5`); blank lines and `#`
comments are ignored. Every semantic field feeds the content hash embedded in
reports, so two runs with the same hash saw the same knobs; purely operational
fields (output directory, data root, worker count, cache toggle) stay out of
the hash.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields, replace

from .augment import KINDS  # noqa: F401  (re-export convenience for callers)
from .filtration import FILTRATIONS

DATA_ENV = "TOPOTENSOR_DATA"
TTL_FORMATS = ("cp", "tucker", "tt", "dense")

# dotted file/CLI keys -> dataclass attribute
KEYMAP = {
    "dataset": "dataset",
    "data_root": "data_root",
    "seed": "seed",
    "out": "out",
    "train.batch": "batch",
    "train.pretrain_epochs": "pretrain_epochs",
    "train.finetune_epochs": "finetune_epochs",
    "train.lr": "lr",
    "train.workers": "workers",
    "model.hidden": "hidden",
    "model.gcn_layers": "gcn_layers",
    "model.tau": "tau",
    "model.dropout": "dropout",
    "ttl.format": "ttl_format",
    "ttl.rank": "ttl_rank",
    "filtration.kinds": "filtration_kinds",
    "epi.resolution": "resolution",
    "epi.bandwidth": "bandwidth",
    "epi.cache": "epi_cache",
    "noise.sigma": "sigma",
    "loss.alpha": "alpha",
    "loss.beta": "beta",
    "loss.zeta": "zeta",
    "loss.include_positive_in_denominator": "include_positive_in_denominator",
    "eval.folds": "folds",
    "ablate.ph_only": "ph_only",
    "ablate.disable_tda": "disable_tda",
    "ablate.disable_noise": "disable_noise",
    "ablate.disable_ttl": "disable_ttl",
}
_ATTR_TO_KEY = {v: k for k, v in KEYMAP.items()}
_UNHASHED = {"out", "data_root", "workers", "epi_cache"}


@dataclass
class RunConfig:
    dataset: str = "mutag_like"
    data_root: str | None = None
    seed: int = 0
    out: str = "runs"
    batch: int = 32
    pretrain_epochs: int = 50
    finetune_epochs: int = 30
    lr: float = 1e-3
    workers: int = 0
    hidden: int = 32
    gcn_layers: int = 3
    tau: int = 1
    dropout: float = 0.5
    ttl_format: str = "cp"
    ttl_rank: int = 32
    filtration_kinds: tuple = FILTRATIONS
    resolution: int = 50
    bandwidth: float = 0.05
    epi_cache: bool = False
    sigma: float = 1.0
    alpha: float = 1.0
    beta: float = 0.3
    zeta: float = 0.5
    include_positive_in_denominator: bool = False
    folds: int = 10
    ph_only: bool = False
    disable_tda: bool = False
    disable_noise: bool = False
    disable_ttl: bool = False

    # -- derived views -------------------------------------------------------
    def effective_beta(self) -> float:
        return 0.0 if self.disable_tda else self.beta

    def effective_sigma(self) -> float:
        return 0.0 if self.disable_noise else self.sigma

    def diagram_mode(self) -> str:
        return "sublevel" if self.ph_only else "extended"

    def use_tda(self) -> bool:
        return not self.disable_tda

    def use_ttl(self) -> bool:
        return not self.disable_ttl

    def resolved_data_root(self) -> str | None:
        return self.data_root or os.environ.get(DATA_ENV)

    def variant_label(self) -> str:
        flags = [name for name in ("ph_only", "disable_tda", "disable_noise",
                                   "disable_ttl") if getattr(self, name)]
        return "+".join(flags) if flags else "full"

    # -- validation -----------------------------------------------------------
    def validate(self) -> "RunConfig":
        if not self.dataset:
            raise ValueError("dataset name must be nonempty")
        if self.batch < 2:
            raise ValueError(f"batch size must be at least 2, got {self.batch}")
        if self.pretrain_epochs < 1 or self.finetune_epochs < 1:
            raise ValueError("epoch counts must be at least 1")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.hidden < 1 or self.gcn_layers < 1 or self.ttl_rank < 1:
            raise ValueError("widths, layer count and rank must be at least 1")
        if self.tau < 1:
            raise ValueError(f"propagation power must be at least 1, got {self.tau}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.ttl_format not in TTL_FORMATS:
            raise ValueError(f"unknown ttl format {self.ttl_format!r}; "
                             f"valid: {', '.join(TTL_FORMATS)}")
        unknown = [k for k in self.filtration_kinds if k not in FILTRATIONS]
        if unknown or not self.filtration_kinds:
            raise ValueError(f"filtration kinds must be a nonempty subset of "
                             f"{FILTRATIONS}, got {self.filtration_kinds}")
        if self.resolution < 1 or self.bandwidth <= 0:
            raise ValueError("image resolution must be >= 1 and bandwidth > 0")
        if self.sigma < 0 or self.alpha < 0 or self.beta < 0:
            raise ValueError("sigma, alpha and beta must be nonnegative")
        if self.zeta <= 0:
            raise ValueError(f"temperature must be positive, got {self.zeta}")
        if self.folds < 2:
            raise ValueError(f"need at least 2 folds, got {self.folds}")
        if self.workers < 0:
            raise ValueError(f"worker count must be nonnegative, got {self.workers}")
        return self

    # -- serialization ---------------------------------------------------------
    def canonical_items(self, hashed_only: bool = False):
        for key in sorted(KEYMAP):
            attr = KEYMAP[key]
            if hashed_only and attr in _UNHASHED:
                continue
            value = getattr(self, attr)
            if isinstance(value, tuple):
                value = ",".join(value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif value is None:
                value = ""
            yield key, str(value)

    def content_hash(self) -> str:
        text = "\n".join(f"{k}={v}" for k, v in self.canonical_items(True))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def dump(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for k, v in self.canonical_items():
                fh.write(f"{k} = {v}\n")


def _convert(attr: str, raw: str):
    raw = raw.strip()
    hints = {f.name: f.type for f in fields(RunConfig)}
    kind = hints[attr]
    if attr == "filtration_kinds":
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    if kind == "bool":
        lowered = raw.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"cannot read {raw!r} as a boolean")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if attr == "data_root":
        return raw or None
    return raw


def parse_assignments(pairs: dict[str, str]) -> dict:
    """Map {dotted key: raw string} to {attribute: typed value}."""
    out = {}
    for key, raw in pairs.items():
        if key not in KEYMAP:
            raise ValueError(f"unknown config key {key!r}")
        attr = KEYMAP[key]
        out[attr] = _convert(attr, raw)
    return out


def load_config(path: str) -> RunConfig:
    pairs = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected key = value, "
                                 f"got {stripped!r}")
            key, _, raw = stripped.partition("=")
            pairs[key.strip()] = raw
    try:
        updates = parse_assignments(pairs)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    return replace(RunConfig(), **updates).validate()


def with_overrides(cfg: RunConfig, **attrs) -> RunConfig:
    attrs = {k: v for k, v in attrs.items() if v is not None}
    return replace(cfg, **attrs).validate()
