"""Command-line entry point: pretrain, finetune, eval.

Exit codes: 0 success; 2 unusable inputs (dataset, config, output directory);
3 checkpoint incompatible with the requested configuration.
"""
from __future__ import annotations

import argparse
import os
import sys

from .checkpoint import CheckpointError
from .config import RunConfig, load_config, with_overrides
from .graphs import DatasetError
from .pipeline import PipelineError, finetune, pretrain, render_reports


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--dataset", help="synthetic name or TU directory name")
    p.add_argument("--data-root", dest="data_root",
                   help="directory holding TU datasets (default $TOPOTENSOR_DATA)")
    p.add_argument("--seed", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--out", help="output directory (default runs/)")
    p.add_argument("--workers", type=int)
    p.add_argument("--ttl-format", dest="ttl_format",
                   choices=("cp", "tucker", "tt", "dense"))
    p.add_argument("--ttl-rank", dest="ttl_rank", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--tau", type=int)
    p.add_argument("--filtrations",
                   help="comma list from degree,betweenness,closeness,eigenvector")
    p.add_argument("--resolution", type=int)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--zeta", type=float)
    p.add_argument("--folds", type=int)
    p.add_argument("--epi-cache", dest="epi_cache", action="store_true",
                   default=None)
    p.add_argument("--ph-only", dest="ph_only", action="store_true", default=None)
    p.add_argument("--disable-tda", dest="disable_tda", action="store_true",
                   default=None)
    p.add_argument("--disable-noise", dest="disable_noise", action="store_true",
                   default=None)
    p.add_argument("--disable-ttl", dest="disable_ttl", action="store_true",
                   default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topotensor",
        description="Topology-augmented contrastive graph classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p_pre = sub.add_parser("pretrain", help="contrastive pretraining")
    _add_run_flags(p_pre)
    p_pre.add_argument("--epochs", type=int, help="pretraining epochs")

    p_fin = sub.add_parser("finetune", help="k-fold fine-tune and evaluate")
    _add_run_flags(p_fin)
    p_fin.add_argument("--epochs", type=int, help="fine-tuning epochs per fold")
    p_fin.add_argument("--checkpoint",
                       help="pretrained checkpoint (default <out>/checkpoint.bin)")

    p_eval = sub.add_parser("eval", help="render a comparison table from reports")
    p_eval.add_argument("reports", nargs="+", help="report.json files")
    p_eval.add_argument("--out", help="directory to write table.md into")
    return parser


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for attr in ("dataset", "data_root", "seed", "batch", "lr", "out", "workers",
                 "ttl_format", "ttl_rank", "hidden", "tau", "resolution",
                 "bandwidth", "sigma", "alpha", "beta", "zeta", "folds",
                 "epi_cache", "ph_only", "disable_tda", "disable_noise",
                 "disable_ttl"):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[attr] = value
    if getattr(args, "filtrations", None):
        overrides["filtration_kinds"] = tuple(
            part.strip() for part in args.filtrations.split(",") if part.strip())
    if getattr(args, "epochs", None) is not None:
        key = "pretrain_epochs" if args.command == "pretrain" else "finetune_epochs"
        overrides[key] = args.epochs
    return with_overrides(cfg, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "eval":
            text, skipped, warnings = render_reports(args.reports)
            for w in warnings:
                print(w, file=sys.stderr)
            if args.out:
                os.makedirs(args.out, exist_ok=True)
                with open(os.path.join(args.out, "table.md"), "w",
                          encoding="utf-8") as fh:
                    fh.write(text)
            print(text, end="")
            return 0
        cfg = _config_from_args(args)
        if args.command == "pretrain":
            _, rows, ckpt = pretrain(cfg)
            print(f"checkpoint: {ckpt}")
            print(f"final loss: total={rows[-1][3]:.6f} "
                  f"graph={rows[-1][1]:.6f} topo={rows[-1][2]:.6f}")
            return 0
        report = finetune(cfg, checkpoint=args.checkpoint)
        print(report.summary())
        print(f"report: {os.path.join(cfg.out, 'report.json')}")
        return 0
    except (DatasetError, PipelineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
