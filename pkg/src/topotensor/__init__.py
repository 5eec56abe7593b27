"""Graph contrastive learning with extended persistence images and low-rank tensor layers."""

from topotensor.config import RunConfig, load_config, with_overrides
from topotensor.eph import extended_persistence, sublevel_persistence
from topotensor.graphs import Graph, GraphDataset
from topotensor.model import ModelConfig, TwoChannelModel
from topotensor.pimage import persistence_image
from topotensor.pipeline import EvalReport, epi_stack, finetune, load_dataset, pretrain

__version__ = "0.1.0"

__all__ = [
    "EvalReport", "Graph", "GraphDataset", "ModelConfig", "RunConfig",
    "TwoChannelModel", "epi_stack", "extended_persistence", "finetune",
    "load_config", "load_dataset", "persistence_image", "pretrain",
    "sublevel_persistence", "with_overrides",
]
