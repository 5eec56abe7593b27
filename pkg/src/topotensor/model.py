"""Two-channel graph model: GCN embeddings and image-encoded topology, each
funneled through a low-rank tensorized layer, fused for classification.

Channel widths under the ablation switches:

    graph channel   N x L x H --TTL--> H   (or mean-pool + flatten to L*H)
    topo channel    K x 2 x P x P --CNN--> H --TTL--> H   (absent without tda)
    fusion          stack (2, H) --TTL--> H, or plain concatenation

The same encoder objects serve both contrastive views, so weight sharing is
structural rather than a synchronization concern.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import CheckpointError, read_checkpoint, save_checkpoint
from .filtration import FILTRATIONS
from .graphs import Graph
from .lowrank import TTL
from .nn import CNNEncoder, GCNEncoder, MLPClassifier, cnn_encode, gcn_forward
from .pimage import IMAGES_PER_FILTRATION
from .tensor import DenseTensor, concatenate, reshape, stack, tensor_mean

FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    feature_dim: int
    num_classes: int
    hidden: int = 32
    gcn_layers: int = 3
    tau: int = 1
    ttl_format: str = "cp"
    ttl_rank: int = 32
    filtration_kinds: tuple = FILTRATIONS
    resolution: int = 50
    bandwidth: float = 0.05
    cnn_channels: tuple = (16, 32)
    kernel: int = 3
    dropout: float = 0.5
    use_tda: bool = True
    use_ttl: bool = True
    diagram_mode: str = "extended"

    def fingerprint(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "feature_dim": self.feature_dim,
            "hidden": self.hidden,
            "gcn_layers": self.gcn_layers,
            "tau": self.tau,
            "ttl_format": self.ttl_format,
            "ttl_rank": self.ttl_rank,
            "filtration_kinds": list(self.filtration_kinds),
            "resolution": self.resolution,
            "bandwidth": self.bandwidth,
            "cnn_channels": list(self.cnn_channels),
            "kernel": self.kernel,
            "use_tda": self.use_tda,
            "use_ttl": self.use_ttl,
            "diagram_mode": self.diagram_mode,
        }


class TwoChannelModel:
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        h = cfg.hidden
        self.graph_encoder = GCNEncoder(cfg.feature_dim, h, cfg.gcn_layers,
                                        cfg.tau, rng, name="graph_enc")
        self.graph_ttl = TTL((cfg.gcn_layers, h), (h,), cfg.ttl_format,
                             cfg.ttl_rank, rng, name="graph_ttl") \
            if cfg.use_ttl else None
        self.topo_encoder = None
        self.topo_ttl = None
        self.fusion_ttl = None
        if cfg.use_tda:
            in_channels = len(cfg.filtration_kinds) * IMAGES_PER_FILTRATION
            self.topo_encoder = CNNEncoder(in_channels, IMAGES_PER_FILTRATION,
                                           cfg.cnn_channels, cfg.kernel,
                                           head_width=h, rng=rng, name="topo_enc")
            if cfg.use_ttl:
                self.topo_ttl = TTL((h,), (h,), cfg.ttl_format, cfg.ttl_rank,
                                    rng, name="topo_ttl")
                self.fusion_ttl = TTL((2, h), (h,), cfg.ttl_format, cfg.ttl_rank,
                                      rng, name="fusion_ttl")
        self.classifier = MLPClassifier(self._classifier_width(), h,
                                        cfg.num_classes, cfg.dropout, rng,
                                        name="classifier")

    def _graph_width(self) -> int:
        return self.cfg.hidden if self.cfg.use_ttl \
            else self.cfg.gcn_layers * self.cfg.hidden

    def _classifier_width(self) -> int:
        if not self.cfg.use_tda:
            return self._graph_width()
        if self.cfg.use_ttl:
            return self.cfg.hidden
        return self._graph_width() + self.cfg.hidden

    # -- forward passes -----------------------------------------------------

    def graph_embed(self, graphs: list[Graph], training: bool,
                    update_running: bool | None = None) -> DenseTensor:
        """Encode a batch of graphs to (B, graph width)."""
        vecs = []
        for g in graphs:
            layer_outs = gcn_forward(g, self.graph_encoder, training, update_running)
            per_node = stack(layer_outs, axis=1)            # (N, L, H)
            if self.graph_ttl is not None:
                vec = tensor_mean(self.graph_ttl.forward(per_node), axis=0)
            else:
                pooled = tensor_mean(per_node, axis=0)       # (L, H)
                vec = reshape(pooled, (pooled.size,))
            vecs.append(vec)
        return stack(vecs, axis=0)

    def topo_embed(self, epis, training: bool) -> DenseTensor:
        """Encode a (B, K, M, P, P) stack of (possibly noised) image tensors."""
        if self.topo_encoder is None:
            raise RuntimeError("topological channel is disabled in this model")
        x = cnn_encode(epis if isinstance(epis, DenseTensor) else DenseTensor(epis),
                       self.topo_encoder)
        if self.topo_ttl is not None:
            x = self.topo_ttl.forward(x)
        return x

    def classify(self, graph_vecs: DenseTensor, topo_vecs: DenseTensor | None,
                 training: bool = False, rng: np.random.Generator | None = None,
                 dropout_mask: np.ndarray | None = None) -> DenseTensor:
        if self.cfg.use_tda and topo_vecs is None:
            raise ValueError("model fuses two channels but only one was given")
        if topo_vecs is None:
            feats = graph_vecs
        elif self.fusion_ttl is not None:
            feats = self.fusion_ttl.forward(stack([graph_vecs, topo_vecs], axis=1))
        else:
            feats = concatenate([graph_vecs, topo_vecs], axis=1)
        return self.classifier.forward(feats, training, rng=rng,
                                       dropout_mask=dropout_mask)

    # -- parameter plumbing ---------------------------------------------------

    def _components(self, include_head: bool):
        comps = [self.graph_encoder, self.graph_ttl, self.topo_encoder,
                 self.topo_ttl]
        if include_head:
            comps += [self.fusion_ttl, self.classifier]
        return [c for c in comps if c is not None]

    def parameters(self) -> dict[str, DenseTensor]:
        return {name: p for c in self._components(include_head=True)
                for name, p in c.named_params()}

    def pretrain_parameters(self) -> dict[str, DenseTensor]:
        """Everything the contrastive stage trains: encoders and channel TTLs.
        The fusion layer and classifier only exist downstream."""
        return {name: p for c in self._components(include_head=False)
                for name, p in c.named_params()}

    def _batchnorm_layers(self):
        for layer in self.graph_encoder.layers:
            yield layer.bn

    def state_dict(self, pretrain_only: bool = False) -> dict[str, np.ndarray]:
        params = self.pretrain_parameters() if pretrain_only else self.parameters()
        out = {name: p.data.copy() for name, p in params.items()}
        for bn in self._batchnorm_layers():
            out.update({k: v.copy() for k, v in bn.state_arrays().items()})
        return out

    def load_state_dict(self, tensors: dict[str, np.ndarray],
                        subset: bool = False) -> None:
        params = self.parameters()
        running = {}
        for bn in self._batchnorm_layers():
            for key in bn.state_arrays():
                running[key] = bn
        known = set(params) | set(running)
        unknown = sorted(set(tensors) - known)
        if unknown:
            raise CheckpointError(f"unknown parameters in state: {unknown[:5]}")
        if not subset:
            missing = sorted(known - set(tensors))
            if missing:
                raise CheckpointError(f"state lacks parameters: {missing[:5]}")
        for name, value in tensors.items():
            if name in params:
                p = params[name]
                if tuple(value.shape) != tuple(p.data.shape):
                    raise CheckpointError(f"shape mismatch for {name}: stored "
                                          f"{value.shape} vs model {p.data.shape}")
                p.data = np.asarray(value, dtype=np.float64).copy()
            else:
                bn = running[name]
                if name.endswith(".running_mean"):
                    bn.running_mean = np.asarray(value, dtype=np.float64).copy()
                else:
                    bn.running_var = np.asarray(value, dtype=np.float64).copy()

    # -- persistence ----------------------------------------------------------

    def save_pretrained(self, path: str, extra_meta: dict | None = None) -> None:
        meta = {"fingerprint": self.cfg.fingerprint()}
        meta.update(extra_meta or {})
        save_checkpoint(path, self.state_dict(pretrain_only=True), meta)

    def load_pretrained(self, path: str) -> dict:
        meta, tensors = read_checkpoint(path)
        stored = meta.get("fingerprint")
        current = self.cfg.fingerprint()
        if stored != current:
            diffs = sorted(k for k in set(stored or {}) | set(current)
                           if (stored or {}).get(k) != current.get(k))
            raise CheckpointError(f"{path}: checkpoint was built for a different "
                                  f"model configuration (differs on {diffs[:6]})")
        self.load_state_dict(tensors, subset=True)
        return meta
