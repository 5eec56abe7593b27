"""Contrastive objective: closed forms, invariances, gradients, epoch mechanics."""
import numpy as np
import pytest

from topotensor.augment import AugmentationKind
from topotensor.contrastive import (
    LossWeights, ViewBatch, combined_loss, cosine_similarity, nt_xent,
    pretrain_epoch,
)
from topotensor.config import RunConfig, with_overrides
from topotensor.model import ModelConfig, TwoChannelModel
from topotensor.nn import AdamState
from topotensor.pimage import build_epi_tensor
from topotensor.synth import make_trees_vs_cycles
from topotensor.tensor import DenseTensor, finite_difference_check


# -- cosine similarity --------------------------------------------------------

def test_cosine_of_equal_vectors_is_one():
    v = np.array([1.0, -2.0, 3.0])
    assert cosine_similarity(DenseTensor(v), DenseTensor(v.copy())).item() == pytest.approx(1.0, abs=1e-12)


def test_cosine_of_orthogonal_vectors_is_zero():
    a = DenseTensor(np.array([1.0, 0.0, 0.0]))
    b = DenseTensor(np.array([0.0, 2.0, 0.0]))
    assert cosine_similarity(a, b).item() == pytest.approx(0.0, abs=1e-12)


def test_cosine_of_negated_vector_is_minus_one():
    v = np.array([0.5, -1.5, 2.0])
    assert cosine_similarity(DenseTensor(v), DenseTensor(-v)).item() == pytest.approx(-1.0, abs=1e-12)


def test_cosine_zero_vector_is_zero_not_nan():
    a = DenseTensor(np.zeros(4))
    b = DenseTensor(np.ones(4))
    assert cosine_similarity(a, b).item() == 0.0


def test_cosine_length_mismatch_raises():
    with pytest.raises(ValueError, match="equal-length"):
        cosine_similarity(DenseTensor(np.ones(3)), DenseTensor(np.ones(4)))


# -- nt_xent closed forms -----------------------------------------------------

def _two_pair_batch():
    # positives perfectly aligned, every negative orthogonal
    v1 = np.array([[1.0, 0.0, 0.0, 0.0],
                   [0.0, 1.0, 0.0, 0.0]])
    return ViewBatch(v1, v1.copy())


def test_two_graph_batch_closed_form():
    # numerator exp(1/z), denominator two orthogonal negatives = 2
    loss = nt_xent(_two_pair_batch(), zeta=1.0)
    assert loss.item() == pytest.approx(np.log(2.0) - 1.0, abs=1e-10)


def test_two_graph_batch_closed_form_other_temperature():
    loss = nt_xent(_two_pair_batch(), zeta=0.5)
    assert loss.item() == pytest.approx(np.log(2.0) - 2.0, abs=1e-10)


def test_include_positive_flag_adds_it_to_denominator():
    loss = nt_xent(_two_pair_batch(), zeta=1.0, include_positive=True)
    assert loss.item() == pytest.approx(np.log(np.e + 2.0) - 1.0, abs=1e-10)


def test_loss_decreases_as_positive_similarity_grows():
    # anchors on dedicated axes: every cross-pair similarity is exactly 0,
    # so the loss reduces to log(2) - s/zeta
    losses = []
    for s in (0.0, 0.5, 0.9):
        c = np.sqrt(1.0 - s * s)
        v1 = np.zeros((2, 8))
        v2 = np.zeros((2, 8))
        v1[0, 0] = 1.0
        v1[1, 2] = 1.0
        v2[0, 0], v2[0, 1] = s, c
        v2[1, 2], v2[1, 3] = s, c
        loss = nt_xent(ViewBatch(v1, v2), zeta=1.0).item()
        assert loss == pytest.approx(np.log(2.0) - s, abs=1e-10)
        losses.append(loss)
    assert losses[0] > losses[1] > losses[2]


def test_loss_invariant_to_row_scaling():
    rng = np.random.default_rng(5)
    v1 = rng.normal(size=(6, 9))
    v2 = rng.normal(size=(6, 9))
    a = nt_xent(ViewBatch(v1, v2)).item()
    b = nt_xent(ViewBatch(v1 * 3.0, v2 * 0.25)).item()
    assert a == pytest.approx(b, abs=1e-12)


def test_loss_invariant_to_common_row_permutation():
    rng = np.random.default_rng(6)
    v1 = rng.normal(size=(7, 5))
    v2 = rng.normal(size=(7, 5))
    perm = rng.permutation(7)
    a = nt_xent(ViewBatch(v1, v2)).item()
    b = nt_xent(ViewBatch(v1[perm], v2[perm])).item()
    assert a == pytest.approx(b, abs=1e-12)


def test_single_graph_batch_rejected():
    v = np.ones((1, 4))
    with pytest.raises(ValueError, match="at least 2 graphs"):
        nt_xent(ViewBatch(v, v.copy()))


def test_nonpositive_temperature_rejected():
    with pytest.raises(ValueError, match="temperature"):
        nt_xent(_two_pair_batch(), zeta=0.0)


def test_nt_xent_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    v1 = DenseTensor(rng.normal(size=(5, 6)), requires_grad=True)
    v2 = DenseTensor(rng.normal(size=(5, 6)), requires_grad=True)
    err = finite_difference_check(
        lambda: nt_xent(ViewBatch(v1, v2), zeta=0.5), [v1, v2],
        rng=np.random.default_rng(8))
    assert err < 1e-4


# -- validation types ---------------------------------------------------------

def test_view_batch_rejects_mismatched_shapes():
    with pytest.raises(ValueError, match="equal N x E"):
        ViewBatch(np.ones((3, 4)), np.ones((4, 4)))


def test_view_batch_rejects_non_matrix():
    with pytest.raises(ValueError, match="equal N x E"):
        ViewBatch(np.ones(4), np.ones(4))


def test_loss_weights_reject_bad_temperature():
    with pytest.raises(ValueError, match="temperature"):
        LossWeights(zeta=-1.0)


def test_loss_weights_reject_negative_channel_weight():
    with pytest.raises(ValueError, match="nonnegative"):
        LossWeights(alpha=-0.5)


# -- combined loss ------------------------------------------------------------

def _random_batches(seed=9):
    rng = np.random.default_rng(seed)
    gb = ViewBatch(rng.normal(size=(4, 6)), rng.normal(size=(4, 6)), "graph")
    tb = ViewBatch(rng.normal(size=(4, 6)), rng.normal(size=(4, 6)), "topo")
    return gb, tb


def test_combined_loss_is_weighted_sum():
    gb, tb = _random_batches()
    w = LossWeights(alpha=1.0, beta=0.3, zeta=0.5)
    total, lg, lt = combined_loss(gb, tb, w)
    assert total.item() == pytest.approx(lg.item() + 0.3 * lt.item(), abs=1e-12)
    assert lg.item() == pytest.approx(nt_xent(gb, 0.5).item(), abs=1e-12)
    assert lt.item() == pytest.approx(nt_xent(tb, 0.5).item(), abs=1e-12)


def test_combined_loss_zero_beta_skips_topo_channel():
    gb, tb = _random_batches()
    total, lg, lt = combined_loss(gb, tb, LossWeights(alpha=2.0, beta=0.0))
    assert lt is None
    assert total.item() == pytest.approx(2.0 * lg.item(), abs=1e-12)


def test_combined_loss_missing_topo_batch():
    gb, _ = _random_batches()
    total, lg, lt = combined_loss(gb, None, LossWeights())
    assert lt is None
    assert total.item() == pytest.approx(lg.item(), abs=1e-12)


def test_combined_loss_graph_channel_can_be_silenced():
    gb, tb = _random_batches()
    total, lg, lt = combined_loss(gb, tb, LossWeights(alpha=0.0, beta=1.0))
    assert total.item() == pytest.approx(lt.item(), abs=1e-12)


# -- pretrain epoch mechanics -------------------------------------------------

def _tiny_setup(num_graphs=4, hidden=8, resolution=10):
    dataset = make_trees_vs_cycles(per_class=num_graphs // 2, seed=3)
    cfg = RunConfig(dataset="trees_vs_cycles", batch=num_graphs, hidden=hidden,
                    resolution=resolution, seed=11)
    mc = ModelConfig(feature_dim=dataset.feature_dim, num_classes=2,
                     hidden=hidden, resolution=resolution)
    model = TwoChannelModel(mc, rng=np.random.default_rng(1))
    return model, dataset, cfg


def _snapshot(params):
    return {k: p.data.copy() for k, p in params.items()}


def test_zero_learning_rate_leaves_parameters_unchanged():
    model, dataset, cfg = _tiny_setup()
    params = model.pretrain_parameters()
    before = _snapshot(params)
    state = AdamState(params, lr=0.0)
    pair = (AugmentationKind("node_drop"), AugmentationKind("edge_pert"))
    pretrain_epoch(model, dataset, cfg, state, epoch=0, pair=pair)
    for name, arr in before.items():
        assert np.array_equal(arr, params[name].data), name


def test_epoch_is_deterministic_for_fixed_seed():
    results = []
    for _ in range(2):
        model, dataset, cfg = _tiny_setup()
        state = AdamState(model.pretrain_parameters(), lr=1e-3)
        pair = (AugmentationKind("node_drop"), AugmentationKind("edge_pert"))
        losses = pretrain_epoch(model, dataset, cfg, state, epoch=0, pair=pair)
        results.append((losses, _snapshot(model.pretrain_parameters())))
    assert results[0][0] == results[1][0]
    for name, arr in results[0][1].items():
        assert np.array_equal(arr, results[1][1][name]), name


def test_short_trailing_batch_is_skipped():
    model, dataset, cfg = _tiny_setup(num_graphs=4)
    cfg = with_overrides(cfg, batch=3)  # batches of 3 and 1; the 1 is dropped
    state = AdamState(model.pretrain_parameters(), lr=1e-3)
    pair = (AugmentationKind("identical"), AugmentationKind("identical"))
    losses = pretrain_epoch(model, dataset, cfg, state, epoch=0, pair=pair)
    assert all(np.isfinite(v) for v in losses)


def test_epoch_with_no_viable_batch_raises():
    model, dataset, cfg = _tiny_setup(num_graphs=4)
    dataset.graphs = dataset.graphs[:1]
    state = AdamState(model.pretrain_parameters(), lr=1e-3)
    pair = (AugmentationKind("identical"), AugmentationKind("identical"))
    with pytest.raises(ValueError, match="at least 2 graphs"):
        pretrain_epoch(model, dataset, cfg, state, epoch=0, pair=pair)


def test_epi_lookup_matches_recomputation_for_identity_views():
    # with identity augmentations and sigma=0 the cached-image path must give
    # exactly the losses of the recompute path
    pair = (AugmentationKind("identical"), AugmentationKind("identical"))
    outcomes = []
    for use_lookup in (False, True):
        model, dataset, cfg = _tiny_setup()
        cfg = with_overrides(cfg, sigma=0.0)
        stack = np.stack([
            build_epi_tensor(g, cfg.filtration_kinds, cfg.resolution,
                             cfg.bandwidth) for g in dataset.graphs])
        lookup = (lambda i: stack[i]) if use_lookup else None
        state = AdamState(model.pretrain_parameters(), lr=1e-3)
        outcomes.append(pretrain_epoch(model, dataset, cfg, state, epoch=0,
                                       pair=pair, epi_lookup=lookup))
    assert outcomes[0] == outcomes[1]
