import numpy as np
import pytest

from topotensor.eph import ExtendedPersistenceDiagram, PersistencePoint
from topotensor.filtration import FILTRATIONS
from topotensor.graphs import Graph
from topotensor.pimage import (
    build_epi_tensor, inject_noise, load_epi_cache, persistence_image,
    save_epi_cache,
)

from helpers import random_connected_graph


def diagram(points):
    return ExtendedPersistenceDiagram(points=list(points))


def pt(b, d, dim=0, cls="ordinary0"):
    return PersistencePoint(birth=b, death=d, dim=dim, pair_class=cls)


def direct_mass(points, resolution, bandwidth):
    centers = (np.arange(resolution) + 0.5) / resolution
    total = 0.0
    for b, d in points:
        w = abs(d - b)
        for cy in centers:
            for cx in centers:
                g = np.exp(-((cx - b) ** 2 + (cy - w) ** 2) / (2 * bandwidth ** 2))
                total += w * g / (2 * np.pi * bandwidth ** 2)
    return total


def test_empty_diagram_gives_zero_image():
    img = persistence_image(diagram([]), 0, resolution=10, bandwidth=0.1)
    assert img.shape == (10, 10)
    assert not img.any()


def test_zero_persistence_point_gives_zero_image():
    img = persistence_image(diagram([pt(0.5, 0.5)]), 0, resolution=10, bandwidth=0.1)
    assert not img.any()


def test_single_point_mass_and_argmax():
    img = persistence_image(diagram([pt(0.2, 0.8)]), 0, resolution=10, bandwidth=0.1)
    assert np.isclose(img.sum(), direct_mass([(0.2, 0.8)], 10, 0.1), rtol=1e-12)
    i, j = np.unravel_index(np.argmax(img), img.shape)
    assert abs((j + 0.5) / 10 - 0.2) <= 0.05 + 1e-12   # birth axis
    assert abs((i + 0.5) / 10 - 0.6) <= 0.05 + 1e-12   # persistence axis


def test_image_selects_dimension():
    d = diagram([pt(0.1, 0.9, dim=0, cls="extended0"),
                 pt(0.3, 0.7, dim=1, cls="extended1")])
    img0 = persistence_image(d, 0, resolution=20, bandwidth=0.05)
    img1 = persistence_image(d, 1, resolution=20, bandwidth=0.05)
    assert np.isclose(img0.sum(), direct_mass([(0.1, 0.9)], 20, 0.05))
    assert np.isclose(img1.sum(), direct_mass([(0.3, 0.7)], 20, 0.05))


def test_additive_over_union():
    rng = np.random.default_rng(0)
    pts1 = [pt(b, d) for b, d in rng.uniform(0, 1, (5, 2))]
    pts2 = [pt(b, d) for b, d in rng.uniform(0, 1, (7, 2))]
    a = persistence_image(diagram(pts1), 0, 25, 0.05)
    b = persistence_image(diagram(pts2), 0, 25, 0.05)
    both = persistence_image(diagram(pts1 + pts2), 0, 25, 0.05)
    # additive up to float association order, which grouping cannot preserve
    assert np.allclose(both, a + b, rtol=1e-12, atol=1e-14)


def test_doubling_interior_persistence_grows_mass():
    # Away from the top edge of the unit grid, doubling every persistence
    # at least doubles the deposited weight while the kernels stay inside.
    rng = np.random.default_rng(1)
    for _ in range(20):
        births = rng.uniform(0, 0.5, 6)
        pers = rng.uniform(0.01, 0.4, 6)
        base = [pt(b, b + p) for b, p in zip(births, pers)]
        doubled = [pt(b, b + min(2 * p, 1.0)) for b, p in zip(births, pers)]
        m0 = persistence_image(diagram(base), 0, 50, 0.05).sum()
        m1 = persistence_image(diagram(doubled), 0, 50, 0.05).sum()
        assert m1 >= m0


def test_build_epi_tensor_default_shape():
    g = random_connected_graph(np.random.default_rng(2), 9, extra_edges=3)
    t = build_epi_tensor(g, resolution=50)
    assert t.shape == (4, 2, 50, 50)
    assert np.isfinite(t).all() and (t >= 0).all()


def test_build_epi_tensor_single_kind():
    g = random_connected_graph(np.random.default_rng(3), 7)
    t = build_epi_tensor(g, kinds=("degree",), resolution=12)
    assert t.shape == (1, 2, 12, 12)


def test_tree_has_zero_dim1_slices():
    g = random_connected_graph(np.random.default_rng(4), 10, extra_edges=0)
    t = build_epi_tensor(g, resolution=16)
    assert not t[:, 1].any()
    assert t[:, 0].any()


def test_unicyclic_has_dim1_mass():
    g = random_connected_graph(np.random.default_rng(5), 10, extra_edges=1)
    t = build_epi_tensor(g, resolution=16)
    assert t[:, 1].any()


def test_build_epi_tensor_validates():
    g = random_connected_graph(np.random.default_rng(6), 5)
    with pytest.raises(ValueError, match="at least one filtration"):
        build_epi_tensor(g, kinds=())
    with pytest.raises(ValueError, match="mode"):
        build_epi_tensor(g, mode="super")


def test_sublevel_mode_differs_from_extended():
    g = random_connected_graph(np.random.default_rng(7), 9, extra_edges=2)
    full = build_epi_tensor(g, resolution=20, mode="extended")
    sub = build_epi_tensor(g, resolution=20, mode="sublevel")
    assert full.shape == sub.shape
    assert not np.allclose(full, sub)


def test_inject_noise_zero_sigma_identity():
    t = np.random.default_rng(8).uniform(0, 1, (2, 2, 5, 5))
    out = inject_noise(t, 0.0, np.random.default_rng(0))
    assert np.array_equal(out, t)
    assert out is not t


def test_inject_noise_moments_and_determinism():
    t = np.zeros((4, 2, 50, 50))
    for seed in (0, 1, 2):
        noise = inject_noise(t, 1.0, np.random.default_rng(seed))
        assert abs(noise.mean()) < 0.02
        assert abs(noise.var() - 1.0) < 0.05
    a = inject_noise(t, 1.0, np.random.default_rng(42))
    b = inject_noise(t, 1.0, np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_inject_noise_rejects_negative_sigma():
    with pytest.raises(ValueError, match="nonnegative"):
        inject_noise(np.zeros((1, 1, 2, 2)), -0.5, np.random.default_rng(0))


def test_epi_cache_round_trip_float32(tmp_path):
    rng = np.random.default_rng(9)
    stack = rng.uniform(0, 3, (6, 4, 2, 10, 10))
    path = str(tmp_path / "cache.epi")
    save_epi_cache(path, stack, quantize=True)
    loaded = load_epi_cache(path)
    assert loaded.shape == stack.shape
    assert loaded.dtype == np.float64
    assert np.allclose(loaded, stack, atol=1e-6)
    assert np.array_equal(loaded, stack.astype(np.float32).astype(np.float64))


def test_epi_cache_round_trip_float64(tmp_path):
    rng = np.random.default_rng(10)
    stack = rng.uniform(0, 3, (3, 1, 2, 7, 7))
    path = str(tmp_path / "cache64.epi")
    save_epi_cache(path, stack, quantize=False)
    assert np.array_equal(load_epi_cache(path), stack)


def test_epi_cache_rejects_garbage(tmp_path):
    short = tmp_path / "short.epi"
    short.write_bytes(b"\x01\x02")
    with pytest.raises(ValueError, match="header"):
        load_epi_cache(str(short))
    path = str(tmp_path / "c.epi")
    save_epi_cache(path, np.zeros((2, 1, 2, 4, 4)))
    blob = open(path, "rb").read()
    bad = tmp_path / "bad.epi"
    bad.write_bytes(blob[:-3])
    with pytest.raises(ValueError, match="whole"):
        load_epi_cache(str(bad))
    with pytest.raises(ValueError, match="stack"):
        save_epi_cache(str(tmp_path / "x.epi"), np.zeros((2, 4, 4)))


def test_all_filtrations_used_by_default():
    assert len(FILTRATIONS) == 4
