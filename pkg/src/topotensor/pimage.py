"""Persistence images and the stacked per-graph image tensor.

A diagram point (b, d) lands at grid coordinate (b, |d - b|) and deposits an
isotropic Gaussian weighted by its persistence |d - b|, so diagonal points
vanish and long-lived features dominate. Images are sampled at the P x P cell
centers of the unit square; image[i, j] holds the value at birth (j+0.5)/P,
persistence (i+0.5)/P. A graph's tensor stacks one dimension-0 and one
dimension-1 image per filtration: K x 2 x P x P.
"""
from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .eph import ExtendedPersistenceDiagram, extended_persistence, sublevel_persistence
from .filtration import FILTRATIONS, compute_filtration

DEFAULT_RESOLUTION = 50
DEFAULT_BANDWIDTH = 0.05
IMAGES_PER_FILTRATION = 2


def persistence_image(d: ExtendedPersistenceDiagram, dim: int,
                      resolution: int = DEFAULT_RESOLUTION,
                      bandwidth: float = DEFAULT_BANDWIDTH) -> np.ndarray:
    """Weighted Gaussian smoothing of one homology dimension onto a P x P grid."""
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    if resolution < 1:
        raise ValueError(f"resolution must be at least 1, got {resolution}")
    centers = (np.arange(resolution) + 0.5) / resolution
    image = np.zeros((resolution, resolution))
    var2 = 2.0 * bandwidth * bandwidth
    norm = 1.0 / (2.0 * np.pi * bandwidth * bandwidth)
    for p in d.points_for_dim(dim):
        weight = abs(p.death - p.birth)
        if weight == 0.0:
            continue
        gx = np.exp(-((centers - p.birth) ** 2) / var2)
        gy = np.exp(-((centers - weight) ** 2) / var2)
        image += (weight * norm) * np.outer(gy, gx)
    return image


def build_epi_tensor(g, kinds=FILTRATIONS, resolution: int = DEFAULT_RESOLUTION,
                     bandwidth: float = DEFAULT_BANDWIDTH,
                     mode: str = "extended") -> np.ndarray:
    """K x 2 x P x P stack: one (dim-0, dim-1) image pair per filtration kind.

    mode selects the diagram construction: "extended" uses the full
    ascending/descending pairing, "sublevel" caps essential classes at 1.
    """
    kinds = tuple(kinds)
    if not kinds:
        raise ValueError("need at least one filtration kind")
    if mode not in ("extended", "sublevel"):
        raise ValueError(f"unknown diagram mode {mode!r}; valid: extended, sublevel")
    diagram_of = extended_persistence if mode == "extended" else sublevel_persistence
    out = np.zeros((len(kinds), IMAGES_PER_FILTRATION, resolution, resolution))
    for k, kind in enumerate(kinds):
        filt = compute_filtration(g, kind)
        diagram = diagram_of(g, filt)
        for m in range(IMAGES_PER_FILTRATION):
            out[k, m] = persistence_image(diagram, m, resolution, bandwidth)
    return out


def inject_noise(t: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Additive i.i.d. Gaussian noise; sigma = 0 is an exact copy."""
    if sigma < 0:
        raise ValueError(f"noise scale must be nonnegative, got {sigma}")
    t = np.asarray(t, dtype=np.float64)
    if sigma == 0.0:
        return t.copy()
    return t + rng.normal(0.0, sigma, size=t.shape)


# -- on-disk cache ------------------------------------------------------------

def save_epi_cache(path: str, stack: np.ndarray, quantize: bool = True) -> None:
    """Write an N x K x M x P x P stack with a 16-byte header (K, M, P, float
    size, little-endian u32 each). quantize stores 32-bit floats; otherwise 64."""
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 5 or stack.shape[3] != stack.shape[4]:
        raise ValueError(f"expected N x K x M x P x P stack, got {stack.shape}")
    _, k, m, p, _ = stack.shape
    dtype = "<f4" if quantize else "<f8"
    itemsize = 4 if quantize else 8
    blob = struct.pack("<4I", k, m, p, itemsize) + stack.astype(dtype).tobytes()
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".",
                               suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_epi_cache(path: str) -> np.ndarray:
    """Read a cache written by save_epi_cache; returns float64 N x K x M x P x P."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise ValueError(f"{path}: too short to hold a cache header")
    k, m, p, itemsize = struct.unpack("<4I", blob[:16])
    if itemsize not in (4, 8):
        raise ValueError(f"{path}: unsupported float size {itemsize}")
    record = k * m * p * p * itemsize
    body = len(blob) - 16
    if record == 0 or body % record != 0:
        raise ValueError(f"{path}: body of {body} bytes does not hold whole "
                         f"{k}x{m}x{p}x{p} records")
    dtype = "<f4" if itemsize == 4 else "<f8"
    stack = np.frombuffer(blob, dtype=dtype, offset=16)
    return stack.reshape(body // record, k, m, p, p).astype(np.float64)
