"""Scene ingestion and preparation: the HSC container, per-band scaling,
seeded cuboid sampling with a per-class floor, 3-channel PCA features for
the pairwise refinement stage, and a separable synthetic scene generator.
"""

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .crf import grid_features
from .errors import ContractError, FormatError, ShapeError
from .gan import CuboidBatch

HSC_MAGIC = b"HSC1"
HSC_VERSION = 1
_HEADER = struct.Struct("<4sHIIIHB")


@dataclass
class HsiCube:
    """A radiance volume (height, width, bands) with its class count."""

    radiance: np.ndarray
    n_y: int
    band_range: tuple = None
    band_scale: np.ndarray = None  # per-band (min, max) once scaled

    def __post_init__(self):
        self.radiance = np.asarray(self.radiance)
        if self.radiance.ndim != 3:
            raise ShapeError(
                f"radiance must be (height, width, bands), got ndim={self.radiance.ndim}")
        if self.radiance.dtype != np.float32:
            self.radiance = self.radiance.astype(np.float32)
        if not np.isfinite(self.radiance).all():
            raise ContractError("radiance must be finite")
        if self.n_y < 1:
            raise ContractError(f"n_y must be >= 1, got {self.n_y}")

    @property
    def height(self):
        return self.radiance.shape[0]

    @property
    def width(self):
        return self.radiance.shape[1]

    @property
    def bands(self):
        return self.radiance.shape[2]


@dataclass
class LabelMap:
    """Per-pixel class ids; 0 marks unlabeled/background pixels."""

    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 2:
            raise ShapeError(f"labels must be (height, width), got ndim={self.labels.ndim}")
        if self.labels.dtype != np.int32:
            self.labels = self.labels.astype(np.int32)
        if self.labels.min(initial=0) < 0:
            raise ContractError("labels must be nonnegative")


@dataclass
class SplitSpec:
    """How many labeled/unlabeled cuboids to draw and with what seed."""

    labeled_count: int
    unlabeled_count: int = 0
    seed: int = 0
    min_per_class: int = 2


# ---------------------------------------------------------------------------
# HSC container
# ---------------------------------------------------------------------------


def _atomic_write(path, blob):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_hsc(path, cube, labels=None):
    """Write a cube (and optional label map) as an HSC container."""
    if labels is not None:
        lab = labels.labels if isinstance(labels, LabelMap) else np.asarray(labels)
        if lab.shape != (cube.height, cube.width):
            raise ShapeError(
                f"label map {lab.shape} does not match scene "
                f"({cube.height}, {cube.width})")
        if lab.max(initial=0) > cube.n_y:
            bad = np.argwhere(lab > cube.n_y)[0]
            raise ContractError(
                f"label {int(lab[tuple(bad)])} at pixel ({bad[0]}, {bad[1]}) "
                f"exceeds n_y={cube.n_y}")
    flags = 1 if labels is not None else 0
    parts = [_HEADER.pack(HSC_MAGIC, HSC_VERSION, cube.height, cube.width,
                          cube.bands, cube.n_y, flags)]
    parts.append(np.ascontiguousarray(cube.radiance, dtype="<f4").tobytes())
    if labels is not None:
        parts.append(np.ascontiguousarray(lab, dtype="<u2").tobytes())
    _atomic_write(path, b"".join(parts))


def load_hsc(path):
    """Parse an HSC container into (HsiCube, LabelMap).

    Files without a label section yield an all-zero (fully unlabeled) map.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FormatError(
            f"file is {len(blob)} bytes, shorter than the {_HEADER.size}-byte header")
    magic, version, h, w, b, n_y, flags = _HEADER.unpack_from(blob)
    if magic != HSC_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {HSC_MAGIC!r}")
    if version != HSC_VERSION:
        raise FormatError(f"unsupported container version {version}")
    offset = _HEADER.size
    rad_bytes = h * w * b * 4
    if len(blob) < offset + rad_bytes:
        raise FormatError(
            f"radiance payload truncated at byte {len(blob)}, "
            f"expected {offset + rad_bytes} bytes")
    radiance = np.frombuffer(blob, dtype="<f4", count=h * w * b,
                             offset=offset).reshape(h, w, b).copy()
    offset += rad_bytes
    if flags & 1:
        lab_bytes = h * w * 2
        if len(blob) < offset + lab_bytes:
            raise FormatError(
                f"label payload truncated at byte {len(blob)}, "
                f"expected {offset + lab_bytes} bytes")
        raw = np.frombuffer(blob, dtype="<u2", count=h * w,
                            offset=offset).reshape(h, w)
        offset += lab_bytes
        if raw.max(initial=0) > n_y:
            bad = np.argwhere(raw > n_y)[0]
            raise FormatError(
                f"label {int(raw[tuple(bad)])} at pixel ({bad[0]}, {bad[1]}) "
                f"exceeds n_y={n_y}")
        labels = raw.astype(np.int32)
    else:
        labels = np.zeros((h, w), dtype=np.int32)
    if len(blob) != offset:
        raise FormatError(
            f"{len(blob) - offset} trailing bytes after byte {offset}")
    return HsiCube(radiance=radiance, n_y=n_y), LabelMap(labels=labels)


# ---------------------------------------------------------------------------
# band scaling
# ---------------------------------------------------------------------------


def scale_bands(cube):
    """Min-max scale each band to [-1, 1]; constant bands map to zero."""
    x = cube.radiance.astype(np.float64)
    lo = x.min(axis=(0, 1))
    hi = x.max(axis=(0, 1))
    span = hi - lo
    scaled = np.zeros_like(x)
    live = span > 0
    scaled[:, :, live] = 2.0 * (x[:, :, live] - lo[live]) / span[live] - 1.0
    return HsiCube(radiance=scaled.astype(np.float32), n_y=cube.n_y,
                   band_range=cube.band_range,
                   band_scale=np.stack([lo, hi], axis=1))


def unscale_bands(cube):
    """Invert scale_bands using the stored per-band (min, max)."""
    if cube.band_scale is None:
        raise ContractError("cube carries no band_scale to invert")
    lo = cube.band_scale[:, 0]
    hi = cube.band_scale[:, 1]
    x = cube.radiance.astype(np.float64)
    restored = (x + 1.0) / 2.0 * (hi - lo) + lo
    const = hi == lo
    restored[:, :, const] = lo[const]
    return HsiCube(radiance=restored.astype(np.float32), n_y=cube.n_y,
                   band_range=cube.band_range)


# ---------------------------------------------------------------------------
# cuboid sampling
# ---------------------------------------------------------------------------


def extract_cuboids(image, rows, cols, window):
    """Cut (window, window) mirror-padded patches centered at the pixels.

    Padding mode matches whole-scene prediction so a sampled cuboid equals
    the window the classifier later sees at that pixel.
    """
    half = window // 2
    padded = np.pad(image, ((half, half), (half, half), (0, 0)), mode="symmetric")
    out = np.empty((len(rows), window, window, image.shape[2]), dtype=image.dtype)
    for i, (r, c) in enumerate(zip(rows, cols)):
        out[i] = padded[r:r + window, c:c + window]
    return out


def sample_split(cube, labels, spec, window=9):
    """Draw labeled/unlabeled training cuboids and leave the rest for test.

    Returns (labeled CuboidBatch, unlabeled CuboidBatch or None,
    test (n, 2) row/col indices). Labeled draws guarantee the per-class
    floor, then fill uniformly; all three index sets are pairwise disjoint
    and fully determined by spec.seed.
    """
    lab = labels.labels if isinstance(labels, LabelMap) else np.asarray(labels)
    if lab.shape != (cube.height, cube.width):
        raise ShapeError(
            f"label map {lab.shape} does not match scene ({cube.height}, {cube.width})")
    if lab.max(initial=0) > cube.n_y:
        raise ContractError(f"label map exceeds n_y={cube.n_y}")
    if window % 2 == 0 or window < 1:
        raise ContractError(f"window must be odd and positive, got {window}")
    rng = np.random.default_rng(spec.seed)

    flat = lab.ravel()
    per_class = [np.flatnonzero(flat == c) for c in range(1, cube.n_y + 1)]
    short = [c + 1 for c, idx in enumerate(per_class)
             if 0 < len(idx) < spec.min_per_class]
    if short:
        raise ContractError(
            f"classes {short} have fewer than {spec.min_per_class} annotated pixels")
    present = [idx for idx in per_class if len(idx) > 0]
    floor_total = spec.min_per_class * len(present)
    annotated = np.flatnonzero(flat > 0)
    if spec.labeled_count < floor_total:
        raise ContractError(
            f"labeled_count {spec.labeled_count} is below the per-class floor "
            f"{floor_total}")
    if spec.labeled_count > len(annotated):
        raise ContractError(
            f"labeled_count {spec.labeled_count} exceeds the {len(annotated)} "
            f"annotated pixels")

    chosen = [rng.choice(idx, size=spec.min_per_class, replace=False)
              for idx in present]
    already = np.concatenate(chosen) if chosen else np.empty(0, dtype=np.int64)
    remaining = np.setdiff1d(annotated, already)
    extra = spec.labeled_count - len(already)
    if extra > 0:
        already = np.concatenate(
            [already, rng.choice(remaining, size=extra, replace=False)])
    labeled_idx = np.sort(already)

    pool = np.setdiff1d(np.arange(flat.size), labeled_idx)
    if spec.unlabeled_count > len(pool):
        raise ContractError(
            f"unlabeled_count {spec.unlabeled_count} exceeds the {len(pool)} "
            f"pixels left after labeled sampling")
    unlabeled_idx = (np.sort(rng.choice(pool, size=spec.unlabeled_count,
                                        replace=False))
                     if spec.unlabeled_count else np.empty(0, dtype=np.int64))

    train = np.concatenate([labeled_idx, unlabeled_idx])
    test_idx = np.setdiff1d(annotated, train)

    lr, lc = np.unravel_index(labeled_idx, lab.shape)
    labeled = CuboidBatch(
        cubes=extract_cuboids(cube.radiance, lr, lc, window),
        kind="labeled_real", labels=flat[labeled_idx])
    unlabeled = None
    if spec.unlabeled_count:
        ur, uc = np.unravel_index(unlabeled_idx, lab.shape)
        unlabeled = CuboidBatch(
            cubes=extract_cuboids(cube.radiance, ur, uc, window),
            kind="unlabeled_real")
    tr, tc = np.unravel_index(test_idx, lab.shape)
    return labeled, unlabeled, np.stack([tr, tc], axis=1)


# ---------------------------------------------------------------------------
# PCA features
# ---------------------------------------------------------------------------


def pca3(cube):
    """Project every pixel onto the top-3 band principal axes, standardized.

    Components use the eigendecomposition of the band covariance over all
    pixels; each eigenvector's largest-magnitude loading is made positive
    so the feature signs do not depend on solver internals.
    """
    if cube.bands < 3:
        raise ContractError(f"need at least 3 bands for pca3, got {cube.bands}")
    x = cube.radiance.reshape(-1, cube.bands).astype(np.float64)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / max(len(x) - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:3]
    components = eigvecs[:, order]
    for j in range(3):
        lead = np.argmax(np.abs(components[:, j]))
        if components[lead, j] < 0:
            components[:, j] = -components[:, j]
    proj = centered @ components
    std = proj.std(axis=0)
    safe = np.where(std > 1e-12, std, 1.0)
    proj = (proj - proj.mean(axis=0)) / safe
    appearance = proj.reshape(cube.height, cube.width, 3)
    return grid_features(appearance)


# ---------------------------------------------------------------------------
# synthetic scenes
# ---------------------------------------------------------------------------


def class_spectra(bands, n_y):
    """One unit-height Gaussian bump per class, centers spread over bands."""
    axis = np.arange(bands, dtype=np.float64)
    centers = (np.arange(n_y) + 0.5) * bands / n_y - 0.5
    width = max(bands / (2.0 * n_y), 1.0)
    return np.exp(-((axis[None, :] - centers[:, None]) ** 2) / (2.0 * width ** 2))


def synth_scene(height=32, width=32, bands=16, n_y=4, noise_sigma=0.05, seed=7):
    """Generate a fully labeled Voronoi scene with per-class spectra.

    Region sites and the additive Gaussian noise are drawn from one seeded
    generator, so a fixed seed gives a bit-identical scene.
    """
    if n_y < 2:
        raise ContractError(f"need at least 2 classes, got {n_y}")
    rng = np.random.default_rng(seed)
    sites = rng.random((n_y, 2)) * np.array([height, width])
    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    pix = np.stack([rows, cols], axis=2).astype(np.float64)
    d2 = ((pix[:, :, None, :] - sites[None, None, :, :]) ** 2).sum(axis=3)
    labels = d2.argmin(axis=2).astype(np.int32) + 1

    spectra = class_spectra(bands, n_y)
    radiance = spectra[labels - 1]
    if noise_sigma > 0:
        radiance = radiance + rng.standard_normal(radiance.shape) * noise_sigma
    cube = HsiCube(radiance=radiance.astype(np.float32), n_y=n_y)
    return cube, LabelMap(labels=labels)
