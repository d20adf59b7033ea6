"""Fully-connected Potts CRF over the classifier's softmax field.

The unary cost is the negative log of the per-pixel class probabilities
(fake entry dropped, remainder renormalized). Pairwise coupling uses a
single bilateral Gaussian kernel over pixel position and appearance
features, with Potts compatibility (0 for equal labels, a constant c
otherwise, summed over ordered pairs j != i). Inference is synchronous
mean-field: every new marginal is computed from the previous iterate, then
normalized per pixel.

Message passing is exact O(N^2) per step, which is the point at desk scale;
images larger than one window are processed in overlapping tiles whose
centers are stitched. All arithmetic is float64.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np

from hsigancrf import _kernels
from hsigancrf.errors import ContractError, FormatError, ShapeError

PROB_CLAMP = 1e-12
FIELD_MAGIC = b"SFP1"


@dataclass
class CrfConfig:
    potts_c: float = 3.0
    theta_alpha: float = 5.0
    theta_beta: float = 0.5
    iterations: int = 10

    def __post_init__(self):
        if self.potts_c < 0:
            raise ContractError(f"potts_c must be >= 0, got {self.potts_c}")
        if self.theta_alpha <= 0 or self.theta_beta <= 0:
            raise ContractError("kernel widths theta_alpha and theta_beta must be > 0")
        if self.iterations < 0:
            raise ContractError(f"iterations must be >= 0, got {self.iterations}")


@dataclass
class PixelFeatures:
    """Per-pixel (row, col) positions and appearance channels, both (h, w, ·)."""

    positions: np.ndarray
    appearance: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.appearance = np.asarray(self.appearance, dtype=np.float64)
        if self.positions.ndim != 3 or self.positions.shape[2] != 2:
            raise ShapeError(f"positions must be (h, w, 2), got {self.positions.shape}")
        if self.appearance.ndim != 3:
            raise ShapeError(f"appearance must be (h, w, c), got {self.appearance.shape}")
        if self.positions.shape[:2] != self.appearance.shape[:2]:
            raise ShapeError(
                f"positions {self.positions.shape[:2]} and appearance "
                f"{self.appearance.shape[:2]} cover different grids")


def grid_features(appearance):
    """PixelFeatures with row/col coordinate positions for an (h, w, c) map."""
    appearance = np.asarray(appearance, dtype=np.float64)
    h, w = appearance.shape[:2]
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    positions = np.stack([rows, cols], axis=2).astype(np.float64)
    return PixelFeatures(positions=positions, appearance=appearance)


# ---------------------------------------------------------------------------
# energy pieces
# ---------------------------------------------------------------------------


def _class_probs(field):
    """Drop the fake entry, clamp, renormalize; field is (h, w, 1+n_y)."""
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 3:
        raise ShapeError(f"softmax field must be (h, w, 1+n_y), got ndim={field.ndim}")
    if field.shape[2] - 1 < 2:
        raise ContractError(
            f"need at least 2 class entries, got {field.shape[2] - 1}")
    sums = field.sum(axis=2)
    if np.abs(sums - 1.0).max() > 1e-5:
        raise ContractError("softmax field rows must sum to 1")
    probs = np.maximum(field[:, :, 1:], PROB_CLAMP)
    return probs / probs.sum(axis=2, keepdims=True)


def build_unary(field):
    """Per-pixel label costs -log(class prob), finite by the 1e-12 clamp."""
    return -np.log(np.maximum(_class_probs(field), PROB_CLAMP))


def pairwise_kernel(pos_i, app_i, pos_j, app_j, cfg: CrfConfig):
    """Bilateral Gaussian affinity in (0, 1]; 1 iff both feature sets coincide."""
    dp = np.asarray(pos_i, dtype=np.float64) - np.asarray(pos_j, dtype=np.float64)
    da = np.asarray(app_i, dtype=np.float64) - np.asarray(app_j, dtype=np.float64)
    return float(np.exp(-(dp @ dp) / (2 * cfg.theta_alpha ** 2)
                        - (da @ da) / (2 * cfg.theta_beta ** 2)))


def compatibility(label_a, label_b, cfg: CrfConfig):
    """Potts penalty: 0 when the labels agree, potts_c otherwise."""
    return 0.0 if label_a == label_b else cfg.potts_c


# ---------------------------------------------------------------------------
# mean-field updates
# ---------------------------------------------------------------------------


def _normalize_logits(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def meanfield_step(q, unary, feats: PixelFeatures, cfg: CrfConfig):
    """One synchronous update: new_q_i(l) ~ exp(-u_i(l) - c * sum over other
    labels of the kernel-weighted neighbor marginals), normalized per pixel."""
    q = np.asarray(q, dtype=np.float64)
    unary = np.asarray(unary, dtype=np.float64)
    if q.shape != unary.shape:
        raise ShapeError(f"q {q.shape} and unary {unary.shape} differ")
    if q.shape[:2] != feats.positions.shape[:2]:
        raise ShapeError(
            f"q grid {q.shape[:2]} does not match features {feats.positions.shape[:2]}")
    h, w, n_y = q.shape
    if cfg.potts_c == 0.0:
        return _normalize_logits(-unary)
    flat_q = np.ascontiguousarray(q.reshape(h * w, n_y))
    pos = np.ascontiguousarray(feats.positions.reshape(h * w, 2))
    app = np.ascontiguousarray(feats.appearance.reshape(h * w, -1))
    msg, ssum = _kernels.crf_message_pass(pos, app, flat_q,
                                          cfg.theta_alpha, cfg.theta_beta)
    logits = -unary.reshape(h * w, n_y) - cfg.potts_c * (ssum[:, None] - msg)
    return _normalize_logits(logits).reshape(h, w, n_y)


def init_field(field):
    """Mean-field initialization: the clamped, renormalized class probabilities."""
    return _class_probs(field)


def _infer_window(q0, unary, feats, cfg, progress=None, tile_index=0):
    q = q0
    for it in range(cfg.iterations):
        new_q = meanfield_step(q, unary, feats, cfg)
        if progress is not None:
            progress(tile_index, it + 1, float(np.abs(new_q - q).max()))
        q = new_q
    return q


def meanfield_infer(field, feats: PixelFeatures, cfg: CrfConfig,
                    tile=96, overlap=16, progress=None):
    """Refined marginals for a softmax field (h, w, 1+n_y).

    Images up to tile x tile run in one exact O(N^2) window. Larger images
    are split into tile-sized windows whose interiors (tile minus the
    overlap rim) stitch the output; each window is solved independently.
    """
    if tile <= 2 * overlap:
        raise ContractError(f"tile {tile} must exceed twice the overlap {overlap}")
    unary = build_unary(field)
    q0 = init_field(field)
    h, w = unary.shape[:2]
    if feats.positions.shape[:2] != (h, w):
        raise ShapeError(
            f"features {feats.positions.shape[:2]} do not match field grid {(h, w)}")
    if h <= tile and w <= tile:
        return _infer_window(q0, unary, feats, cfg, progress)

    core = tile - 2 * overlap
    out = np.empty_like(q0)
    tile_index = 0
    for r0 in range(0, h, core):
        r1 = min(r0 + core, h)
        wr0, wr1 = max(0, r0 - overlap), min(h, r1 + overlap)
        for c0 in range(0, w, core):
            c1 = min(c0 + core, w)
            wc0, wc1 = max(0, c0 - overlap), min(w, c1 + overlap)
            sub_feats = PixelFeatures(
                positions=feats.positions[wr0:wr1, wc0:wc1],
                appearance=feats.appearance[wr0:wr1, wc0:wc1])
            sub_q = _infer_window(q0[wr0:wr1, wc0:wc1], unary[wr0:wr1, wc0:wc1],
                                  sub_feats, cfg, progress, tile_index)
            out[r0:r1, c0:c1] = sub_q[r0 - wr0:r1 - wr0, c0 - wc0:c1 - wc0]
            tile_index += 1
    return out


def map_decode(q):
    """Label map in [1..n_y] from per-pixel argmax; ties take the lowest class."""
    q = np.asarray(q)
    if q.ndim != 3:
        raise ShapeError(f"marginal field must be (h, w, n_y), got ndim={q.ndim}")
    return (np.argmax(q, axis=2) + 1).astype(np.int32)


# ---------------------------------------------------------------------------
# field container on disk
# ---------------------------------------------------------------------------


def write_field(path, field):
    """Magic 'SFP1', u32 h, w, c, float32 LE row-major payload."""
    field = np.asarray(field)
    if field.ndim != 3:
        raise ShapeError(f"field must be 3-D, got ndim={field.ndim}")
    h, w, c = field.shape
    blob = struct.pack("<4sIII", FIELD_MAGIC, h, w, c)
    blob += np.ascontiguousarray(field, dtype="<f4").tobytes()
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def read_field(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    head = struct.calcsize("<4sIII")
    if len(blob) < head:
        raise FormatError(f"field file truncated: {len(blob)} bytes")
    magic, h, w, c = struct.unpack("<4sIII", blob[:head])
    if magic != FIELD_MAGIC:
        raise FormatError(f"bad field magic {magic!r}")
    expect = head + h * w * c * 4
    if len(blob) != expect:
        raise FormatError(
            f"field payload is {len(blob) - head} bytes, expected {expect - head} "
            f"for {h}x{w}x{c}")
    data = np.frombuffer(blob, dtype="<f4", offset=head)
    return data.reshape(h, w, c).astype(np.float64)
