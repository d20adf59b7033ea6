"""NumPy implementations of the hot kernels.

Signature-compatible with the compiled core in ``_core.pyx``; the band/plane
functions preserve the input dtype, the CRF message pass works in float64.

Axis conventions:
  band ops   : x (M, B, C)   with M = batch*height*width flattened
  plane ops  : x (N, H, W, C) with bands already folded into channels
  kernels    : band (kb, Cin, Cout), plane (kh, kw, Cin, Cout)
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _band_windows(x, kb, stride, pad):
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    # (M, B', C, kb) where B' enumerates window start positions
    w = sliding_window_view(x, kb, axis=1)
    return w[:, ::stride]


def band_conv(x, kern, stride, pad):
    """Cross-correlation along the band axis, mixing channels.

    out[m, j, o] = sum_{t,c} x_padded[m, j*stride + t, c] * kern[t, c, o]
    """
    w = _band_windows(x, kern.shape[0], stride, pad)
    return np.einsum("mjct,tco->mjo", w, kern, optimize=True)


def band_scatter(y, kern, stride, pad, out_bands):
    """Adjoint of ``band_conv``: scatter-add each input band into the output.

    out[m, j*stride + t - pad, q] += sum_p y[m, j, p] * kern[t, p, q]
    """
    m, bi, _ = y.shape
    kb, _, q = kern.shape
    out = np.zeros((m, out_bands, q), dtype=y.dtype)
    for t in range(kb):
        off = t - pad
        # j range with 0 <= j*stride + off < out_bands
        j_lo = 0 if off >= 0 else (-off + stride - 1) // stride
        j_hi = min(bi, (out_bands - 1 - off) // stride + 1) if out_bands > off else 0
        if j_hi <= j_lo:
            continue
        i_lo = j_lo * stride + off
        i_hi = i_lo + (j_hi - j_lo) * stride
        out[:, i_lo:i_hi:stride, :] += y[:, j_lo:j_hi, :] @ kern[t]
    return out


def band_kernel_grad(x, g, kb, stride, pad):
    """Kernel gradient for ``band_conv``: correlate input windows with g."""
    w = _band_windows(x, kb, stride, pad)
    return np.einsum("mjct,mjo->tco", w, g, optimize=True)


def _plane_windows(x, kh, kw, stride, pad):
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    # (N, H', W', C, kh, kw)
    w = sliding_window_view(x, (kh, kw), axis=(1, 2))
    return w[:, ::stride, ::stride]


def plane_conv(x, kern, stride, pad):
    """2-D spatial cross-correlation over full channel depth.

    out[n, i, j, o] = sum_{u,v,c} x_padded[n, i*s+u, j*s+v, c] * kern[u, v, c, o]
    """
    kh, kw = kern.shape[:2]
    w = _plane_windows(x, kh, kw, stride, pad)
    return np.einsum("nijcuv,uvco->nijo", w, kern, optimize=True)


def plane_scatter(y, kern, stride, pad, out_h, out_w):
    """Adjoint of ``plane_conv``: scatter-add over spatial offsets."""
    n, hi, wi, _ = y.shape
    kh, kw, _, q = kern.shape
    out = np.zeros((n, out_h, out_w, q), dtype=y.dtype)
    for u in range(kh):
        ou = u - pad
        a_lo = 0 if ou >= 0 else (-ou + stride - 1) // stride
        a_hi = min(hi, (out_h - 1 - ou) // stride + 1) if out_h > ou else 0
        if a_hi <= a_lo:
            continue
        for v in range(kw):
            ov = v - pad
            b_lo = 0 if ov >= 0 else (-ov + stride - 1) // stride
            b_hi = min(wi, (out_w - 1 - ov) // stride + 1) if out_w > ov else 0
            if b_hi <= b_lo:
                continue
            ia, ib = a_lo * stride + ou, b_lo * stride + ov
            out[
                :,
                ia : ia + (a_hi - a_lo) * stride : stride,
                ib : ib + (b_hi - b_lo) * stride : stride,
                :,
            ] += y[:, a_lo:a_hi, b_lo:b_hi, :] @ kern[u, v]
    return out


def plane_kernel_grad(x, g, kh, kw, stride, pad):
    """Kernel gradient for ``plane_conv``."""
    w = _plane_windows(x, kh, kw, stride, pad)
    return np.einsum("nijcuv,nijo->uvco", w, g, optimize=True)


def crf_message_pass(pos, app, q, theta_alpha, theta_beta, block=512):
    """Dense bilateral message pass: m_i(l) = sum_{j!=i} K_ij q_j(l).

    K_ij = exp(-|pos_i-pos_j|^2 / (2 ta^2) - |app_i-app_j|^2 / (2 tb^2)).
    Returns (m, s) with s_i = sum_{j!=i} K_ij. Row blocks keep the kernel
    matrix from ever being materialized in full.
    """
    pos = np.asarray(pos, dtype=np.float64)
    app = np.asarray(app, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    n = pos.shape[0]
    inv_a = 1.0 / (2.0 * theta_alpha * theta_alpha)
    inv_b = 1.0 / (2.0 * theta_beta * theta_beta)
    msg = np.empty_like(q)
    ssum = np.empty(n, dtype=np.float64)
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        d2 = ((pos[i0:i1, None, :] - pos[None, :, :]) ** 2).sum(axis=2) * inv_a
        d2 += ((app[i0:i1, None, :] - app[None, :, :]) ** 2).sum(axis=2) * inv_b
        k = np.exp(-d2)
        k[np.arange(i1 - i0), np.arange(i0, i1)] = 0.0
        msg[i0:i1] = k @ q
        ssum[i0:i1] = k.sum(axis=1)
    return msg, ssum
