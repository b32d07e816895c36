"""Hot inner loops, each in a numba and a pure-numpy flavour.

The module-level names (``estep``, ``sq_dists``, ``fps_step``) are bound to
the numba versions unless ``DARE_NUMBA=0``. Both flavours evaluate the same
arithmetic in the same per-row order, so they agree to rounding.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit, prange

_LOG_2PI = math.log(2.0 * math.pi)
_CHUNK = 2048


def _sq_dists_np(y, mu):
    out = np.empty((y.shape[0], mu.shape[0]))
    for s in range(0, y.shape[0], _CHUNK):
        diff = y[s:s + _CHUNK, None, :] - mu[None, :, :]
        out[s:s + _CHUNK] = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]
    return out


def _estep_np(y, mu, var, log_pi, log_out):
    """Posterior over K Gaussians plus an outlier column, per row of ``y``.

    Returns (resp (N, K+1), log_norm (N,)) where log_norm is the log mixture
    density of each point. ``log_out`` may be -inf (no outlier component).
    """
    n, k = y.shape[0], mu.shape[0]
    logc = log_pi - 1.5 * (_LOG_2PI + np.log(var))
    resp = np.empty((n, k + 1))
    log_norm = np.empty(n)
    inv2 = 0.5 / var
    for s in range(0, n, _CHUNK):
        d2 = _sq_dists_np(y[s:s + _CHUNK], mu)
        lg = logc[None, :] - d2 * inv2[None, :]
        m = np.maximum(lg.max(axis=1), log_out)
        e = np.exp(lg - m[:, None])
        tot = e.sum(axis=1) + np.exp(log_out - m)
        ln = m + np.log(tot)
        log_norm[s:s + _CHUNK] = ln
        resp[s:s + _CHUNK, :k] = np.exp(lg - ln[:, None])
        resp[s:s + _CHUNK, k] = np.exp(log_out - ln)
    return resp, log_norm


def _fps_step_np(points, mind, last):
    d = points - points[last]
    d2 = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]
    np.minimum(mind, d2, out=mind)
    return int(np.argmax(mind))


@njit(cache=True, parallel=True)
def _sq_dists_nb(y, mu):
    n, k = y.shape[0], mu.shape[0]
    out = np.empty((n, k))
    for i in prange(n):
        for j in range(k):
            dx = y[i, 0] - mu[j, 0]
            dy = y[i, 1] - mu[j, 1]
            dz = y[i, 2] - mu[j, 2]
            out[i, j] = dx * dx + dy * dy + dz * dz
    return out


@njit(cache=True, parallel=True)
def _estep_nb(y, mu, var, log_pi, log_out):
    n, k = y.shape[0], mu.shape[0]
    logc = np.empty(k)
    inv2 = np.empty(k)
    for j in range(k):
        logc[j] = log_pi - 1.5 * (_LOG_2PI + math.log(var[j]))
        inv2[j] = 0.5 / var[j]
    resp = np.empty((n, k + 1))
    log_norm = np.empty(n)
    for i in prange(n):
        row = np.empty(k)
        m = log_out
        for j in range(k):
            dx = y[i, 0] - mu[j, 0]
            dy = y[i, 1] - mu[j, 1]
            dz = y[i, 2] - mu[j, 2]
            v = logc[j] - (dx * dx + dy * dy + dz * dz) * inv2[j]
            row[j] = v
            if v > m:
                m = v
        tot = 0.0
        for j in range(k):
            tot += math.exp(row[j] - m)
        tot += math.exp(log_out - m)
        ln = m + math.log(tot)
        log_norm[i] = ln
        for j in range(k):
            resp[i, j] = math.exp(row[j] - ln)
        resp[i, k] = math.exp(log_out - ln)
    return resp, log_norm


@njit(cache=True)
def _fps_step_nb(points, mind, last):
    best = -1.0
    arg = 0
    px, py, pz = points[last, 0], points[last, 1], points[last, 2]
    for i in range(points.shape[0]):
        dx = points[i, 0] - px
        dy = points[i, 1] - py
        dz = points[i, 2] - pz
        d2 = dx * dx + dy * dy + dz * dz
        if d2 < mind[i]:
            mind[i] = d2
        if mind[i] > best:
            best = mind[i]
            arg = i
    return arg


NUMPY_KERNELS = {"estep": _estep_np, "sq_dists": _sq_dists_np, "fps_step": _fps_step_np}
NUMBA_KERNELS = {"estep": _estep_nb, "sq_dists": _sq_dists_nb, "fps_step": _fps_step_nb} if USE_NUMBA else {}

_active = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS
estep = _active["estep"]
sq_dists = _active["sq_dists"]
fps_step = _active["fps_step"]
