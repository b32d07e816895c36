"""Independent reference implementations used by the tests.

None of these call into the package's numerical code; they are written for
clarity, not speed.
"""

import math

import numpy as np
from scipy.special import logsumexp


def brute_sigma12(points, L):
    """sigma1 * sigma2 per point from a full distance matrix and numpy's covariance."""
    d = np.linalg.norm(points[:, None] - points[None], axis=2)
    out = np.empty(len(points))
    for i in range(len(points)):
        nb = points[np.lexsort((np.arange(len(points)), d[i]))[:L]]
        ev = np.sort(np.linalg.eigvalsh(np.cov(nb.T, ddof=1)))[::-1]
        out[i] = math.sqrt(max(ev[0], 0) * max(ev[1], 0))
    return out


def kabsch(src, dst, w):
    """Weighted rigid fit dst ~ R src + t via the Umeyama construction."""
    w = w / w.sum()
    cs, cd = w @ src, w @ dst
    h = (dst - cd).T @ ((src - cs) * w[:, None])
    u, _, vt = np.linalg.svd(h)
    s = np.diag([1.0, 1.0, np.sign(np.linalg.det(u @ vt))])
    r = u @ s @ vt
    return r, cd - r @ cs


def jrmpc(points, rotations, translations, means, variances, pi, log_out, iterations, floor=1e-6):
    """Plain unweighted joint registration, per-set 1/N averaged.

    Returns (trace, rotations, translations, means, variances) where trace[n] is the
    per-set averaged log-likelihood before iteration n, followed by the final value.
    """
    R = [np.array(r, float) for r in rotations]
    t = [np.array(x, float) for x in translations]
    mu, var = np.array(means, float), np.array(variances, float)
    K = len(mu)

    def posterior():
        total, post = 0.0, []
        for x, r, tt in zip(points, R, t):
            y = x @ r.T + tt
            d2 = ((y[:, None, :] - mu[None]) ** 2).sum(-1)
            lj = math.log(pi) - 1.5 * np.log(2 * math.pi * var)[None] - d2 / (2 * var)[None]
            lj = np.concatenate([lj, np.full((len(x), 1), log_out)], axis=1)
            ln = logsumexp(lj, axis=1)
            total += ln.sum() / len(x)
            post.append(np.exp(lj - ln[:, None])[:, :K])
        return total, post

    trace = []
    obj, post = posterior()
    for _ in range(iterations):
        trace.append(obj)
        for i, (x, a) in enumerate(zip(points, post)):
            wk = a / var[None]
            lam = wk.sum(1)
            target = (wk @ mu) / lam[:, None]
            R[i], t[i] = kabsch(x, target, lam)
        num, den = np.zeros((K, 3)), np.zeros(K)
        for x, r, tt, a in zip(points, R, t, post):
            y = x @ r.T + tt
            num += a.T @ y / len(x)
            den += a.sum(0) / len(x)
        live = den >= 1e-12
        mu[live] = num[live] / den[live, None]
        sq = np.zeros(K)
        for x, r, tt, a in zip(points, R, t, post):
            y = x @ r.T + tt
            sq += (a * ((y[:, None, :] - mu[None]) ** 2).sum(-1)).sum(0) / len(x)
        var[live] = np.maximum(sq[live] / (3 * den[live]), floor)
        obj, post = posterior()
    trace.append(obj)
    return trace, R, t, mu, var


def brute_fps(points, first, m):
    """Farthest point order recomputing every min-distance from scratch each step."""
    sel = [first]
    while len(sel) < m:
        best, best_d = None, -1.0
        for j in range(len(points)):
            d = min(float(np.sum((points[j] - points[s]) ** 2)) for s in sel)
            if d > best_d:
                best, best_d = j, d
        sel.append(best)
    return sel


def voxel_oracle(points, size):
    """Dict voxel key -> list of member points, keys from a Python-level hash."""
    lo = points.min(axis=0)
    buckets = {}
    for p in points:
        key = tuple(int(math.floor(v)) for v in (p - lo) / size)
        buckets.setdefault(key, []).append(p)
    return buckets
