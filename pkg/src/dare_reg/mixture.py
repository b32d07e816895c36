"""Joint multi-set registration with a weighted Gaussian mixture and ECM.

All point sets are mapped into a common frame by rigid transforms and
explained by one isotropic GMM plus a uniform outlier component. Each
observation enters the M-step scaled by its observation weight; with unit
weights this is plain joint registration (JRMPC).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .geom import PointCloud, RigidTransform, weighted_procrustes
from .weights import ObservationWeights, WeightMethod, compute_weights

logger = logging.getLogger(__name__)

EMPTY_COMPONENT = 1e-12


@dataclass(frozen=True)
class GmmModel:
    means: np.ndarray
    variances: np.ndarray
    component_prior: float
    outlier_prior: float
    outlier_density: float

    def __post_init__(self):
        mu = np.ascontiguousarray(self.means, dtype=np.float64)
        var = np.ascontiguousarray(self.variances, dtype=np.float64).reshape(-1)
        if mu.ndim != 2 or mu.shape[1] != 3 or len(var) != len(mu):
            raise ValueError("means must be (K, 3) and variances (K,)")
        if np.any(~(var > 0)):
            raise ValueError("variances must be positive")
        if not self.outlier_density > 0:
            raise ValueError("outlier density must be positive")
        if abs(len(mu) * self.component_prior + self.outlier_prior - 1.0) > 1e-12:
            raise ValueError("component and outlier priors must sum to 1")
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def K(self):
        return len(self.means)

    @property
    def log_outlier(self):
        if self.outlier_prior <= 0:
            return -math.inf
        return math.log(self.outlier_prior * self.outlier_density)


@dataclass
class RegistrationConfig:
    K: int = 200
    iterations: int = 50
    outlier_ratio: float = 0.005
    gamma: float = 0.9
    L: int = 10
    clip_factor: float = 8.0
    weight_method: WeightMethod = WeightMethod.EMPIRICAL
    seed: int = 0
    variance_floor: float = 1e-6
    # relative objective change below which iterations stop; None = fixed count
    tol: float | None = None

    def __post_init__(self):
        self.weight_method = WeightMethod.parse(self.weight_method)
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 <= self.outlier_ratio < 1.0:
            raise ValueError("outlier_ratio must lie in [0, 1)")

    @classmethod
    def for_mode(cls, mode="pairwise", **kw):
        kw.setdefault("K", 300 if mode == "joint" else 200)
        return cls(**kw)

    def to_dict(self):
        d = asdict(self)
        d["weight_method"] = self.weight_method.value
        return d


@dataclass
class RegistrationResult:
    transforms: list
    model: GmmModel
    objective_trace: list
    converged_iterations: int
    weights: list = field(default_factory=list)
    degenerate_sets: list = field(default_factory=list)


def _pool(clouds, transforms):
    return np.concatenate([t.apply(c.points) for c, t in zip(clouds, transforms)])


def init_model(clouds, transforms, cfg: RegistrationConfig) -> GmmModel:
    """Means sampled from the pooled transformed points, a shared isotropic variance
    from the bounding-box diagonal, and a uniform outlier density over the box
    inflated by 10% per side."""
    pooled = _pool(clouds, transforms)
    if len(pooled) < cfg.K:
        raise ValueError("too few points for K components")
    rng = np.random.default_rng(cfg.seed)
    means = pooled[np.sort(rng.choice(len(pooled), cfg.K, replace=False))]
    lo, hi = pooled.min(axis=0), pooled.max(axis=0)
    extent = hi - lo
    diag = float(np.linalg.norm(extent))
    var0 = max((diag / cfg.K ** (1.0 / 3.0)) ** 2, cfg.variance_floor)
    volume = max(float(np.prod(1.2 * extent)), 1e-9)
    return GmmModel(
        means,
        np.full(cfg.K, var0),
        (1.0 - cfg.outlier_ratio) / cfg.K,
        cfg.outlier_ratio,
        1.0 / volume,
    )


def _estep_one(points, transform, model):
    y = transform.apply(points)
    return kernels.estep(y, model.means, model.variances, math.log(model.component_prior), model.log_outlier)


def e_step(clouds, transforms, model: GmmModel):
    """Posterior responsibilities per set, shape (N_i, K+1); the last column is the outlier.

    Observation weights play no part here."""
    return [_estep_one(c.points, t, model)[0] for c, t in zip(clouds, transforms)]


def _weight_values(weights, clouds):
    if weights is None:
        return [np.ones(len(c)) for c in clouds]
    return [w.values if isinstance(w, ObservationWeights) else np.asarray(w, dtype=np.float64) for w in weights]


def m_step_transforms(clouds, weights, resp, model: GmmModel, previous=None, flags=None):
    """Weighted Procrustes update of every set's transform with the model fixed.

    Each point is pulled toward a virtual target, the precision-weighted average of
    the means it is assigned to. Sets whose points are all captured by the outlier
    keep ``previous`` (identity if not given) and are recorded in ``flags``.
    """
    K = model.K
    inv_var = 1.0 / model.variances
    out = []
    for i, (c, f, a) in enumerate(zip(clouds, _weight_values(weights, clouds), resp)):
        wk = a[:, :K] * inv_var[None, :]
        lam = f * wk.sum(axis=1)
        if not lam.sum() > 1e-300:
            out.append(previous[i] if previous is not None else RigidTransform.identity())
            if flags is not None:
                flags.add(i)
            continue
        keep = lam > 0
        target = np.zeros_like(c.points)
        target[keep] = (wk[keep] @ model.means) / wk[keep].sum(axis=1, keepdims=True)
        t, _ = weighted_procrustes(c.points[keep], target[keep], lam[keep])
        out.append(t)
    return out


def _component_sums(clouds, transforms, weights, resp, K):
    """Per-set-averaged (sum_ij f a, sum_ij f a y) for every component, plus transformed points."""
    wsum = np.zeros(K)
    ysum = np.zeros((K, 3))
    ys = []
    for c, t, f, a in zip(clouds, transforms, _weight_values(weights, clouds), resp):
        y = t.apply(c.points)
        w = a[:, :K] * (f / len(c))[:, None]
        wsum += w.sum(axis=0)
        ysum += w.T @ y
        ys.append((y, w))
    return wsum, ysum, ys


def m_step_model(clouds, transforms, weights, resp, cfg: RegistrationConfig, model: GmmModel) -> GmmModel:
    """Means and variances maximizing the weighted objective with transforms fixed.

    Priors and the outlier density stay fixed. Components with no mass keep their
    previous parameters; variances are floored at ``cfg.variance_floor``.
    """
    K = model.K
    wsum, ysum, ys = _component_sums(clouds, transforms, weights, resp, K)
    live = wsum >= EMPTY_COMPONENT
    means = model.means.copy()
    means[live] = ysum[live] / wsum[live, None]
    sq = np.zeros(K)
    for y, w in ys:
        sq += np.einsum("nk,nk->k", w, kernels.sq_dists(y, means))
    var = model.variances.copy()
    var[live] = np.maximum(sq[live] / (3.0 * wsum[live]), cfg.variance_floor)
    return GmmModel(means, var, model.component_prior, model.outlier_prior, model.outlier_density)


def _log_joint(model: GmmModel, d2):
    return math.log(model.component_prior) - 1.5 * (math.log(2 * math.pi) + np.log(model.variances))[None, :] \
        - 0.5 * d2 / model.variances[None, :]


def weighted_objective(clouds, transforms, weights, resp, model: GmmModel) -> float:
    """sum_i 1/N_i sum_j f_ij sum_k a_ijk log p(phi_i(x_ij), k), outlier column included."""
    K = model.K
    total = 0.0
    for c, t, f, a in zip(clouds, transforms, _weight_values(weights, clouds), resp):
        y = t.apply(c.points)
        lj = _log_joint(model, kernels.sq_dists(y, model.means))
        per_point = np.einsum("nk,nk->n", a[:, :K], lj)
        if model.outlier_prior > 0:
            per_point = per_point + a[:, K] * model.log_outlier
        total += float(f @ per_point) / len(c)
    return total


def weighted_log_likelihood(clouds, transforms, weights, model: GmmModel):
    """sum_i 1/N_i sum_j f_ij log p(phi_i(x_ij)) together with the responsibilities.

    This is the quantity every EM iteration is guaranteed not to decrease.
    """
    total = 0.0
    resp = []
    for c, t, f in zip(clouds, transforms, _weight_values(weights, clouds)):
        a, ln = _estep_one(c.points, t, model)
        resp.append(a)
        total += float(f @ ln) / len(c)
    return total, resp


def prepare_weights(clouds, cfg: RegistrationConfig, weights=None):
    """Per-set observation weights rescaled to mean 1."""
    if weights is None:
        return [compute_weights(c, cfg.weight_method, cfg.gamma, cfg.L, cfg.clip_factor) for c in clouds]
    out = []
    for c, w in zip(clouds, weights):
        if not isinstance(w, ObservationWeights):
            w = ObservationWeights(w, cfg.weight_method)
        if len(w) != len(c):
            raise ValueError("weights and cloud differ in length")
        out.append(w.normalized())
    return out


def register(clouds, cfg: RegistrationConfig | None = None, init=None, weights=None) -> RegistrationResult:
    """Jointly register ``clouds`` into a common frame.

    Weights are computed once per set in its own frame (unless passed in), then a
    fixed number of {E-step, transform update, model update} iterations runs.
    ``objective_trace[n]`` is the weighted log-likelihood before iteration n; the
    last entry is its value at the returned parameters.
    """
    cfg = cfg or RegistrationConfig()
    clouds = list(clouds)
    if len(clouds) < 2:
        raise ValueError("need at least two point sets")
    if any(len(c) < 3 for c in clouds):
        raise ValueError("every point set needs at least 3 points")
    if init is None:
        transforms = [RigidTransform.identity() for _ in clouds]
    else:
        transforms = list(init)
        if len(transforms) != len(clouds):
            raise ValueError("need one initial transform per point set")
    w = prepare_weights(clouds, cfg, weights)
    model = init_model(clouds, transforms, cfg)
    trace = []
    flags = set()
    it = 0
    obj, resp = weighted_log_likelihood(clouds, transforms, w, model)
    for it in range(1, cfg.iterations + 1):
        trace.append(obj)
        transforms = m_step_transforms(clouds, w, resp, model, previous=transforms, flags=flags)
        model = m_step_model(clouds, transforms, w, resp, cfg, model)
        obj, resp = weighted_log_likelihood(clouds, transforms, w, model)
        if cfg.tol is not None and abs(obj - trace[-1]) <= cfg.tol * max(abs(obj), 1e-300):
            break
    trace.append(obj)
    if flags:
        logger.warning("point sets %s fully captured by the outlier component", sorted(flags))
    return RegistrationResult(transforms, model, trace, it, w, sorted(flags))


def relative_transform(result: RegistrationResult, src=1, dst=0) -> RigidTransform:
    """Transform taking set ``src``'s frame into set ``dst``'s frame."""
    return result.transforms[dst].inverse() @ result.transforms[src]
