"""Experiment runner, error summaries and a point-to-point ICP baseline."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .geom import PointCloud, RigidTransform, geodesic_rotation_error, translation_error, weighted_procrustes
from .mixture import RegistrationConfig, register, relative_transform
from .resample import ResampleSpec
from .spatial import KdTree
from .synth import Perturbation, generate_pair

FAILURE_THRESHOLD_DEG = 4.0
CSV_COLUMNS = ("trial_id", "method", "rot_err_deg", "trans_err_m", "runtime_s", "seed", "input_hash")


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    method: str
    rotation_error: float
    translation_error: float
    runtime: float
    seed: int
    input_hash: str = ""

    def __post_init__(self):
        if self.rotation_error < 0 or self.translation_error < 0:
            raise ValueError("errors must be non-negative")


@dataclass
class Summary:
    method: str
    failure_rate: float
    mean_inlier_error: float
    inlier_error_std: float
    n_trials: int
    recall_curve: list
    mean_translation_error: float = math.nan
    failure_threshold: float = FAILURE_THRESHOLD_DEG
    errors: list = field(default_factory=list, repr=False)

    def recall_at(self, threshold):
        if not self.errors:
            return 1.0
        return float(np.mean(np.asarray(self.errors) <= threshold))

    def to_dict(self):
        def num(v):
            return None if isinstance(v, float) and math.isnan(v) else v

        return {
            "method": self.method,
            "avg_inlier_error_deg": num(self.mean_inlier_error),
            "inlier_error_std_deg": num(self.inlier_error_std),
            "failure_rate_pct": self.failure_rate,
            "n_trials": self.n_trials,
            "failure_threshold_deg": self.failure_threshold,
            "mean_translation_error_m": num(self.mean_translation_error),
            "recall_curve": self.recall_curve,
        }


def summarize(records, failure_threshold_deg=FAILURE_THRESHOLD_DEG, method=None) -> Summary:
    """Failure rate (% of rotation errors above the threshold), inlier mean/population std, recall curve."""
    records = list(records)
    if not records:
        raise ValueError("no records to summarize")
    err = np.array([r.rotation_error for r in records])
    terr = np.array([r.translation_error for r in records])
    fail = err > failure_threshold_deg
    inl = err[~fail]
    steps = int(round(2 * failure_threshold_deg / 0.1))
    ths = [round(0.1 * s, 10) for s in range(steps + 1)]
    curve = [[th, float(np.mean(err <= th))] for th in ths]
    return Summary(
        method=method if method is not None else records[0].method,
        failure_rate=100.0 * float(fail.mean()),
        mean_inlier_error=float(inl.mean()) if len(inl) else math.nan,
        inlier_error_std=float(inl.std()) if len(inl) else math.nan,
        n_trials=len(records),
        recall_curve=curve,
        mean_translation_error=float(terr.mean()),
        failure_threshold=failure_threshold_deg,
        errors=err.tolist(),
    )


def icp(source: PointCloud, target: PointCloud, max_iters=50, tol=1e-8, init: RigidTransform | None = None):
    """Point-to-point ICP. Returns (transform source->target, RMS history).

    ``rms[k]`` is the nearest-neighbour RMS distance at the k-th estimate.
    """
    if len(source) < 3 or len(target) < 3:
        raise ValueError("ICP needs at least 3 points per cloud")
    tree = KdTree(target.points)
    t = init or RigidTransform.identity()
    history = []
    for _ in range(max_iters + 1):
        idx, dist = tree.query_many(t.apply(source.points), 1)
        rms = float(np.sqrt(np.mean(dist[:, 0] ** 2)))
        history.append(rms)
        if len(history) > 1 and abs(history[-2] - rms) < tol:
            break
        if len(history) > max_iters:
            break
        new, s = weighted_procrustes(source.points, target.points[idx[:, 0]], np.ones(len(source)))
        if not s[1] > 1e-12 * max(s[0], 1e-300):
            raise ValueError("degenerate ICP update")
        t = new
    return t, history


def icp_register(source: PointCloud, target: PointCloud, max_iters=50, tol=1e-8) -> RigidTransform:
    return icp(source, target, max_iters, tol)[0]


@dataclass(frozen=True)
class GeneratorConfig:
    n_points: int = 10000
    angle_min: float = 0.0
    angle_max: float = 90.0
    sigma_t: float = 1.0
    min_distance: float = 1.5
    incidence: bool = False
    thinning: str = "inverse_square"

    def pair(self, seed):
        return generate_pair(seed, self.n_points, Perturbation(self.angle_min, self.angle_max, self.sigma_t),
                             self.min_distance, self.incidence, self.thinning)


@dataclass(frozen=True)
class MethodConfig:
    """A registration method: 'gmm' with a weight method, or 'icp'; optional re-sampling."""

    name: str
    kind: str = "gmm"
    weight_method: str = "uniform"
    K: int = 200
    iterations: int = 50
    gamma: float = 0.9
    L: int = 10
    clip_factor: float = 8.0
    outlier_ratio: float = 0.005
    resample: str | None = None

    def run(self, source: PointCloud, target: PointCloud, seed: int) -> RigidTransform:
        if self.resample:
            spec = ResampleSpec.parse(self.resample)
            source, target = spec.apply(source, seed), spec.apply(target, seed + 1)
        if self.kind == "icp":
            return icp_register(source, target, self.iterations)
        if self.kind != "gmm":
            raise ValueError(f"unknown method kind {self.kind!r}")
        cfg = RegistrationConfig(K=self.K, iterations=self.iterations, outlier_ratio=self.outlier_ratio,
                                 gamma=self.gamma, L=self.L, clip_factor=self.clip_factor,
                                 weight_method=self.weight_method, seed=seed)
        return relative_transform(register([target, source], cfg), src=1, dst=0)


PRESETS = {
    "jrmpc": MethodConfig("JRMPC", weight_method="uniform"),
    "dare": MethodConfig("DARE", weight_method="empirical"),
    "dare-full": MethodConfig("DARE-full", weight_method="empirical_full"),
    "dars": MethodConfig("DARS", weight_method="sensor"),
    "dars-g0": MethodConfig("DARS-g0", weight_method="sensor", gamma=0.0),
    "icp": MethodConfig("ICP", kind="icp"),
}


def trial_seed(seed, trial_id):
    return int(np.random.SeedSequence([seed, trial_id]).generate_state(1)[0])


def input_hash(*clouds):
    h = hashlib.sha256()
    for c in clouds:
        h.update(c.points.tobytes())
    return h.hexdigest()[:16]


def run_trial(gen: GeneratorConfig, methods, trial_id, seed, timing=True):
    s = trial_seed(seed, trial_id)
    pair = gen.pair(s)
    digest = input_hash(pair.source, pair.target)
    out = []
    for m in methods:
        t0 = time.perf_counter()
        est = m.run(pair.source, pair.target, s)
        dt = time.perf_counter() - t0 if timing else 0.0
        out.append(TrialRecord(
            trial_id, m.name,
            geodesic_rotation_error(est.rotation, pair.ground_truth.rotation),
            translation_error(est.translation, pair.ground_truth.translation),
            dt, s, digest,
        ))
    return out


def _run_trial_packed(args):
    return run_trial(*args)


def run_experiment(gen: GeneratorConfig, methods, n_trials, seed=0, workers=1, timing=True,
                   failure_threshold_deg=FAILURE_THRESHOLD_DEG, progress=None):
    """Run every method on ``n_trials`` generated pairs.

    Returns (records ordered by trial then method, {method name: Summary}).
    With ``timing=False`` runtimes are recorded as 0 so outputs are byte-stable.
    """
    methods = list(methods)
    jobs = [(gen, methods, i, seed, timing) for i in range(n_trials)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            batches = list(ex.map(_run_trial_packed, jobs))
    else:
        batches = []
        for job in jobs:
            batches.append(run_trial(*job))
            if progress:
                progress(batches[-1])
    records = sorted((r for b in batches for r in b), key=lambda r: r.trial_id)
    summaries = {m.name: summarize([r for r in records if r.method == m.name], failure_threshold_deg, m.name)
                 for m in methods}
    return records, summaries


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([r.trial_id, r.method, repr(r.rotation_error), repr(r.translation_error),
                    f"{r.runtime:.6f}", r.seed, r.input_hash])
    return buf.getvalue()


def summaries_to_json(summaries, generator=None, methods=None) -> str:
    doc = {"summaries": [s.to_dict() for s in summaries.values()]}
    if generator is not None:
        doc["generator"] = asdict(generator)
    if methods is not None:
        doc["methods"] = [asdict(m) for m in methods]
    return json.dumps(doc, indent=2) + "\n"
