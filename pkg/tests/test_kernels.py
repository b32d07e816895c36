import json
import os
import subprocess
import sys

import numpy as np
import pytest

from dare_reg import kernels
from dare_reg._accel import backend

needs_numba = pytest.mark.skipif(not kernels.NUMBA_KERNELS, reason="numba path disabled")


def _estep_inputs(seed, n=3000, k=57):
    rng = np.random.default_rng(seed)
    return (rng.normal(scale=3, size=(n, 3)), rng.normal(scale=3, size=(k, 3)),
            rng.uniform(1e-3, 4, k), np.log(0.995 / k))


@needs_numba
@pytest.mark.parametrize("log_out", [np.log(0.005 / 500.0), -np.inf])
def test_estep_paths_agree(log_out):
    y, mu, var, lp = _estep_inputs(0)
    r1, l1 = kernels.NUMPY_KERNELS["estep"](y, mu, var, lp, log_out)
    r2, l2 = kernels.NUMBA_KERNELS["estep"](y, mu, var, lp, log_out)
    np.testing.assert_allclose(r1, r2, rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(l1, l2, rtol=1e-13)


@needs_numba
def test_sq_dists_paths_agree():
    y, mu, _, _ = _estep_inputs(1)
    np.testing.assert_array_equal(kernels.NUMPY_KERNELS["sq_dists"](y, mu), kernels.NUMBA_KERNELS["sq_dists"](y, mu))


@needs_numba
def test_fps_step_paths_agree():
    pts = np.round(np.random.default_rng(2).uniform(size=(500, 3)), 1)  # ties
    m1, m2 = np.full(500, np.inf), np.full(500, np.inf)
    a = b = 0
    for _ in range(50):
        a = kernels.NUMPY_KERNELS["fps_step"](pts, m1, a)
        b = kernels.NUMBA_KERNELS["fps_step"](pts, m2, b)
        assert a == b
    np.testing.assert_array_equal(m1, m2)


def test_estep_far_points_underflow_to_outlier():
    y = np.array([[1e4, 0, 0.0]])
    r, ln = kernels.estep(y, np.zeros((1, 3)), np.array([1e-6]), 0.0, np.log(1e-3))
    assert r[0, 1] == 1.0 and r[0, 0] == 0.0
    assert np.isfinite(ln[0])


_SCRIPT = """
import json, numpy as np
from dare_reg._accel import backend
from dare_reg.mixture import RegistrationConfig, register
from dare_reg.synth import generate_pair
p = generate_pair(3, n_points=3000)
r = register([p.target, p.source], RegistrationConfig(K=40, iterations=10))
print(json.dumps({"backend": backend(), "R": r.transforms[1].rotation.tolist(), "trace": r.objective_trace}))
"""


def _run(flag):
    env = dict(os.environ, DARE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", _SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


@needs_numba
def test_env_flag_selects_backend_and_results_agree():
    assert backend() == "numba"
    a, b = _run("1"), _run("0")
    assert (a["backend"], b["backend"]) == ("numba", "numpy")
    np.testing.assert_allclose(a["R"], b["R"], atol=1e-10)
    np.testing.assert_allclose(a["trace"], b["trace"], rtol=1e-10)
