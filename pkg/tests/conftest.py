import math

import numpy as np
import pytest

from hn_spectra import BaseSystem, Potential, empirical_dos, lyapunov_field, real_spectrum_sigma0
from hn_spectra.spectral import Sigma0

# criterion number -> list of (case, passed, detail)
ACCEPTANCE: dict = {}

FIELD_STEPS = {"n_steps": 4000}
WINDOWS = {
    "free": dict(re_min=-4.0, re_max=4.0, im_min=-3.0, im_max=3.0, nx=201, ny=201),
    "cosine2": dict(re_min=-6.0, re_max=6.0, im_min=-3.0, im_max=3.0, nx=201, ny=201),
    "sexp2": dict(re_min=-3.0, re_max=3.0, im_min=-2.0, im_max=2.0, nx=201, ny=201),
}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        cases = ACCEPTANCE[k]
        ok = all(c[1] for c in cases)
        tr.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}")
        for case, passed, detail in cases:
            tr.write_line(f"    [{'pass' if passed else 'FAIL'}] {case}: {detail}")


@pytest.fixture(scope="session")
def record():
    def _record(k, case, passed, detail=""):
        ACCEPTANCE.setdefault(k, []).append((case, bool(passed), detail))
        return passed
    return _record


@pytest.fixture(scope="session")
def rot():
    return BaseSystem.rotation()


@pytest.fixture(scope="session")
def free():
    return Potential.constant(0.0)


@pytest.fixture(scope="session")
def cos2():
    return Potential.cosine(2.0)


@pytest.fixture(scope="session")
def sexp2():
    return Potential.single_exponential(2.0)


@pytest.fixture(scope="session")
def models(free, cos2, sexp2):
    return {"free": free, "cosine2": cos2, "sexp2": sexp2}


_cache: dict = {}


@pytest.fixture(scope="session")
def field_of(rot, models):
    def get(name):
        key = ("field", name)
        if key not in _cache:
            _cache[key] = lyapunov_field(rot, models[name], 0.0, WINDOWS[name], FIELD_STEPS)
        return _cache[key]
    return get


@pytest.fixture(scope="session")
def sigma0_of(rot, models):
    def get(name):
        key = ("sigma0", name)
        if key not in _cache:
            p = models[name]
            _cache[key] = (real_spectrum_sigma0(rot, p) if p.is_real_valued()
                           else Sigma0([], 0, (0.0, 0.0), 0.0, 0.0))
        return _cache[key]
    return get


@pytest.fixture(scope="session")
def cloud_of(rot, models):
    def get(name, g, n=2048):
        key = ("cloud", name, g, n)
        if key not in _cache:
            _cache[key] = empirical_dos(rot, models[name], None, n, g)
        return _cache[key]
    return get


def ellipse(g, k=4000):
    t = np.linspace(0, 2 * math.pi, k, endpoint=False)
    return 2 * math.cosh(g) * np.cos(t) + 2j * math.sinh(g) * np.sin(t)
