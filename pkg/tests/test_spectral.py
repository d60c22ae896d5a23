import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from conftest import ellipse
from hn_spectra import (BaseSystem, Potential, SpectrumSet, assemble_spectrum, classify,
                        count_contours, lyapunov_field, oracle_free_L, oracle_single_exp_L,
                        real_spectrum_sigma0, transition_report)
from hn_spectra.cocycle import LyapunovField, convergence_floor
from hn_spectra.errors import ConfigError, NumericalFailure
from hn_spectra.spectral import E_MINUS, E_PLUS, E_ZERO, Sigma0, dirichlet_support_check

ROT = BaseSystem.rotation()


def hausdorff(a, b):
    ta, tb = cKDTree(np.column_stack([a.real, a.imag])), cKDTree(np.column_stack([b.real, b.imag]))
    return max(ta.query(np.column_stack([b.real, b.imag]))[0].max(),
               tb.query(np.column_stack([a.real, a.imag]))[0].max())


def oracle_field(re, im, fn, g=0.0):
    E = re[None, :] + 1j * im[:, None]
    L = fn(E)
    z = np.zeros(L.shape)
    return LyapunovField(re, im, L, z, z.astype(bool), g, {})


def test_oracles():
    assert oracle_free_L(0.0) == 0.0
    assert oracle_free_L(3.5) == pytest.approx(math.log((3.5 + math.sqrt(8.25)) / 2))
    assert oracle_free_L(-3.5) == pytest.approx(oracle_free_L(3.5))
    assert oracle_single_exp_L(0.0, 2.0) == pytest.approx(math.log(2))
    assert oracle_single_exp_L(10.0, 2.0) == pytest.approx(oracle_free_L(10.0))
    z = ellipse(1.0)
    assert np.abs(oracle_free_L(z) - 1.0).max() < 1e-12


def test_classify_examples(field_of):
    fld = field_of("free")
    c = classify(fld, 1.0)
    j0 = int(np.argmin(np.abs(fld.im)))
    assert c.at(j0, int(np.argmin(np.abs(fld.re)))).label == "E_minus"
    assert c.at(j0, int(np.argmin(np.abs(fld.re - 3.5)))).label == "E_plus"
    # node exactly on the ellipse: E = 2 cosh 1 lies on the grid only approximately,
    # so use the oracle field with a node placed on it
    re = np.array([-1.0, 2 * math.cosh(1.0)])
    f2 = oracle_field(re, np.array([0.0, 1.0]), oracle_free_L)
    assert classify(f2, 1.0).at(0, 1).label == "E_zero"


def test_classify_partition(field_of):
    fld = field_of("cosine2")
    c = classify(fld, 1.0)
    d = fld.L - 1.0
    assert np.array_equal(c.labels == E_MINUS, d < -c.tol0)
    assert np.array_equal(c.labels == E_PLUS, d > c.tol0)
    assert np.array_equal(c.labels == E_ZERO, np.abs(d) <= c.tol0)
    assert sum(c.counts().values()) == fld.L.size


def test_classify_rejections(field_of):
    fld = field_of("cosine2")
    with pytest.raises(ConfigError):
        classify(fld, 1.0, tol0=0.0)
    bad = LyapunovField(fld.re, fld.im, fld.L, fld.stderr, np.ones_like(fld.flag), 1.0, {})
    with pytest.raises(NumericalFailure):
        classify(bad, 1.0)


def test_monotone_exit():
    # the E_zero band is ~2 tol0 wide, so the ray is sampled finer than that
    for E in (-1.5, 0.0, 0.7):
        fld = lyapunov_field(ROT, Potential.constant(0.0), 0.0,
                             dict(re_min=E, re_max=E + 0.1, im_min=0.0, im_max=3.0,
                                  nx=2, ny=6001), {"n_steps": 4000})
        col = classify(fld, 1.0, tol0=1e-3).labels[:, 0]
        assert col[0] == E_MINUS and col[-1] == E_PLUS
        assert np.all(np.diff(col) >= 0)
        assert len(np.flatnonzero(np.diff(col))) == 2
        assert np.all(np.diff(fld.L[:, 0]) > 0)


def test_sigma0_examples(sigma0_of, rot):
    s = sigma0_of("free")
    assert len(s.intervals) == 1
    a, b = s.intervals[0]
    assert abs(a + 2) < 1e-3 and abs(b - 2) < 1e-3
    s = real_spectrum_sigma0(rot, Potential.constant(0.75))
    assert len(s.intervals) == 1
    assert abs(s.intervals[0][0] + 1.25) < 1e-3 and abs(s.intervals[0][1] - 2.75) < 1e-3
    with pytest.raises(ConfigError):
        real_spectrum_sigma0(rot, Potential.single_exponential(2.0))


def test_sigma0_critical_measure(rot):
    s = real_spectrum_sigma0(rot, Potential.cosine(1.0))
    assert s.measure < 0.1
    assert s.as_dict()["measure"] == s.measure


def test_sigma0_vs_dirichlet(sigma0_of, rot):
    from hn_spectra import build, eigenvalues
    w = eigenvalues(build(rot, Potential.cosine(2.0), 0.0, 1000, 0.0, "dirichlet")).eigenvalues
    r = dirichlet_support_check(sigma0_of("cosine2"), w)
    assert r["fraction_inside"] > 0.95


def test_assemble_free(field_of, sigma0_of):
    fld = field_of("free")
    s = assemble_spectrum(fld, 1.0, sigma0_of("free"))
    assert s.real_part == [] and s.filled_cells == []
    pts = s.points(fld.step / 4)
    assert hausdorff(pts, ellipse(1.0)) < fld.step
    c = count_contours(s)
    assert c["count"] == 1 and c["closed"] == [True]


def test_assemble_g0_real(field_of, sigma0_of):
    fld = field_of("free")
    s = assemble_spectrum(fld, 0.0, sigma0_of("free"), tol0=1e-3)
    # g = 0: every point of Sigma(0) has L = 0 = g, so the level set carries it
    pts = s.points(fld.step / 4)
    assert np.abs(pts.imag).max() < 2 * fld.step
    assert count_contours(SpectrumSet([], [], [], 0.5, {})) == \
        {"count": 0, "closed": [], "kinds": [], "unresolved": 0, "upper_half": 0}


def test_assemble_cosine_real_and_complex(field_of, sigma0_of):
    fld = field_of("cosine2")
    s03 = assemble_spectrum(fld, 0.3, sigma0_of("cosine2"))
    assert s03.complex_part == [] and s03.filled_cells == []
    assert sum(b - a for a, b in s03.real_part) == pytest.approx(sigma0_of("cosine2").measure, rel=0.05)
    s12 = assemble_spectrum(fld, 1.2, sigma0_of("cosine2"))
    assert s12.real_part == [] and len(s12.complex_part) > 0


def test_spectrum_json_roundtrip(tmp_path, field_of, sigma0_of):
    s = assemble_spectrum(field_of("free"), 1.0, sigma0_of("free"))
    s.to_json(tmp_path / "s.json")
    r = SpectrumSet.from_json(tmp_path / "s.json")
    assert r.as_dict() == s.as_dict()


def test_single_exp_filled_only_at_critical_g():
    re, im = np.linspace(-3, 3, 201), np.linspace(-2, 2, 201)
    fld = oracle_field(re, im, lambda E: oracle_single_exp_L(E, 2.0))
    empty = Sigma0([], 0, (0, 0), 0, 0)
    area = math.pi * 2.5 * 1.5
    g = math.log(2)
    assert abs(assemble_spectrum(fld, g, empty, 1e-3).filled_area() - area) < 0.05 * area
    for dg in (-0.2, 0.2):
        assert assemble_spectrum(fld, g + dg, empty, 1e-3).filled_area() < 0.01 * area


def test_transition_free(field_of, sigma0_of):
    fld = field_of("free")
    t = transition_report(fld, sigma0_of("free"))
    # exact values are 0; the field carries the O(log n / n) finite-length wobble
    floor = convergence_floor(4000)
    assert abs(t.g_lower) < floor and abs(t.g_upper) < floor
    assert t.regime(0.0) == "all_real"
    assert t.regime(0.5) == "all_complex"
    assert t.g_lower <= t.g_upper
    d = t.as_dict([0.0, 0.5])
    assert [r["regime"] for r in d["regimes"]] == ["all_real", "all_complex"]


def test_transition_cosine(field_of, sigma0_of):
    t = transition_report(field_of("cosine2"), sigma0_of("cosine2"))
    assert abs(t.g_lower - math.log(2)) < 5e-2 and abs(t.g_upper - math.log(2)) < 5e-2
    assert t.regime(0.3) == "all_real" and t.regime(1.2) == "all_complex"


def test_transition_rejects_short_window(sigma0_of):
    fld = lyapunov_field(ROT, Potential.cosine(2.0), 0.0,
                         dict(re_min=-2, re_max=2, im_min=-1, im_max=1, nx=11, ny=11),
                         {"n_steps": 500})
    with pytest.raises(ConfigError):
        transition_report(fld, sigma0_of("cosine2"))


def test_count_stable_under_refinement(sigma0_of):
    p = Potential.cosine(2.0)
    counts = []
    for nx, ny in ((121, 61), (241, 121)):
        fld = lyapunov_field(ROT, p, 0.0, dict(re_min=-6, re_max=6, im_min=-3, im_max=3,
                                               nx=nx, ny=ny), {"n_steps": 4000})
        counts.append(count_contours(assemble_spectrum(fld, 1.2, sigma0_of("cosine2")))["count"])
    assert counts[0] == counts[1] and 0 < counts[0] < 100


def test_regime_consistent_with_assembly(field_of, sigma0_of):
    fld, s0 = field_of("cosine2"), sigma0_of("cosine2")
    t = transition_report(fld, s0)
    for g in (0.1, 0.3, 1.0, 1.2, 1.5):
        s = assemble_spectrum(fld, g, s0)
        if t.regime(g) == "all_real":
            assert s.complex_part == [] and s.filled_cells == []
        elif t.regime(g) == "all_complex":
            assert s.real_part == []


def test_field_conjugation_symmetry_oracle(field_of):
    for name in ("free", "cosine2"):
        L = field_of(name).L
        assert np.abs(L - L[::-1, :]).max() < 1e-9
