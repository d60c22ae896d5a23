"""Density of states: counting measures, log potentials and the Thouless formula.

With L_+ = max(L, g), the limiting measure is (1/2 pi) Laplacian(L_+) and its
logarithmic potential is L_+ itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.spatial import cKDTree

from .base import BaseSystem, Potential
from .cocycle import LyapunovField, lyapunov, write_grid
from .finite import build, charpoly_eval, eigenvalues
from .spectral import SpectrumSet


@dataclass
class EmpiricalMeasure:
    atoms: np.ndarray
    weights: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=np.complex128)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.atoms.shape != self.weights.shape:
            raise ValueError("atoms and weights differ in shape")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")

    @classmethod
    def counting(cls, points, meta=None) -> "EmpiricalMeasure":
        pts = np.asarray(points, dtype=np.complex128)
        return cls(pts, np.full(len(pts), 1.0 / len(pts)), meta or {})

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def shifted(self, c: complex) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.atoms + c, self.weights, dict(self.meta))

    def integrate(self, f) -> float:
        return float(np.sum(self.weights * f(self.atoms)))


def empirical_dos(base: BaseSystem, p: Potential, x0=None, n: int = 64, g: float = 0.0,
                  boundary: str = "periodic") -> EmpiricalMeasure:
    op = build(base, p, x0, n, g, boundary)
    res = eigenvalues(op)
    return EmpiricalMeasure.counting(res.eigenvalues, {**op.describe(), **res.as_dict()})


def log_potential(mu: EmpiricalMeasure, z):
    """sum_i w_i log|zeta_i - z|; -inf exactly at atoms."""
    z = np.asarray(z, dtype=np.complex128)
    flat = z.reshape(-1)
    out = np.empty(flat.shape)
    for k in range(0, len(flat), 256):
        blk = flat[k:k + 256]
        with np.errstate(divide="ignore"):
            out[k:k + 256] = np.log(np.abs(mu.atoms[None, :] - blk[:, None])) @ mu.weights
    out = out.reshape(z.shape)
    return float(out) if out.ndim == 0 else out


@dataclass
class LogPotentialField:
    re: np.ndarray
    im: np.ndarray
    values: np.ndarray


def log_potential_field(mu: EmpiricalMeasure, re, im) -> LogPotentialField:
    re, im = np.asarray(re, float), np.asarray(im, float)
    return LogPotentialField(re, im, log_potential(mu, re[None, :] + 1j * im[:, None]))


def mean_value_check(mu: EmpiricalMeasure, zs, h0: float = 0.05, m: int = 256) -> dict:
    """Discrete sub-mean-value inequality p(z) <= average of p on a circle.

    For each z a radius h >= h0 is chosen with no atom at relative distance
    |zeta - z| / h in [0.8, 1.25].  With m equispaced nodes the circle sum of
    log|w - h e^{it}| equals (1/m) log|w^m - h^m| exactly, so away from that
    annulus the discrete average is within (0.8)^m of the continuous one and
    the inequality is decided with no quadrature error.
    """
    zs = np.atleast_1d(np.asarray(zs, dtype=np.complex128))
    t = np.exp(2j * np.pi * np.arange(m) / m)
    gaps, skipped, radii = [], 0, []
    for z in zs:
        r = np.abs(mu.atoms - z)
        h = None
        for k in range(200):
            cand = h0 * 1.07**k
            q = r / cand
            if not np.any((q >= 0.8) & (q <= 1.25)):
                h = cand
                break
        if h is None or np.any(r == 0):
            skipped += 1
            continue
        avg = float(np.mean(log_potential(mu, z + h * t)))
        gaps.append(avg - log_potential(mu, z))
        radii.append(h)
    gaps = np.array(gaps)
    return {"min_gap": float(gaps.min()) if len(gaps) else math.nan,
            "violations": int(np.sum(gaps < -1e-9)), "checked": int(len(gaps)),
            "skipped": skipped}


# ---------------------------------------------------------------- Thouless

def thouless_check(base: BaseSystem, p: Potential, x0=None, n: int = 512, g: float = 0.0,
                   probes=(), lyap_cfg: dict | None = None, mu: EmpiricalMeasure | None = None,
                   exclusion: float = 1e-3) -> dict:
    """Per probe: (a) log|det(H_n - E)| / n, (b) the log potential of the
    counting measure, (c) max(L(E), g)."""
    op = build(base, p, x0, n, g, "periodic")
    if mu is None:
        mu = EmpiricalMeasure.counting(eigenvalues(op).eigenvalues)
    rows = []
    for E in np.atleast_1d(np.asarray(probes, dtype=np.complex128)):
        a = charpoly_eval(op, E).log_abs / n
        b = log_potential(mu, E)
        est = lyapunov(base, p, E, 0.0, lyap_cfg)
        c = max(est.value, g)
        dist = float(np.min(np.abs(mu.atoms - E)))
        rows.append({"E": [E.real, E.imag], "charpoly": a, "log_potential": b, "L_plus": c,
                     "L": est.value, "L_stderr": est.stderr,
                     "dev_ab": abs(a - b), "dev_ac": abs(a - c), "dev_bc": abs(b - c),
                     "nearest_atom": dist, "too_close": dist < exclusion})
    return {"n": n, "g": g, "probes": rows,
            "max_dev_ab": max((r["dev_ab"] for r in rows), default=0.0),
            "max_dev_ac": max((r["dev_ac"] for r in rows), default=0.0),
            "max_dev_bc": max((r["dev_bc"] for r in rows), default=0.0)}


# ---------------------------------------------------------------- density

@dataclass
class DensityGrid:
    """(1/2 pi) 5-point Laplacian of L_+ at interior nodes (zero on the rim).

    ``raw`` keeps negative values so the mass telescopes to the boundary flux;
    ``clipped`` floors them at -tol.  ``band`` marks nodes whose stencil
    straddles the level set L = g, where the density is a contour measure.
    """

    re: np.ndarray
    im: np.ndarray
    raw: np.ndarray
    band: np.ndarray
    tol: float
    n_negative: int

    @property
    def cell_area(self) -> float:
        return float((self.re[1] - self.re[0]) * (self.im[1] - self.im[0]))

    @property
    def clipped(self) -> np.ndarray:
        return np.maximum(self.raw, -self.tol)

    def mass(self, mask=None) -> float:
        d = self.raw if mask is None else np.where(mask, self.raw, 0.0)
        return float(d.sum() * self.cell_area)

    def to_binary(self, path) -> None:
        bounds = (self.re[0], self.re[-1], self.im[0], self.im[-1])
        write_grid(path, bounds, [self.raw, self.band.astype(float)])


def dos_density_from_L(fld: LyapunovField, g: float, tol: float = 1e-3) -> DensityGrid:
    lp = np.maximum(fld.L, g)
    hx, hy = fld.hx, fld.hy
    dens = np.zeros_like(lp)
    c = lp[1:-1, 1:-1]
    dens[1:-1, 1:-1] = ((lp[1:-1, 2:] - 2 * c + lp[1:-1, :-2]) / hx**2
                        + (lp[2:, 1:-1] - 2 * c + lp[:-2, 1:-1]) / hy**2) / (2 * math.pi)
    s = np.sign(fld.L - g)
    band = np.zeros(lp.shape, bool)
    band[1:-1, 1:-1] = ((s[1:-1, 2:] != s[1:-1, 1:-1]) | (s[1:-1, :-2] != s[1:-1, 1:-1])
                        | (s[2:, 1:-1] != s[1:-1, 1:-1]) | (s[:-2, 1:-1] != s[1:-1, 1:-1]))
    neg = int(np.sum(dens < -tol))
    return DensityGrid(fld.re, fld.im, dens, band, tol, neg)


# ---------------------------------------------------------------- support

def support_vs_spectrum(mu: EmpiricalMeasure, s: SpectrumSet, spacing: float) -> dict:
    pts = s.points(spacing)
    if len(pts) == 0:
        return {"hausdorff_out": math.inf, "hausdorff_in": math.inf, "n_set_points": 0}
    xy_s = np.column_stack([pts.real, pts.imag])
    xy_a = np.column_stack([mu.atoms.real, mu.atoms.imag])
    out = cKDTree(xy_s).query(xy_a)[0]
    inn = cKDTree(xy_a).query(xy_s)[0]
    return {"hausdorff_out": float(out.max()), "hausdorff_in": float(inn.max()),
            "n_set_points": int(len(pts))}


# ---------------------------------------------------------------- weak distance

def load_bl_dictionary():
    with resources.files("hn_spectra").joinpath("data/bl_dictionary_v1.json").open() as fh:
        d = json.load(fh)
    centers = np.array([complex(a, b) for a, b in d["centers"]])
    scales = np.array(d["scales"], float)
    c = np.repeat(centers, len(scales))
    s = np.tile(scales, len(centers))
    return c, s, np.minimum(1.0, s * math.exp(0.5)), int(d["version"])


def bl_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> dict:
    """max over the fixed bump dictionary of |int f dmu - int f dnu|."""
    c, s, a, version = load_bl_dictionary()

    def moments(m):
        r2 = np.abs(m.atoms[None, :] - c[:, None]) ** 2
        return (a[:, None] * np.exp(-r2 / (2 * s[:, None] ** 2))) @ m.weights

    diff = np.abs(moments(mu) - moments(nu))
    return {"distance": float(diff.max()), "argmax": int(diff.argmax()),
            "dictionary_version": version, "n_functions": len(c)}
