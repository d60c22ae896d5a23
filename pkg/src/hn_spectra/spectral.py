"""Spectrum assembly from the Lyapunov field.

Energies split into E_minus (L < g), E_zero (L = g) and E_plus (L > g).  The
spectrum of the infinite operator is E_zero together with the part of the
self-adjoint spectrum Sigma(0) where L > g.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from contourpy import LineType, contour_generator

from .base import BaseSystem, Potential
from .cocycle import LyapunovField, _merge_cfg, uh_scan
from .errors import ConfigError, NumericalFailure

log = logging.getLogger(__name__)

E_MINUS, E_ZERO, E_PLUS = -1, 0, 1
LABELS = {E_MINUS: "E_minus", E_ZERO: "E_zero", E_PLUS: "E_plus"}

SIGMA0_DEFAULTS = {"re_min": None, "re_max": None, "step": 0.01, "resolution": 1e-3,
                   "uh": None}


# ---------------------------------------------------------------- oracles

def _joukowski_log(E):
    E = np.asarray(E, dtype=np.complex128)
    s = np.sqrt(E * E - 4)
    w = np.maximum(np.abs(E + s), np.abs(E - s)) / 2
    return np.log(np.maximum(w, 1.0))


def oracle_free_L(E):
    """log|E/2 + sqrt(E^2 - 4)/2| on the branch with modulus >= 1."""
    out = _joukowski_log(E)
    return float(out) if out.ndim == 0 else out


def oracle_single_exp_L(E, lam: complex):
    """Lyapunov exponent of v(x) = lam e^{2 pi i x}: max(free value, log|lam|)."""
    out = np.maximum(_joukowski_log(E), math.log(abs(lam)) if lam != 0 else -np.inf)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------- classify

@dataclass(frozen=True)
class EnergyClass:
    label: str
    margin: float


@dataclass
class Classification:
    labels: np.ndarray
    margin: np.ndarray
    g: float
    tol0: float

    def at(self, j: int, i: int) -> EnergyClass:
        return EnergyClass(LABELS[int(self.labels[j, i])], float(self.margin[j, i]))

    def counts(self) -> dict:
        return {LABELS[k]: int(np.sum(self.labels == k)) for k in LABELS}


def default_tol0(fld: LyapunovField) -> float:
    return max(3.0 * float(np.max(fld.stderr)), 1e-3)


def classify(fld: LyapunovField, g: float, tol0: float | None = None) -> Classification:
    tol0 = default_tol0(fld) if tol0 is None else float(tol0)
    smax = float(np.max(fld.stderr))
    if not tol0 > 2 * smax:
        raise ConfigError(f"tol0={tol0:g} must exceed twice the largest field stderr ({smax:g})")
    if np.any(fld.flag):
        raise NumericalFailure("field has unconverged nodes",
                               {"module": "spectral_theory", "unconverged": int(fld.flag.sum())})
    d = fld.L - g
    labels = np.where(d < -tol0, E_MINUS, np.where(d > tol0, E_PLUS, E_ZERO)).astype(np.int8)
    return Classification(labels, np.abs(d), float(g), tol0)


# ---------------------------------------------------------------- Sigma(0)

@dataclass
class Sigma0:
    intervals: list
    n_inconclusive: int
    window: tuple
    step: float
    resolution: float

    @property
    def measure(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, bool)
        for a, b in self.intervals:
            out |= (x >= a - tol) & (x <= b + tol)
        return out

    def distance(self, z) -> np.ndarray:
        """Distance from complex points to the union of intervals."""
        z = np.asarray(z, dtype=np.complex128)
        best = np.full(z.shape, np.inf)
        for a, b in self.intervals:
            best = np.minimum(best, np.abs(z - np.clip(z.real, a, b)))
        return best

    def as_dict(self) -> dict:
        return {"intervals": [list(iv) for iv in self.intervals],
                "n_inconclusive": self.n_inconclusive, "window": list(self.window),
                "step": self.step, "resolution": self.resolution, "measure": self.measure}


def real_spectrum_sigma0(base: BaseSystem, p: Potential, cfg: dict | None = None) -> Sigma0:
    """Sigma(0) on the real line as the complement of uniform hyperbolicity.

    Grid points without a uniformly_hyperbolic certificate (inconclusive
    included) are merged into intervals, whose endpoints are then bisected
    against the verdict down to ``resolution``.
    """
    if not p.is_real_valued():
        raise ConfigError("Sigma(0) from the UH complement needs a real-valued potential")
    c = _merge_cfg(cfg, SIGMA0_DEFAULTS)
    r = p.sup_bound(base) + 2.0
    lo = -r - 0.5 if c["re_min"] is None else float(c["re_min"])
    hi = r + 0.5 if c["re_max"] is None else float(c["re_max"])
    shift = p.c.real if p.form == "constant" else 0.0
    if c["re_min"] is None:
        lo += shift
        hi += shift
    n = max(2, int(math.ceil((hi - lo) / float(c["step"]))) + 1)
    xs = np.linspace(lo, hi, n)
    uh_cfg = c["uh"]

    def not_uh(x):
        certs = uh_scan(base, p, np.asarray(x, dtype=np.complex128), uh_cfg)
        return (np.array([ct.verdict != "uniformly_hyperbolic" for ct in certs]),
                sum(ct.verdict == "inconclusive" for ct in certs))

    inside, n_inc = not_uh(xs)
    runs = []
    i = 0
    while i < n:
        if inside[i]:
            j = i
            while j + 1 < n and inside[j + 1]:
                j += 1
            runs.append((i, j))
            i = j + 1
        else:
            i += 1
    # bisection brackets: (outside point, inside point) for every free endpoint
    brackets = []
    for a, b in runs:
        if a > 0:
            brackets.append([xs[a - 1], xs[a]])
        if b < n - 1:
            brackets.append([xs[b + 1], xs[b]])
    br = np.array(brackets, dtype=float).reshape(-1, 2)
    res = float(c["resolution"])
    while len(br) and np.max(np.abs(br[:, 0] - br[:, 1])) > res:
        mid = 0.5 * (br[:, 0] + br[:, 1])
        ins, k = not_uh(mid)
        n_inc += k
        br[ins, 1] = mid[ins]
        br[~ins, 0] = mid[~ins]
    ends = iter(br[:, 1])
    intervals = []
    for a, b in runs:
        left = next(ends) if a > 0 else xs[0]
        right = next(ends) if b < n - 1 else xs[-1]
        if a == 0 or b == n - 1:
            log.warning("Sigma(0) interval touches the scan window edge")
        intervals.append((float(left), float(right)))
    return Sigma0(intervals, int(n_inc), (float(lo), float(hi)), float(xs[1] - xs[0]), res)


def dirichlet_support_check(sigma0: Sigma0, eigs, tol: float = 0.05) -> dict:
    """Advisory cross-check: fraction of large-n Dirichlet eigenvalues within
    ``tol`` of the UH-complement intervals."""
    d = sigma0.distance(np.asarray(eigs).real)
    return {"fraction_inside": float(np.mean(d <= tol)), "max_distance": float(np.max(d)),
            "tol": tol}


# ---------------------------------------------------------------- assembly

@dataclass
class SpectrumSet:
    real_part: list
    complex_part: list
    filled_cells: list
    g: float
    meta: dict = field(default_factory=dict)

    def points(self, spacing: float) -> np.ndarray:
        """Discretization of the set at roughly ``spacing``."""
        pts = []
        for a, b in self.real_part:
            k = max(2, int(math.ceil((b - a) / spacing)) + 1)
            pts.append(np.linspace(a, b, k).astype(np.complex128))
        for line in self.complex_part:
            pts.append(resample_polyline(line, spacing))
        if self.filled_cells:
            fc = np.asarray(self.filled_cells)
            pts.append(0.5 * (fc[:, 0] + fc[:, 1]) + 0.5j * (fc[:, 2] + fc[:, 3]))
        if not pts:
            return np.zeros(0, np.complex128)
        return np.concatenate(pts)

    def filled_area(self) -> float:
        if not self.filled_cells:
            return 0.0
        fc = np.asarray(self.filled_cells)
        return float(np.sum((fc[:, 1] - fc[:, 0]) * (fc[:, 3] - fc[:, 2])))

    def as_dict(self) -> dict:
        return {"g": self.g,
                "real_part": [list(iv) for iv in self.real_part],
                "complex_part": [[[z.real, z.imag] for z in line] for line in self.complex_part],
                "filled_cells": [list(c) for c in self.filled_cells],
                "filled_area": self.filled_area(),
                "meta": self.meta}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "SpectrumSet":
        with open(path) as fh:
            d = json.load(fh)
        lines = [np.array([complex(a, b) for a, b in line]) for line in d["complex_part"]]
        return cls([tuple(iv) for iv in d["real_part"]], lines,
                   [tuple(c) for c in d["filled_cells"]], d["g"], d.get("meta", {}))


def resample_polyline(line, spacing: float) -> np.ndarray:
    line = np.asarray(line, dtype=np.complex128)
    if len(line) < 2:
        return line
    seg = np.abs(np.diff(line))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    k = max(2, int(math.ceil(s[-1] / spacing)) + 1)
    t = np.linspace(0.0, s[-1], k)
    return np.interp(t, s, line.real) + 1j * np.interp(t, s, line.imag)


def level_lines(fld: LyapunovField, level: float) -> list:
    gen = contour_generator(x=fld.re, y=fld.im, z=fld.L, line_type=LineType.Separate)
    return [xy[:, 0] + 1j * xy[:, 1] for xy in gen.lines(level)]


def _real_axis_L(fld: LyapunovField, x):
    if not (fld.im[0] <= 0.0 <= fld.im[-1]):
        raise ConfigError("the field window must contain the real axis")
    return fld.interpolate(np.asarray(x, dtype=float) + 0j)


def assemble_spectrum(fld: LyapunovField, g: float, sigma0: Sigma0,
                      tol0: float | None = None) -> SpectrumSet:
    cls = classify(fld, g, tol0)
    tol0 = cls.tol0
    lo, hi = fld.re[0], fld.re[-1]
    real_part = []
    fine = fld.hx / 8
    for a, b in sigma0.intervals:
        a2, b2 = max(a, lo), min(b, hi)
        if b2 < a2:
            continue
        k = max(2, int(math.ceil((b2 - a2) / fine)) + 1)
        xs = np.linspace(a2, b2, k)
        above = _real_axis_L(fld, xs) > g + tol0
        i = 0
        while i < k:
            if above[i]:
                j = i
                while j + 1 < k and above[j + 1]:
                    j += 1
                real_part.append((float(xs[i]), float(xs[j])))
                i = j + 1
            else:
                i += 1
    real_part.sort()
    lines = level_lines(fld, g)
    # plateau cells: E_zero at all corners, and at each corner the gradient
    # from its 3x3 central-difference stencil is below grad_floor
    grad_floor = tol0 / fld.step
    gy, gx = np.gradient(fld.L, fld.hy, fld.hx)
    gmax = np.hypot(gx, gy)
    z = cls.labels == E_ZERO
    ok = z[:-1, :-1] & z[1:, :-1] & z[:-1, 1:] & z[1:, 1:]
    flat = ((gmax[:-1, :-1] < grad_floor) & (gmax[1:, :-1] < grad_floor)
            & (gmax[:-1, 1:] < grad_floor) & (gmax[1:, 1:] < grad_floor))
    jj, ii = np.nonzero(ok & flat)
    cells = [(float(fld.re[i]), float(fld.re[i + 1]), float(fld.im[j]), float(fld.im[j + 1]))
             for j, i in zip(jj, ii)]
    meta = {"tol0": tol0, "grad_floor": grad_floor, "grid_step": fld.step,
            "bounds": list(fld.bounds), "shape": list(fld.shape)}
    return SpectrumSet(real_part, lines, cells, float(g), meta)


# ---------------------------------------------------------------- transition

@dataclass
class TransitionReport:
    g_lower: float
    g_upper: float
    tol0: float
    warnings: list = field(default_factory=list)

    def regime(self, g: float) -> str:
        if g <= self.g_lower + self.tol0:
            return "all_real"
        if g >= self.g_upper - self.tol0:
            return "all_complex"
        return "mixed"

    def margins(self, g: float) -> dict:
        return {"to_lower": g - self.g_lower, "to_upper": self.g_upper - g}

    def as_dict(self, gs=()) -> dict:
        return {"g_lower": self.g_lower, "g_upper": self.g_upper, "tol0": self.tol0,
                "warnings": self.warnings,
                "regimes": [{"g": g, "regime": self.regime(g), **self.margins(g)} for g in gs]}


def transition_report(fld: LyapunovField, sigma0: Sigma0,
                      tol0: float | None = None) -> TransitionReport:
    tol0 = default_tol0(fld) if tol0 is None else float(tol0)
    xs = fld.re
    Lr = _real_axis_L(fld, xs)
    if sigma0.intervals and (sigma0.intervals[0][0] < xs[0] or sigma0.intervals[-1][1] > xs[-1]):
        raise ConfigError("the field window must cover Sigma(0)")
    g_lower = float(np.min(Lr))
    inside = sigma0.contains(xs)
    warn = []
    nodeless = [iv for iv in sigma0.intervals if not np.any((xs >= iv[0]) & (xs <= iv[1]))]
    if nodeless:
        warn.append(f"{len(nodeless)} Sigma(0) intervals contain no field node and do not "
                    "enter g_upper")
        log.warning(warn[-1])
    if np.any(inside):
        g_upper = float(np.max(Lr[inside]))
    elif sigma0.intervals:
        # no node at all: interpolated midpoints, biased upward by neighbouring gap nodes
        mids = np.array([0.5 * (a + b) for a, b in sigma0.intervals])
        g_upper = float(np.max(_real_axis_L(fld, mids)))
        warn.append("no field node inside Sigma(0); g_upper uses interpolated midpoints")
        log.warning(warn[-1])
    else:
        g_upper = g_lower
    jumps = max(float(np.max(np.abs(np.diff(fld.L, axis=0)))),
                float(np.max(np.abs(np.diff(fld.L, axis=1)))))
    if jumps > 10 * tol0:
        warn.append(f"largest neighbour jump of L is {jumps:.3g} > 10 tol0; "
                    "continuity of L is not resolved at this grid step")
        log.warning(warn[-1])
    return TransitionReport(g_lower, max(g_upper, g_lower), tol0, warn)


# ---------------------------------------------------------------- contours

def _join(lines, gap):
    """Chain polylines whose endpoints nearly touch."""
    lines = [np.asarray(l) for l in lines if len(l) > 1]
    changed = True
    while changed:
        changed = False
        for a in range(len(lines)):
            for b in range(a + 1, len(lines)):
                la, lb = lines[a], lines[b]
                for ra in (False, True):
                    for rb in (False, True):
                        x = la[::-1] if ra else la
                        y = lb[::-1] if rb else lb
                        if abs(x[-1] - y[0]) < gap and abs(x[0] - x[-1]) >= gap:
                            lines[a] = np.concatenate([x, y])
                            del lines[b]
                            changed = True
                            break
                    if changed:
                        break
                if changed:
                    break
            if changed:
                break
    return lines


def count_contours(s: SpectrumSet) -> dict:
    """Connected components of the level-set polylines.

    Each component is closed (ends meet within two grid steps), anchored
    (both ends within two grid steps of the real axis) or unresolved.
    """
    step = float(s.meta.get("grid_step", 0.0)) or 1e-3
    gap = 2 * step
    comps = _join(s.complex_part, gap)
    kinds = []
    for c in comps:
        if abs(c[0] - c[-1]) < gap:
            kinds.append("closed")
        elif abs(c[0].imag) < gap and abs(c[-1].imag) < gap:
            kinds.append("anchored")
        else:
            kinds.append("unresolved")
    upper = sum(1 for c in comps if np.max(c.imag) > gap)
    return {"count": sum(k != "unresolved" for k in kinds),
            "closed": [k == "closed" for k in kinds if k != "unresolved"],
            "kinds": kinds, "unresolved": kinds.count("unresolved"), "upper_half": upper}
