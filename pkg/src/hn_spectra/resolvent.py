"""Green's functions of the Hatano-Nelson operator on finite windows.

Two constructions of G = (H(g) - E)^{-1}:

* forward (L(E) < g): G(m, n) = -phi^n_m for m > n and 0 for m <= n, where
  phi^n solves the eigenequation with phi^n_n = 0, phi^n_{n+1} = e^{-g};
* hyperbolic (L(E) > g, E off Sigma(0)): G(m, n) = e^{(n-m)g} G_0(m, n) with the
  Schroedinger Green's function G_0 built from the solutions decaying at -inf
  (phi^-) and +inf (phi^+).

Solutions are carried as unit vectors (phi_k, phi_{k-1}) times exp(log-scale)
so entries are formed from log-magnitudes; anything below 1e-300 is stored as
an exact zero and counted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .base import BaseSystem, Potential, potential_sequence
from .cocycle import UH_DEFAULTS, _merge_cfg, lyapunov, uh_test
from .errors import RegimeError

GREEN_DEFAULTS = {"margin_floor": 1e-3, "margin_sigmas": 3.0, "direction_horizon": 2048,
                  "lyapunov": None, "uh": None}
LOG_TINY = math.log(1e-300)


@dataclass
class GreenWindow:
    W: int
    entries: np.ndarray          # entries[m + W, n + W] = G(m, n)
    regime: str
    g: float
    E: complex
    potential: np.ndarray        # V(k) for k = -W..W
    meta: dict = field(default_factory=dict)

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-self.W, self.W + 1)

    def window_matrix(self) -> np.ndarray:
        """H(g) - E restricted to the window."""
        k = 2 * self.W + 1
        h = np.diag(self.potential - self.E)
        h += np.diag(np.full(k - 1, -math.exp(self.g)), 1)
        h += np.diag(np.full(k - 1, -math.exp(-self.g)), -1)
        return h

    def right_residual(self) -> float:
        """max |((H - E) G)(m, n) - delta_mn| over interior rows m."""
        r = (self.window_matrix() @ self.entries)[1:-1] - np.eye(2 * self.W + 1)[1:-1]
        return float(np.max(np.abs(r)))

    def left_residual(self) -> float:
        """max |(G (H - E))(m, n) - delta_mn| over interior columns n."""
        r = (self.entries @ self.window_matrix())[:, 1:-1] - np.eye(2 * self.W + 1)[:, 1:-1]
        return float(np.max(np.abs(r)))

    def to_csv(self, path) -> None:
        s = self.sites
        mm, nn = np.meshgrid(s, s, indexing="ij")
        rows = np.column_stack([mm.ravel(), nn.ravel(), self.entries.real.ravel(),
                                self.entries.imag.ravel()])
        np.savetxt(path, rows, fmt=["%d", "%d", "%.17g", "%.17g"], delimiter=",",
                   header="m,n,re,im", comments="")

    def report(self) -> dict:
        fit = decay_fit(self)
        return {"W": self.W, "regime": self.regime, "g": self.g, "E": [self.E.real, self.E.imag],
                "right_residual": self.right_residual(), "left_residual": self.left_residual(),
                **fit, **self.meta}

    def write_report(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.report(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _step(v, E, g, a, b):
    """(phi_{k+1}, phi_k) from (phi_k, phi_{k-1}) with V(k) = v."""
    return math.exp(-g) * ((v - E) * a - math.exp(-g) * b), a


def _from_log(mag_log, phase):
    if mag_log < LOG_TINY:
        return 0j, True
    return phase * math.exp(mag_log), False


def _regime_margin(base, p, E, cfg):
    est = lyapunov(base, p, E, 0.0, cfg["lyapunov"])
    margin = max(cfg["margin_sigmas"] * est.stderr, cfg["margin_floor"])
    return est, margin


def green_forward(base: BaseSystem, p: Potential, x0=None, E: complex = 0j, g: float = 1.0,
                  W: int = 20, cfg: dict | None = None) -> GreenWindow:
    c = _merge_cfg(cfg, GREEN_DEFAULTS)
    E = complex(E)
    b0 = base if x0 is None else replace(base, initial_phase=x0)
    est, margin = _regime_margin(b0, p, E, c)
    if not est.value < g - margin:
        raise RegimeError("E is not in E_minus with the required margin",
                          {"module": "resolvent", "L": est.value, "stderr": est.stderr,
                           "g": g, "margin": margin})
    x0 = base.initial_phase if x0 is None else x0
    V = potential_sequence(base, p, x0, -W, W)
    k = 2 * W + 1
    G = np.zeros((k, k), np.complex128)
    underflow = 0
    for n in range(-W, W):
        # unit pair (phi_{m}, phi_{m-1}) with log-scale, starting at m = n + 1
        a, b, ls = 1.0 + 0j, 0j, -g
        m = n + 1
        while m <= W:
            val, tiny = _from_log(ls + math.log(abs(a)) if a != 0 else -math.inf,
                                  a / abs(a) if a != 0 else 0)
            underflow += tiny and a != 0
            G[m + W, n + W] = -val
            if m == W:
                break
            a, b = _step(V[m + W], E, g, a, b)
            r = math.hypot(abs(a), abs(b))
            a, b, ls = a / r, b / r, ls + math.log(r)
            m += 1
    return GreenWindow(W, G, "E_minus_forward", float(g), E, V,
                       {"L": est.value, "L_stderr": est.stderr, "margin": margin,
                        "underflow_zeros": int(underflow)})


def _direction(V_seq, E, forward: bool):
    """Projective iteration of the g = 0 cocycle over V_seq; returns the unit
    vector (psi_k, psi_{k-1}) at the end site and its value at half length."""
    if forward:
        a, b = 1.0 + 0j, 0.3 + 0.1j
    else:
        a, b = 0.4 + 0.2j, 1.0 + 0j
    half = None
    n = len(V_seq)
    for i, v in enumerate(V_seq if forward else V_seq[::-1]):
        if forward:
            a, b = (v - E) * a - b, a
        else:
            a, b = b, (v - E) * b - a
        r = math.hypot(abs(a), abs(b))
        a, b = a / r, b / r
        if i == n // 2 - 1:
            half = (a, b)
    return (a, b), half


def _sine(u, w):
    return abs(u[0] * w[1] - u[1] * w[0])


def green_hyperbolic(base: BaseSystem, p: Potential, x0=None, E: complex = 3.0,
                     g: float = 0.5, W: int = 20, cfg: dict | None = None) -> GreenWindow:
    c = _merge_cfg(cfg, GREEN_DEFAULTS)
    E = complex(E)
    b0 = base if x0 is None else replace(base, initial_phase=x0)
    cert = uh_test(b0, p, E, c["uh"], record=False)
    floor = _merge_cfg(c["uh"], UH_DEFAULTS)["angle_floor"]
    if cert.verdict != "uniformly_hyperbolic" or cert.min_angle <= floor:
        raise RegimeError("the g = 0 cocycle is not certified uniformly hyperbolic at E",
                          {"module": "resolvent", **cert.as_dict()})
    est, margin = _regime_margin(b0, p, E, c)
    if not est.value > g + margin:
        raise RegimeError("E is not in E_plus with the required margin",
                          {"module": "resolvent", "L": est.value, "stderr": est.stderr,
                           "g": g, "margin": margin})
    N = int(c["direction_horizon"])
    x0 = b0.initial_phase
    # V(k) for k = -W-1-N .. W+1+N
    V = potential_sequence(b0, p, x0, -W - 1 - N, W + 1 + N)
    off = W + 1 + N
    # phi^- grows to the right: direction at site -W-1 from a forward run,
    # then forward propagation across the window (numerically stable)
    u, u_half = _direction(V[:off - W - 1], E, True)      # sites -W-1-N .. -W-2
    # phi^+ grows to the left: direction from a backward run ending at site W+1
    s, s_half = _direction(V[off + W + 2:], E, False)     # sites W+2 .. W+1+N
    k = 2 * W + 3                      # sites -W-1 .. W+1
    A = np.zeros(k, np.complex128)
    Ap = np.zeros(k, np.complex128)
    al = np.zeros(k)
    B = np.zeros(k, np.complex128)
    Bp = np.zeros(k, np.complex128)
    be = np.zeros(k)
    # forward: at site -W-1 the pair is (phi_{-W-1}, phi_{-W-2}); advance with V(site)
    a, b, ls = u[0], u[1], 0.0
    for i in range(k):
        A[i], Ap[i], al[i] = a, b, ls
        site = -W - 1 + i
        a, b = (V[site + off] - E) * a - b, a
        r = math.hypot(abs(a), abs(b))
        a, b, ls = a / r, b / r, ls + math.log(r)
    # backward: at site W+1 the pair is (phi_{W+1}, phi_W) after absorbing V(W+1)
    a, b, ls = s[0], s[1], 0.0
    for i in range(k - 1, -1, -1):
        site = -W - 1 + i
        a, b = b, (V[site + off] - E) * b - a
        r = math.hypot(abs(a), abs(b))
        a, b, ls = a / r, b / r, ls + math.log(r)
        B[i], Bp[i], be[i] = a, b, ls
    # B[i], Bp[i] now hold (phi^+_{site}, phi^+_{site-1}) with log-scale be[i]
    det = A * Bp - Ap * B               # unit-vector Wronskian per site
    size = 2 * W + 1
    G = np.zeros((size, size), np.complex128)
    underflow = 0
    for jn in range(size):
        i_n = jn + 1
        for jm in range(size):
            i_m = jm + 1
            d = (jn - jm) * g
            if jm <= jn:
                mag = d + al[i_m] - al[i_n]
                ph = A[i_m] * B[i_n] / det[i_n]
            else:
                mag = d + be[i_m] - be[i_n]
                ph = A[i_n] * B[i_m] / det[i_n]
            if ph == 0:
                continue
            val, tiny = _from_log(mag + math.log(abs(ph)), ph / abs(ph))
            underflow += tiny
            G[jm, jn] = val
    drift = max(_sine(u, u_half), _sine(s, s_half))
    return GreenWindow(W, G, "E_plus_hyperbolic", float(g), E, V[off - W:off + W + 1],
                       {"L": est.value, "L_stderr": est.stderr, "margin": margin,
                        "min_angle": cert.min_angle, "min_wronskian": float(np.min(np.abs(det))),
                        "direction_drift": drift, "underflow_zeros": int(underflow)})


def decay_fit(gw: GreenWindow, min_distances: int = 10) -> dict:
    """Least-squares slopes of log|G(m, n)| against the distance |m - n|.

    ``rate_right`` fits the entries with m > n, ``rate_left`` those with m < n;
    a side without entries reports None.
    """
    s = gw.sites
    mm, nn = np.meshgrid(s, s, indexing="ij")
    d = (mm - nn).ravel()
    a = np.abs(gw.entries).ravel()
    out: dict = {"rate_right": None, "rate_left": None, "prefactor": None,
                 "insufficient_range": []}
    pref = []
    for name, sel in (("rate_right", d > 0), ("rate_left", d < 0)):
        keep = sel & (a > 0)
        if not np.any(keep):
            continue
        dist = np.abs(d[keep])
        if len(np.unique(dist[a[keep] > 1e-14])) < min_distances:
            out["insufficient_range"].append(name)
        slope, icpt = np.polyfit(dist.astype(float), np.log(a[keep]), 1)
        out[name] = float(-slope)
        pref.append(icpt)
    if pref:
        out["prefactor"] = float(math.exp(max(pref)))
    return out


def operator_bound(gw: GreenWindow, n_vectors: int = 50, seed: int = 0) -> float:
    """max ||G psi|| / ||psi|| over random vectors supported in the middle third."""
    rng = np.random.default_rng(seed)
    size = 2 * gw.W + 1
    lo, hi = size // 3, size - size // 3
    best = 0.0
    for _ in range(n_vectors):
        psi = np.zeros(size, np.complex128)
        psi[lo:hi] = rng.normal(size=hi - lo) + 1j * rng.normal(size=hi - lo)
        best = max(best, float(np.linalg.norm(gw.entries @ psi) / np.linalg.norm(psi)))
    return best
