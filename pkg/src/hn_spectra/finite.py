"""Finite Hatano-Nelson matrices with periodic or Dirichlet boundaries.

(H u)_k = -e^g u_{k+1} - e^{-g} u_{k-1} + v(T^k x) u_k,  k = 0..n-1.
Periodic: u_n = u_0, u_{-1} = u_{n-1}, i.e. -e^{-g} at [0, n-1] and -e^g at [n-1, 0].
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .base import BaseSystem, Potential, potential_sequence
from .errors import ConfigError, EigenSolverError

DENSE_CAP = 4096
LU_DENSE_MAX = 256
BOUNDARIES = ("periodic", "dirichlet")


@dataclass(frozen=True)
class FiniteOperator:
    n: int
    g: float
    boundary: str
    diagonal: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def up(self) -> float:
        return -math.exp(self.g)

    @property
    def down(self) -> float:
        return -math.exp(-self.g)

    def bands(self):
        """(diag, sup, sub, top_right, bottom_left)."""
        n = self.n
        per = self.boundary == "periodic"
        return (self.diagonal.astype(np.complex128),
                np.full(n - 1, self.up, np.complex128),
                np.full(n - 1, self.down, np.complex128),
                complex(self.down) if per else 0j,
                complex(self.up) if per else 0j)

    def dense(self) -> np.ndarray:
        d, sup, sub, tr, bl = self.bands()
        h = np.diag(d) + np.diag(sup, 1) + np.diag(sub, -1)
        h[0, self.n - 1] += tr
        h[self.n - 1, 0] += bl
        return h

    def is_hermitian(self) -> bool:
        return self.g == 0.0 and not np.any(self.diagonal.imag)

    def describe(self) -> dict:
        return {"n": self.n, "g": self.g, "boundary": self.boundary, **self.meta}


def build(base: BaseSystem, p: Potential, x0=None, n: int = 3, g: float = 0.0,
          boundary: str = "periodic") -> FiniteOperator:
    """Truncation on sites 0..n-1 with diagonal v(T^k x0)."""
    if n < 3:
        raise ConfigError("finite truncations need n >= 3 (corner entries would overlap)")
    if boundary not in BOUNDARIES:
        raise ConfigError(f"boundary must be one of {BOUNDARIES}")
    x0 = base.initial_phase if x0 is None else base._normalize(x0)
    diag = potential_sequence(base, p, x0, 0, n - 1).astype(np.complex128)
    ph = list(x0) if isinstance(x0, tuple) else x0
    meta = {"base": base.describe(), "potential": p.describe(), "x0": ph}
    return FiniteOperator(int(n), float(g), boundary, diag, meta)


# ---------------------------------------------------------------- eigenvalues

@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    backward_error: float | None
    trace_error: float
    logdet_error: float
    method: str

    def as_dict(self) -> dict:
        return {"n": int(len(self.eigenvalues)), "backward_error": self.backward_error,
                "trace_error": self.trace_error, "logdet_error": self.logdet_error,
                "method": self.method}


def eigenvalues(op: FiniteOperator, vectors: bool = False, cap: int = DENSE_CAP) -> EigenResult:
    """All n eigenvalues of the dense matrix.

    Hermitian inputs go through the LAPACK Hermitian driver, everything else
    through balanced Hessenberg-QR (zgeev).  Failed QR convergence raises with
    the failing indices instead of dropping eigenvalues.
    """
    if op.n > cap:
        raise ConfigError(f"n={op.n} exceeds the dense eigensolver cap {cap}")
    h = op.dense()
    vr = None
    if op.is_hermitian():
        if vectors:
            w, vr = sla.eigh(h)
        else:
            w = sla.eigvalsh(h)
        w = w.astype(np.complex128)
        method = "hermitian"
    else:
        w, _, vr, info = lapack.zgeev(h, compute_vl=0, compute_vr=int(vectors))
        if info > 0:
            raise EigenSolverError(
                "QR iteration did not converge",
                {"module": "finite_spectra", "failed_indices": list(range(int(info))),
                 "n": op.n, "g": op.g, "boundary": op.boundary})
        if info < 0:
            raise EigenSolverError("invalid argument to zgeev", {"info": int(info)})
        method = "zgeev"
        if not vectors:
            vr = None
    hnorm = np.linalg.norm(h, 1)
    berr = None
    if vr is not None:
        res = h @ vr - vr * w[None, :]
        berr = float(np.max(np.linalg.norm(res, axis=0) / np.linalg.norm(vr, axis=0)) / hnorm)
    trace_err = abs(w.sum() - np.trace(h)) / max(hnorm * op.n, 1e-300)
    cp = charpoly_eval(op, 0.0)
    with np.errstate(divide="ignore"):
        s = float(np.sum(np.log(np.abs(w))))
    logdet_err = abs(s - cp.log_abs) if np.isfinite(cp.log_abs) else 0.0
    return EigenResult(w, berr, float(trace_err), float(logdet_err), method)


# ---------------------------------------------------------------- determinants

@dataclass
class CharPoly:
    log_abs: float
    arg: float
    method: str

    @property
    def singular(self) -> bool:
        return self.log_abs == -math.inf


def charpoly_eval(op: FiniteOperator, E: complex, dense_max: int = LU_DENSE_MAX) -> CharPoly:
    """log|det(H - E)| and arg det(H - E) by pivoted LU.

    Small matrices use dense LAPACK LU; larger ones an O(n) pivoted
    elimination that keeps only the band and corner fill.
    """
    d, sup, sub, tr, bl = op.bands()
    d = d - complex(E)
    if op.n < 5 or op.n <= dense_max:
        h = op.dense() - complex(E) * np.eye(op.n)
        with warnings.catch_warnings():
            # exact zero pivots are reported as a singular CharPoly below
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(h, check_finite=False)
        u = np.diag(lu)
        if np.any(u == 0):
            return CharPoly(-math.inf, 0.0, "dense")
        swaps = int(np.sum(piv != np.arange(op.n)))
        arg = float(np.sum(np.angle(u)) + math.pi * swaps)
        return CharPoly(float(np.sum(np.log(np.abs(u)))), math.atan2(math.sin(arg), math.cos(arg)),
                        "dense")
    la, ar, sing = _kernels.cyclic_logdet(d, sup, sub, tr, bl)
    if sing:
        return CharPoly(-math.inf, 0.0, "banded")
    return CharPoly(float(la), float(ar), "banded")


# ---------------------------------------------------------------- matching

def lexsort_complex(z) -> np.ndarray:
    z = np.asarray(z)
    return z[np.lexsort((z.imag, z.real))]


def match_eigenvalues(a, b, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray, str]:
    """Pair two multisets: greedy nearest neighbour over lexicographically
    sorted lists, falling back to an optimal assignment when the greedy total
    exceeds ``tol``.  Returns (a_sorted, b_paired, method)."""
    a = lexsort_complex(a)
    b = lexsort_complex(b)
    if len(a) != len(b):
        raise ValueError("multisets of different size")
    free = np.ones(len(b), bool)
    pair = np.empty(len(a), int)
    for i, z in enumerate(a):
        d = np.where(free, np.abs(b - z), np.inf)
        j = int(np.argmin(d))
        pair[i] = j
        free[j] = False
    total = float(np.sum(np.abs(a - b[pair])))
    if total <= tol:
        return a, b[pair], "greedy"
    rows, cols = linear_sum_assignment(np.abs(a[:, None] - b[None, :]))
    return a[rows], b[cols], "optimal"


def dirichlet_g_invariance(base: BaseSystem, p: Potential, x0=None, n: int = 32,
                           g1: float = 0.0, g2: float = 1.0, tol: float = 1e-8) -> dict:
    """Compare Dirichlet spectra at two hoppings.

    The two matrices are diagonally similar via W = diag(e^{-k g}); the
    conditioning estimate e^{(n-1)|g1-g2|} eps ||H|| bounds what unbalanced
    arithmetic could resolve.
    """
    ops = [build(base, p, x0, n, g, "dirichlet") for g in (g1, g2)]
    ev = [eigenvalues(o).eigenvalues for o in ops]
    a, b, how = match_eigenvalues(ev[0], ev[1], tol)
    dist = float(np.max(np.abs(a - b))) if n else 0.0
    hn = max(np.linalg.norm(o.dense(), 1) for o in ops)
    cond = math.exp(min((n - 1) * abs(g1 - g2), 700.0)) * np.finfo(float).eps * hn
    return {"n": n, "g1": g1, "g2": g2, "max_matched_distance": dist, "matching": how,
            "tolerance": tol, "conditioning_estimate": cond, "passed": bool(dist < tol)}


# ---------------------------------------------------------------- I/O

def write_cloud(csv_path, eigs, sidecar_path, meta: dict) -> None:
    """Eigenvalues as CSV (re, im) sorted lexicographically, with a JSON sidecar."""
    z = lexsort_complex(np.asarray(eigs, dtype=np.complex128))
    np.savetxt(csv_path, np.column_stack([z.real, z.imag]), fmt="%.17g", delimiter=",",
               header="re,im", comments="")
    with open(sidecar_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_cloud(csv_path) -> np.ndarray:
    d = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    return d[:, 0] + 1j * d[:, 1]
