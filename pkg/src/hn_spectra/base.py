"""Base dynamics and potential sampling: V(n) = v(T^n x).

Torus phases live on the dyadic grid 2**-52 * Z / Z.  Sums of two grid points
in [0, 1) are exact in double precision, so the rotation and the skew-shift are
bit-exactly invertible.  Orbits are evaluated with the closed forms

    rotation:    x_n = x_0 + n a
    skew-shift:  (x_n, y_n) = (x_0 + n a, y_0 + n x_0 + n(n-1)/2 a)

in wrapping uint64 arithmetic, which is congruent modulo 2**52.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

_BITS = 52
_SCALE = float(2**_BITS)
_MASK = np.uint64(2**_BITS - 1)
_SNAP = 1e-15

KINDS = ("rotation", "skew_shift", "periodic", "iid")
FORMS = ("fourier", "cosine", "single_exponential", "constant", "iid_diagonal")


def reduce_phase(x: float) -> float:
    """Reduce a real number mod 1 onto the phase grid, result in [0, 1)."""
    r = x - math.floor(x)
    if r >= 1.0 - _SNAP:
        r = 0.0
    return _to_fixed(r) / _SCALE


def _to_fixed(x: float) -> int:
    r = x - math.floor(x)
    return int(round(r * _SCALE)) & int(_MASK)


def _wrap(values: np.ndarray) -> np.ndarray:
    return (values & _MASK).astype(np.float64) / _SCALE


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


def iid_uniform(seed: int, indices) -> np.ndarray:
    """Counter-based uniform draws in [0, 1) keyed by (seed, index).

    Any index, negative included, can be replayed independently of the others.
    """
    idx = np.atleast_1d(np.asarray(indices, dtype=np.int64)).astype(np.uint64)
    key = _splitmix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0]
    with np.errstate(over="ignore"):
        z = _splitmix64(idx * np.uint64(0x9E3779B97F4A7C15) + key)
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class BaseSystem:
    """Invertible base map T on a compact phase space.

    ``kind`` is one of rotation (x -> x + alpha), skew_shift
    ((x, y) -> (x + alpha, y + x)), periodic (j -> j + 1 mod period, sampled at
    j / period) or iid (index -> index + 1 over a counter-based uniform stream
    on [-lam, lam]).  The iid kind is not strictly ergodic and only serves as a
    contrast baseline.
    """

    kind: str
    alpha: float = GOLDEN
    period: int | None = None
    seed: int | None = None
    lam: float = 1.0
    initial_phase: Any = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown base kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("rotation", "skew_shift"):
            object.__setattr__(self, "alpha", reduce_phase(float(self.alpha)))
        if self.kind == "periodic":
            if self.period is None or int(self.period) < 1:
                raise ConfigError("periodic base needs a positive integer period")
            object.__setattr__(self, "period", int(self.period))
        if self.kind == "iid":
            if self.seed is None:
                raise ConfigError("iid base needs an integer seed")
            object.__setattr__(self, "seed", int(self.seed))
            object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "initial_phase", self._normalize(self.initial_phase))

    # construction helpers
    @classmethod
    def rotation(cls, alpha: float = GOLDEN, x0: float = 0.0) -> "BaseSystem":
        return cls("rotation", alpha=alpha, initial_phase=x0)

    @classmethod
    def skew_shift(cls, alpha: float = GOLDEN, x0=(0.0, 0.0)) -> "BaseSystem":
        return cls("skew_shift", alpha=alpha, initial_phase=tuple(x0))

    @classmethod
    def periodic_orbit(cls, period: int, x0: int = 0) -> "BaseSystem":
        return cls("periodic", period=period, initial_phase=x0)

    @classmethod
    def iid(cls, seed: int, lam: float = 1.0, x0: int = 0) -> "BaseSystem":
        return cls("iid", seed=seed, lam=lam, initial_phase=x0)

    @property
    def strictly_ergodic(self) -> bool:
        return self.kind in ("rotation", "skew_shift")

    def _normalize(self, x0):
        if self.kind == "rotation":
            return reduce_phase(float(0.0 if x0 is None else x0))
        if self.kind == "skew_shift":
            x, y = (0.0, 0.0) if x0 is None else x0
            return (reduce_phase(float(x)), reduce_phase(float(y)))
        if self.kind == "periodic":
            return int(0 if x0 is None else x0) % self.period
        return int(0 if x0 is None else x0)

    def orbit(self, x0=None, n_from: int = 0, n_to: int = 0) -> np.ndarray:
        """Phases T^n x0 for n = n_from..n_to (inclusive).

        Returns shape (N,) for one-dimensional phase spaces and (N, 2) for the
        skew-shift.
        """
        if n_to < n_from:
            raise ValueError("orbit needs n_from <= n_to")
        x0 = self.initial_phase if x0 is None else self._normalize(x0)
        n = np.arange(n_from, n_to + 1, dtype=np.int64)
        if self.kind == "rotation":
            a = np.uint64(_to_fixed(self.alpha))
            with np.errstate(over="ignore"):
                return _wrap(np.uint64(_to_fixed(x0)) + n.astype(np.uint64) * a)
        if self.kind == "skew_shift":
            a = np.uint64(_to_fixed(self.alpha))
            fx, fy = np.uint64(_to_fixed(x0[0])), np.uint64(_to_fixed(x0[1]))
            tri = (n * (n - 1) // 2).astype(np.uint64)
            nu = n.astype(np.uint64)
            with np.errstate(over="ignore"):
                xs = fx + nu * a
                ys = fy + nu * fx + tri * a
            return np.stack([_wrap(xs), _wrap(ys)], axis=-1)
        if self.kind == "periodic":
            return (x0 + n) % self.period
        return x0 + n

    def step(self, phase, n: int = 1):
        """T^n applied to a single phase."""
        out = self.orbit(phase, n, n)[0]
        if self.kind == "skew_shift":
            return (float(out[0]), float(out[1]))
        if self.kind == "rotation":
            return float(out)
        return int(out)

    def spread_phases(self, count: int) -> list:
        """``count`` equidistributed starting phases around the initial phase."""
        if self.kind == "rotation":
            return [reduce_phase(self.initial_phase + j / count) for j in range(count)]
        if self.kind == "skew_shift":
            x, y = self.initial_phase
            return [(reduce_phase(x + j / count), reduce_phase(y + j * GOLDEN / count))
                    for j in range(count)]
        if self.kind == "periodic":
            return [(self.initial_phase + (j * self.period) // count) % self.period
                    for j in range(count)]
        # disjoint, far-apart windows of the iid stream
        return [self.initial_phase + j * 1_000_000_007 for j in range(count)]

    def describe(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind in ("rotation", "skew_shift"):
            d["alpha"] = self.alpha
        if self.kind == "periodic":
            d["period"] = self.period
        if self.kind == "iid":
            d["seed"] = self.seed
            d["lam"] = self.lam
        ph = self.initial_phase
        d["phase"] = list(ph) if isinstance(ph, tuple) else ph
        if not self.strictly_ergodic:
            d["strictly_ergodic"] = False
        return d


def orbit(base: BaseSystem, x0=None, n_from: int = 0, n_to: int = 0) -> np.ndarray:
    """Phases T^{n_from} x0, ..., T^{n_to} x0."""
    return base.orbit(x0, n_from, n_to)


def _as_complex(c) -> complex:
    if isinstance(c, (list, tuple)):
        return complex(float(c[0]), float(c[1]))
    return complex(c)


@dataclass(frozen=True)
class Potential:
    """Sampling function v on the phase space, optionally evaluated at x + iy.

    Torus forms (fourier, cosine, single_exponential, constant) read the
    rotation coordinate, the second coordinate of a skew-shift phase, or j/p
    for a periodic phase j.  ``iid_diagonal`` reads the stream of an iid base.
    """

    form: str
    coeffs: tuple = field(default=())
    lam: complex = 0.0
    c: complex = 0.0
    y: float = 0.0

    def __post_init__(self):
        if self.form not in FORMS:
            raise ConfigError(f"unknown potential form {self.form!r}; expected one of {FORMS}")
        if self.form == "fourier":
            coeffs = tuple(sorted((int(k), _as_complex(v)) for k, v in dict(self.coeffs).items()))
            if not coeffs:
                raise ConfigError("fourier potential needs at least one coefficient")
            object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "lam", _as_complex(self.lam))
        object.__setattr__(self, "c", _as_complex(self.c))
        object.__setattr__(self, "y", float(self.y))

    @classmethod
    def fourier(cls, coeffs: dict, y: float = 0.0) -> "Potential":
        return cls("fourier", coeffs=tuple(dict(coeffs).items()), y=y)

    @classmethod
    def cosine(cls, lam: float, y: float = 0.0) -> "Potential":
        return cls("cosine", lam=lam, y=y)

    @classmethod
    def single_exponential(cls, lam: complex, y: float = 0.0) -> "Potential":
        return cls("single_exponential", lam=lam, y=y)

    @classmethod
    def constant(cls, c: complex) -> "Potential":
        return cls("constant", c=c)

    @classmethod
    def iid_diagonal(cls) -> "Potential":
        return cls("iid_diagonal")

    def evaluate(self, x) -> np.ndarray:
        """v(x + iy) for torus coordinates x."""
        z = np.asarray(x, dtype=np.float64) + 1j * self.y
        if self.form == "cosine":
            return 2.0 * self.lam * np.cos(2 * np.pi * z)
        if self.form == "single_exponential":
            return self.lam * np.exp(2j * np.pi * z)
        if self.form == "constant":
            return np.full(np.shape(z), self.c, dtype=np.complex128)
        if self.form == "fourier":
            out = np.zeros(np.shape(z), dtype=np.complex128)
            for k, vk in self.coeffs:
                out += vk * np.exp(2j * np.pi * k * z)
            return out
        raise ConfigError("iid_diagonal potentials are read from an iid base, not a torus coordinate")

    def sample(self, base: BaseSystem | None, phases) -> np.ndarray:
        if self.form == "iid_diagonal":
            if base is None or base.kind != "iid":
                raise ConfigError("iid_diagonal potential requires an iid base system")
            u = iid_uniform(base.seed, phases)
            return (base.lam * (2.0 * u - 1.0)).astype(np.complex128)
        if base is not None and base.kind == "iid":
            raise ConfigError("an iid base system only supports the iid_diagonal potential")
        phases = np.asarray(phases)
        if base is None or base.kind == "rotation":
            x = phases
        elif base.kind == "skew_shift":
            x = phases[..., 1]
        else:
            x = phases / base.period
        return self.evaluate(x)

    def is_real_valued(self) -> bool:
        if self.form == "iid_diagonal":
            return True
        if self.form == "constant":
            return self.c.imag == 0.0
        if self.y != 0.0:
            return self.form == "constant"
        if self.form == "cosine":
            return self.lam.imag == 0.0
        if self.form == "single_exponential":
            return self.lam == 0
        table = dict(self.coeffs)
        return all(abs(table.get(-k, 0.0) - np.conj(v)) <= 1e-14 * max(1.0, abs(v))
                   for k, v in table.items())

    def sup_bound(self, base: BaseSystem | None = None) -> float:
        """Upper bound on |v| over the phase space."""
        s = 2 * np.pi * self.y
        if self.form == "cosine":
            return 2.0 * abs(self.lam) * math.cosh(s)
        if self.form == "single_exponential":
            return abs(self.lam) * math.exp(-s)
        if self.form == "constant":
            return abs(self.c)
        if self.form == "fourier":
            return float(sum(abs(v) * math.exp(-k * s) for k, v in self.coeffs))
        return float(base.lam) if base is not None else 1.0

    def describe(self) -> dict:
        def enc(z: complex):
            return z.real if z.imag == 0 else [z.real, z.imag]

        d: dict = {"form": self.form}
        if self.form == "fourier":
            d["coeffs"] = {str(k): enc(v) for k, v in self.coeffs}
        elif self.form in ("cosine", "single_exponential"):
            d["lam"] = enc(self.lam)
        elif self.form == "constant":
            d["c"] = enc(self.c)
        if self.y:
            d["y"] = self.y
        return d


def sample_potential(p: Potential, phase, base: BaseSystem | None = None):
    """v(phase + iy) at a single phase."""
    if base is not None and base.kind == "skew_shift":
        arr = np.asarray(phase, dtype=np.float64).reshape(1, 2)
    else:
        arr = np.atleast_1d(phase)
    return complex(p.sample(base, arr)[0])


def potential_sequence(base: BaseSystem, p: Potential, x0=None,
                       n_from: int = 0, n_to: int = 0) -> np.ndarray:
    """V(n) = v(T^n x0) for n = n_from..n_to."""
    return p.sample(base, base.orbit(x0, n_from, n_to))
