"""Ground-truth ARMAX systems, their simulation, and the noise processes.

The system is

    y_n + A_1 y_{n-1} + ... + A_p y_{n-p} = B_1 u_{n-1} + ... + B_q u_{n-q} + eps_n
    eps_n = w_n + C_1 w_{n-1} + ... + C_r w_{n-r}

with every signal zero before time 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import ConfigError, DimensionError
from .spectral import eig_extremes

NoiseKind = Literal["gaussian", "bounded-uniform", "zero"]


def _matrices(mats, rows, cols, name):
    out = []
    for i, m in enumerate(mats):
        a = np.atleast_2d(np.asarray(m, dtype=float))
        if a.shape != (rows, cols):
            raise DimensionError(f"{name}[{i}] has shape {a.shape}, expected {(rows, cols)}")
        if not np.all(np.isfinite(a)):
            raise DimensionError(f"{name}[{i}] has non-finite entries")
        out.append(a)
    return out


@dataclass(frozen=True)
class ArmaxSystem:
    d: int
    l: int
    A: tuple = ()
    B: tuple = ()
    C: tuple = ()

    def __post_init__(self):
        if self.d < 1 or self.l < 0:
            raise DimensionError(f"bad dimensions d={self.d}, l={self.l}")
        object.__setattr__(self, "A", tuple(_matrices(self.A, self.d, self.d, "A")))
        object.__setattr__(self, "B", tuple(_matrices(self.B, self.d, self.l, "B")))
        object.__setattr__(self, "C", tuple(_matrices(self.C, self.d, self.d, "C")))
        if self.p == 0 and self.r == 0 and self.q < 1:
            raise DimensionError("a system with p = r = 0 needs q >= 1")

    @property
    def p(self) -> int:
        return len(self.A)

    @property
    def q(self) -> int:
        return len(self.B)

    @property
    def r(self) -> int:
        return len(self.C)

    @property
    def regressor_dim(self) -> int:
        return self.d * self.p + self.l * self.q + self.d * self.r

    def theta(self) -> np.ndarray:
        """True parameter matrix of shape (dp + lq + dr, d).

        Its transpose is ``[-A_1 ... -A_p, B_1 ... B_q, C_1 ... C_r]``.
        """
        blocks = [-a for a in self.A] + list(self.B) + list(self.C)
        return np.hstack(blocks).T.copy()

    @classmethod
    def linear_regression(cls, theta) -> "ArmaxSystem":
        """p = r = 0, q = 1 system whose regressor is the input itself."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        if theta.shape[0] == 1 and theta.shape[1] > 1:
            theta = theta.T
        m, d = theta.shape
        return cls(d=d, l=m, B=(theta.T,))


@dataclass
class NoiseModel:
    """Martingale-difference noise with conditional second moment c0 * r_prev**epsilon."""

    c0: float = 1.0
    epsilon: float = 0.0
    kind: NoiseKind = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "bounded-uniform", "zero"):
            raise ConfigError(f"unknown noise kind {self.kind!r}", "noise.kind")
        if not self.c0 > 0:
            raise ConfigError("c0 must be positive", "noise.c0")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]", "noise.epsilon")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def generate_noise(nm: NoiseModel, r_prev: float, rng: np.random.Generator, d: int = 1) -> np.ndarray:
    """One draw of w_n given r_{n-1}; total second moment is exactly c0 * r_prev**epsilon."""
    if nm.kind == "zero":
        return np.zeros(d)
    var = nm.c0 * float(r_prev) ** nm.epsilon / d
    if nm.kind == "gaussian":
        return rng.normal(0.0, np.sqrt(var), size=d)
    half_width = np.sqrt(3.0 * var)
    return rng.uniform(-half_width, half_width, size=d)


@dataclass
class SimulationTrace:
    """Signals from time 0 on.

    ``y`` and ``w`` hold times 0..n; ``u`` holds the inputs already applied,
    times 0..n-1 (u_n is supplied together with w_{n+1} on the next step).
    """

    d: int
    l: int
    y: list = field(default_factory=list)
    u: list = field(default_factory=list)
    w: list = field(default_factory=list)
    eps: list = field(default_factory=list)

    @classmethod
    def start(cls, sys: ArmaxSystem, y0=None, w0=None) -> "SimulationTrace":
        tr = cls(d=sys.d, l=sys.l)
        y0 = np.zeros(sys.d) if y0 is None else np.asarray(y0, dtype=float).reshape(sys.d)
        w0 = np.zeros(sys.d) if w0 is None else np.asarray(w0, dtype=float).reshape(sys.d)
        tr.y.append(y0)
        tr.w.append(w0)
        tr.eps.append(w0.copy())
        return tr

    @property
    def n(self) -> int:
        return len(self.y) - 1

    def _lag(self, seq, n, zeros):
        return seq[n] if n >= 0 else zeros

    def to_csv(self, path) -> None:
        cols = (["n"] + [f"y{i}" for i in range(self.d)] + [f"u{i}" for i in range(self.l)]
                + [f"w{i}" for i in range(self.d)])
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(cols)
            for n in range(len(self.y)):
                u = [repr(float(v)) for v in self.u[n]] if n < len(self.u) else [""] * self.l
                out.writerow([n] + [repr(float(v)) for v in self.y[n]] + u
                             + [repr(float(v)) for v in self.w[n]])


def simulate_step(sys: ArmaxSystem, trace: SimulationTrace, u_next, w_next) -> np.ndarray:
    """Apply input u_n and noise w_{n+1}; append and return y_{n+1}."""
    u_next = np.asarray(u_next, dtype=float).reshape(-1)
    w_next = np.asarray(w_next, dtype=float).reshape(-1)
    if u_next.shape != (sys.l,) or w_next.shape != (sys.d,):
        raise DimensionError(f"input shape {u_next.shape} / noise shape {w_next.shape} "
                             f"do not match l={sys.l}, d={sys.d}")
    if (trace.d, trace.l) != (sys.d, sys.l):
        raise DimensionError("trace dimensions do not match the system")
    trace.u.append(u_next)
    n1 = trace.n + 1
    zd, zl = np.zeros(sys.d), np.zeros(sys.l)

    eps = w_next.copy()
    for k, ck in enumerate(sys.C, start=1):
        eps += ck @ trace._lag(trace.w, n1 - k, zd)
    y = eps.copy()
    for i, ai in enumerate(sys.A, start=1):
        y -= ai @ trace._lag(trace.y, n1 - i, zd)
    for j, bj in enumerate(sys.B, start=1):
        y += bj @ trace._lag(trace.u, n1 - j, zl)

    trace.y.append(y)
    trace.w.append(w_next)
    trace.eps.append(eps)
    return y


@dataclass(frozen=True)
class SprReport:
    is_spr: bool
    min_real_eig: float
    argmin_freq: float


def check_spr(sys: ArmaxSystem, grid_size: int = 4096) -> SprReport:
    """Grid test that C(z) - I/2 is strictly positive real on the unit circle.

    C is a polynomial, so it has no poles to flag; the test reduces to the
    minimum over the grid of lambda_min of the Hermitian part of C(e^{iw}) - I/2.
    """
    if grid_size < 8:
        raise ConfigError("grid_size must be at least 8", "grid_size")
    if sys.r == 0:
        return SprReport(True, float("inf"), 0.0)
    omegas = 2.0 * np.pi * np.arange(grid_size) / grid_size
    best, best_w = np.inf, 0.0
    for w in omegas:
        z = np.exp(1j * w)
        h = np.eye(sys.d, dtype=complex) * 0.5
        for k, ck in enumerate(sys.C, start=1):
            h = h + ck * z**k
        herm = 0.5 * (h + h.conj().T)
        # the Hermitian part of a complex matrix as a real symmetric 2d x 2d block
        block = np.block([[herm.real, -herm.imag], [herm.imag, herm.real]])
        lo = eig_extremes(block)[0]
        if lo < best:
            best, best_w = lo, float(w)
    return SprReport(bool(best > 0.0), float(best), best_w)


def filtered_noise_residual(sys: ArmaxSystem, trace: SimulationTrace) -> float:
    """max_n || eps_n - (w_n + sum_k C_k w_{n-k}) ||, recomputed from the stored w."""
    w = np.asarray(trace.w)
    worst = 0.0
    for n in range(len(trace.eps)):
        e = w[n].copy()
        for k, ck in enumerate(sys.C, start=1):
            if n - k >= 0:
                e = e + ck @ w[n - k]
        worst = max(worst, float(np.max(np.abs(trace.eps[n] - e))))
    return worst
