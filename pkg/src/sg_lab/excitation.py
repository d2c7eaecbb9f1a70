"""Regressor sequences with prescribed condition-number growth.

The designer keeps every regressor on a coordinate axis, so the Fisher matrix
S_n = sum phi_i phi_i^T stays diagonal and kappa(S_n) is the ratio of the
largest to the smallest directional energy. Each step feeds the direction
whose energy lags its target furthest; the targets split the running energy
r_n - 1 into a strong share and m - 1 weak shares of

    (r_n - 1) * beta / ((m - 1) * (log r_n)**alpha)

each, which gives kappa(S_n) ~ (log r_n)**alpha / beta.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ConfigError
from .spectral import eig_extremes, PD_RTOL

#: round-robin allocation until r_n reaches this value
FALLBACK_R = math.exp(2.0)


@dataclass
class ExcitationSpec:
    dim: int
    alpha: float
    horizon: int
    step_energy: float = 1.0
    beta: float = 0.5
    mode: Literal["direct-regressor", "input-driven"] = "direct-regressor"

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dim must be >= 1", "excitation.dim")
        if not self.alpha >= 0:
            raise ConfigError("alpha must be >= 0", "excitation.alpha")
        if self.horizon < 100:
            raise ConfigError("horizon must be >= 100", "horizon")
        if not self.step_energy > 0:
            raise ConfigError("step_energy must be > 0", "excitation.step_energy")
        if not 0 < self.beta < 1:
            raise ConfigError("beta must lie in (0, 1)", "excitation.beta")
        if self.mode != "direct-regressor":
            raise ConfigError("only direct-regressor mode is implemented", "excitation.mode")


@dataclass
class DesignAudit:
    """Steps that used the round-robin fallback instead of the target allocator."""

    fallback_steps: list = field(default_factory=list)
    last_fallback_r: float = 0.0


def _allocate(spec: ExcitationSpec, rng: np.random.Generator, audit: DesignAudit | None):
    m, s = spec.dim, spec.step_energy
    phis = np.zeros((spec.horizon + 1, m))
    amp = math.sqrt(s)
    signs = rng.choice((-1.0, 1.0), size=spec.horizon)
    energy = [0.0] * m
    weak_share = spec.beta / (m - 1) if m > 1 else 0.0
    for n in range(1, spec.horizon + 1):
        r = 1.0 + n * s
        if m == 1:
            j = 0
        elif r < FALLBACK_R:
            j = (n - 1) % m
            if audit is not None:
                audit.fallback_steps.append(n)
                audit.last_fallback_r = r
        else:
            budget = r - 1.0
            weak = budget * weak_share / math.log(r) ** spec.alpha
            j = 0
            best = budget - (m - 1) * weak - energy[0]
            for k in range(1, m):
                gap = weak - energy[k]
                if gap > best:
                    best, j = gap, k
        energy[j] += s
        phis[n, j] = signs[n - 1] * amp
    return phis


def design_regressors(spec: ExcitationSpec, rng: np.random.Generator, audit: DesignAudit | None = None) -> np.ndarray:
    """Regressors phi_0..phi_N as rows; phi_0 = 0 and ||phi_n||^2 = step_energy for n >= 1."""
    return _allocate(spec, rng, audit)


def adversarial_regressors(spec: ExcitationSpec, rng: np.random.Generator, audit: DesignAudit | None = None) -> np.ndarray:
    """Same allocator driven at a super-critical exponent (alpha > 1)."""
    if not spec.alpha > 1:
        raise ConfigError("adversarial design needs alpha > 1", "excitation.alpha")
    return _allocate(spec, rng, audit)


@dataclass
class KappaProfile:
    alpha: float
    n: np.ndarray
    r: np.ndarray
    kappa: np.ndarray
    ratio: np.ndarray

    def max_ratio(self, n_min: int = 0) -> float:
        sel = (self.n >= n_min) & np.isfinite(self.ratio)
        return float(np.max(self.ratio[sel]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["n", "r_n", "kappa", "log_r_pow_alpha", "ratio"])
            for n, r, k, q in zip(self.n, self.r, self.kappa, self.ratio):
                out.writerow([int(n), repr(float(r)), repr(float(k)),
                              repr(float(math.log(r) ** self.alpha)), repr(float(q))])


def kappa_of(s: np.ndarray) -> float:
    """Condition number, or inf for a singular Fisher matrix."""
    lo, hi = eig_extremes(s)
    if hi <= 0.0 or lo <= PD_RTOL * hi:
        return math.inf
    return hi / lo


def measure_kappa_profile(phis, stride: int = 1, alpha: float = 0.0, r0: float = 1.0) -> KappaProfile:
    """kappa(S_n) and kappa / (log r_n)**alpha every ``stride`` steps.

    ``phis`` holds phi_1, phi_2, ... (no initial regressor): S_n sums the
    first n rows and r_n = r0 + sum of their squared norms.
    """
    phis = np.asarray(phis, dtype=float)
    if phis.ndim == 1:
        phis = phis[:, None]
    if len(phis) == 0:
        raise ValueError("empty regressor sequence")
    if stride < 1:
        raise ConfigError("stride must be positive", "stride")
    m = phis.shape[1]
    sample = list(range(stride, len(phis) + 1, stride))
    if not sample or sample[-1] != len(phis):
        sample.append(len(phis))
    s = np.zeros((m, m))
    r = r0
    prev = 0
    ns, rs, ks, qs = [], [], [], []
    for n in sample:
        block = phis[prev:n]
        s += block.T @ block
        r += float(np.sum(block * block))
        prev = n
        k = kappa_of(s)
        lr = math.log(r)
        q = k / lr**alpha if lr > 0 else math.inf
        ns.append(n)
        rs.append(r)
        ks.append(k)
        qs.append(q)
    return KappaProfile(alpha, np.array(ns), np.array(rs), np.array(ks), np.array(qs))
