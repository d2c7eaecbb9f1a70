"""Stochastic gradient identification.

    theta_{n+1} = theta_n + phi_n / r_n * (y_{n+1}^T - phi_n^T theta_n)
    r_n = 1 + sum_{i=1..n} ||phi_i||^2,   r_0 = 1

The regressor stacks the latest p outputs, q inputs and r estimated
residuals ``w_hat_n = y_n - theta_{n-1}^T phi_{n-1}``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DataError, DimensionError, InsufficientData
from .spectral import spectral_norm


@dataclass
class EstimatorState:
    d: int
    l: int
    p: int
    q: int
    s: int  # order of the noise polynomial C(z)
    theta: np.ndarray
    phi: np.ndarray
    r: float = 1.0
    n: int = 0
    y_ring: deque = field(default_factory=deque)
    u_ring: deque = field(default_factory=deque)
    residual_ring: deque = field(default_factory=deque)
    last_residual: np.ndarray | None = None
    _r_comp: float = 0.0

    @property
    def m(self) -> int:
        return self.d * self.p + self.l * self.q + self.d * self.s

    @classmethod
    def initial(cls, d=1, l=1, p=0, q=1, s=0, theta0=None, phi0=None, r0=1.0) -> "EstimatorState":
        m = d * p + l * q + d * s
        theta = np.zeros((m, d)) if theta0 is None else np.array(theta0, dtype=float).reshape(m, d)
        phi = np.zeros(m) if phi0 is None else np.array(phi0, dtype=float).reshape(m)
        return cls(
            d=d, l=l, p=p, q=q, s=s, theta=theta, phi=phi, r=float(r0),
            y_ring=deque([np.zeros(d) for _ in range(p)], maxlen=p),
            u_ring=deque([np.zeros(l) for _ in range(q)], maxlen=q),
            residual_ring=deque([np.zeros(d) for _ in range(s)], maxlen=s),
        )

    @classmethod
    def for_system(cls, sys, **kw) -> "EstimatorState":
        return cls.initial(d=sys.d, l=sys.l, p=sys.p, q=sys.q, s=sys.r, **kw)


def form_regressor(state: EstimatorState) -> np.ndarray:
    """phi_n = [y_n .. y_{n-p+1}, u_n .. u_{n-q+1}, w_hat_n .. w_hat_{n-s+1}]."""
    parts = list(state.y_ring) + list(state.u_ring) + list(state.residual_ring)
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)


def sg_update(state: EstimatorState, y_next, u_next=None) -> EstimatorState:
    """Advance the estimator by one step, in place.

    ``u_next`` is the input at time n+1; it is required when q >= 1 since it
    enters phi_{n+1}.
    """
    y_next = np.asarray(y_next, dtype=float).reshape(-1)
    if y_next.shape != (state.d,):
        raise DimensionError(f"y has shape {y_next.shape}, expected ({state.d},)")
    if not np.all(np.isfinite(y_next)):
        raise DataError(f"non-finite observation at step {state.n + 1}")
    if state.q:
        if u_next is None:
            raise DataError("u_next is required when q >= 1")
        u_next = np.asarray(u_next, dtype=float).reshape(-1)
        if u_next.shape != (state.l,):
            raise DimensionError(f"u has shape {u_next.shape}, expected ({state.l},)")

    residual = y_next - state.theta.T @ state.phi
    state.theta = state.theta + np.outer(state.phi, residual) / state.r
    state.last_residual = residual

    if state.p:
        state.y_ring.appendleft(y_next)
    if state.q:
        state.u_ring.appendleft(u_next)
    if state.s:
        state.residual_ring.appendleft(residual)
    state.n += 1
    state.phi = form_regressor(state)

    # Kahan summation keeps r exact over many orders of magnitude
    incr = float(state.phi @ state.phi) - state._r_comp
    total = state.r + incr
    state._r_comp = (total - state.r) - incr
    state.r = total
    return state


def estimation_error(state_or_theta, truth) -> float:
    """Frobenius norm of theta_n - theta."""
    est = state_or_theta.theta if isinstance(state_or_theta, EstimatorState) else state_or_theta
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise DimensionError(f"estimate shape {est.shape} != truth shape {truth.shape}")
    return float(np.sqrt(np.sum((est - truth) ** 2)))


@njit(cache=True)
def _regression_kernel(phis, ys, theta0, r0, theta_true, stride):
    n_steps = ys.shape[0]
    m, d = theta0.shape
    theta = theta0.copy()
    rs = np.empty(n_steps + 1)
    rs[0] = r0
    n_rec = n_steps // stride + 1
    errs = np.empty(n_rec)
    res_norms = np.empty(n_rec)
    r = r0
    comp = 0.0
    k = 0
    for n in range(n_steps):
        if n % stride == 0:
            acc = 0.0
            for i in range(m):
                for j in range(d):
                    diff = theta[i, j] - theta_true[i, j]
                    acc += diff * diff
            errs[k] = math.sqrt(acc)
            k += 1
        rn = rs[n]
        res2 = 0.0
        for j in range(d):
            pred = 0.0
            for i in range(m):
                pred += phis[n, i] * theta[i, j]
            e = ys[n, j] - pred
            res2 += e * e
            for i in range(m):
                theta[i, j] += phis[n, i] * e / rn
        if n % stride == 0:
            res_norms[k - 1] = math.sqrt(res2)
        energy = 0.0
        for i in range(m):
            energy += phis[n + 1, i] * phis[n + 1, i]
        incr = energy - comp
        total = r + incr
        comp = (total - r) - incr
        r = total
        rs[n + 1] = r
    return theta, rs, errs[:k], res_norms[:k]


@dataclass
class RegressionRun:
    theta: np.ndarray
    rs: np.ndarray
    record_n: np.ndarray
    theta_err: np.ndarray
    residual_norm: np.ndarray


def run_regression(phis, ys, theta_true, theta0=None, r0=1.0, stride=1) -> RegressionRun:
    """SG over a prescribed regressor sequence (the p = r = 0, q = 1 layout).

    ``phis`` has rows phi_0..phi_N and ``ys`` rows y_1..y_N. Recorded errors
    are ||theta_n - theta|| at n = 0, stride, 2*stride, ... below N; the
    residual recorded at n is y_{n+1} - phi_n^T theta_n.
    """
    phis = np.ascontiguousarray(phis, dtype=float)
    ys = np.ascontiguousarray(np.asarray(ys, dtype=float).reshape(len(phis) - 1, -1))
    theta_true = np.ascontiguousarray(np.asarray(theta_true, dtype=float).reshape(phis.shape[1], -1))
    theta0 = np.zeros_like(theta_true) if theta0 is None else np.array(theta0, dtype=float).reshape(theta_true.shape)
    if not np.all(np.isfinite(ys)):
        raise DataError("non-finite observations")
    theta, rs, errs, res = _regression_kernel(phis, ys, theta0, float(r0), theta_true, int(stride))
    return RegressionRun(theta, rs, np.arange(len(errs)) * int(stride), errs, res)


@dataclass
class ConditionADiag:
    partial_sum: np.ndarray
    tail_n: np.ndarray
    tail_norm: np.ndarray
    delta_fit: float

    @property
    def tail_norm_series(self):
        return list(zip(self.tail_n.tolist(), self.tail_norm.tolist()))


def condition_a_diagnostic(phis, rs, eps, stride: int = 1) -> ConditionADiag:
    """Weighted noise sums sum_{i<n} phi_i eps_{i+1}^T / r_i and their tail decay.

    ``phis``, ``rs`` and ``eps`` are time-indexed from 0 (eps[n] = eps_n). The
    limit S is estimated by the final partial sum; delta is fitted by least
    squares of log tail-norm on log r_n over the last half of the run.
    """
    phis = np.asarray(phis, dtype=float)
    rs = np.asarray(rs, dtype=float)
    eps = np.asarray(eps, dtype=float).reshape(len(rs), -1)
    n_total = len(rs) - 1
    if n_total < 100:
        raise InsufficientData(f"need at least 100 steps, got {n_total}")
    terms = phis[:-1, :, None] * eps[1:, None, :] / rs[:-1, None, None]
    partial = np.cumsum(terms, axis=0)  # partial[n-1] = sum_{i<n}
    final = partial[-1]
    idx = np.arange(1, n_total + 1, stride)
    diffs = final[None] - partial[idx - 1]
    if diffs.shape[2] == 1:
        tails = np.sqrt(np.sum(diffs**2, axis=(1, 2)))
    else:
        tails = np.array([spectral_norm(dm) for dm in diffs])

    half = idx >= n_total // 2
    ok = half & (tails > 0) & (idx < n_total)
    if np.count_nonzero(ok) >= 2:
        slope = np.polyfit(np.log(rs[idx[ok]]), np.log(tails[ok]), 1)[0]
        delta = float(-slope)
    else:
        delta = float("nan")
    return ConditionADiag(final, idx, tails, delta)
