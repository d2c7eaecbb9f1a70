"""Norm bounds for products of rank-one contractions.

For rank-one A_j = phi_j phi_j^T with 0 <= A_j <= I and weights mu_j >= 0,

    ||Phi(N, k)||^2 <= 1 - lambda_min(S) / (sqrt(max mu_j) + sqrt(sum mu_j B_jk))^2

where S = sum_{j=k}^{N-1} mu_j A_j and B_jk = sum_{l=k}^{j-1} (phi_j^T phi_l)^2.
Intervals are half-open, [start, end), throughout. Functions taking
``phis_normalized`` expect rows phi_j with ||phi_j|| <= 1 (for SG runs,
phi_j / sqrt(r_j)); ``phis_raw`` means the unnormalized regressors together
with their r sequence.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Literal, NamedTuple

import numpy as np

from .errors import DegenerateWeights, DomainError
from .schedule import BlockSchedule, log_factorial
from .spectral import eig_extremes, spectral_norm
from .transition import product_oracle

_CHUNK = 1 << 15


@dataclass
class WeightScheme:
    kind: Literal["unit", "r-weighted", "custom"]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("weights must be finite and nonnegative")

    @classmethod
    def unit(cls, n: int) -> "WeightScheme":
        return cls("unit", np.ones(n))

    @classmethod
    def r_weighted(cls, rs) -> "WeightScheme":
        return cls("r-weighted", np.asarray(rs, dtype=float))

    @classmethod
    def custom(cls, values) -> "WeightScheme":
        return cls("custom", values)


def normalize(phis, rs) -> np.ndarray:
    phis = np.asarray(phis, dtype=float)
    if phis.ndim == 1:
        phis = phis[:, None]
    return phis / np.sqrt(np.asarray(rs, dtype=float))[:, None]


def _phis(phis) -> np.ndarray:
    phis = np.asarray(phis, dtype=float)
    return phis[:, None] if phis.ndim == 1 else phis


def _check_range(k, i, n):
    if not 0 <= k <= i <= n:
        raise IndexError(f"need 0 <= {k} <= {i} <= {n}")


def compute_Bjk(phis_normalized, j: int, k: int) -> float:
    """sum_{l=k}^{j-1} (phi_j^T phi_l)^2."""
    phis = _phis(phis_normalized)
    _check_range(k, j, len(phis) - 1)
    if j == k:
        return 0.0
    dots = phis[k:j] @ phis[j]
    return float(dots @ dots)


def block_B(phis_normalized, k: int, i: int) -> np.ndarray:
    """B_jk for every j in [k, i), via B_jk = phi_j^T (sum_{l<j} phi_l phi_l^T) phi_j."""
    phis = _phis(phis_normalized)
    _check_range(k, i, len(phis))
    m = phis.shape[1]
    out = np.empty(i - k)
    acc = np.zeros((m, m))
    for a in range(k, i, _CHUNK):
        b = min(a + _CHUNK, i)
        blk = phis[a:b]
        outer = blk[:, :, None] * blk[:, None, :]
        incl = np.cumsum(outer, axis=0) + acc
        excl = incl - outer
        out[a - k:b - k] = np.einsum("ja,jab,jb->j", blk, excl, blk)
        acc = incl[-1]
    return np.maximum(out, 0.0)


def weighted_sum_S(phis_normalized, weights: WeightScheme, k: int, i: int) -> np.ndarray:
    """S_ik = sum_{j=k}^{i-1} mu_j phi_j phi_j^T."""
    phis = _phis(phis_normalized)
    mu = weights.values
    if len(mu) < len(phis):
        raise ValueError(f"{len(mu)} weights for {len(phis)} regressors")
    _check_range(k, i, len(phis))
    blk = phis[k:i]
    return (blk * mu[k:i, None]).T @ blk


@dataclass
class BlockBoundReport:
    k_start: int
    k_end: int
    lambda_min_S: float
    max_mu: float
    sum_muB: float
    bound_value: float
    exact_norm_sq: float
    criterion_term: float

    @property
    def holds(self) -> bool:
        return self.exact_norm_sq <= self.bound_value + 1e-9


def _block_aggregates(phis, mu, k, end):
    s = (phis[k:end] * mu[k:end, None]).T @ phis[k:end]
    lam = eig_extremes(s)[0] if end > k else 0.0
    max_mu = float(np.max(mu[k:end])) if end > k else 0.0
    sum_mub = float(mu[k:end] @ block_B(phis, k, end)) if end > k else 0.0
    return lam, max_mu, sum_mub


def theorem_bound(phis_normalized, weights: WeightScheme, k: int, N: int, exact_norm_sq: float | None = None) -> BlockBoundReport:
    """Evaluate the norm bound on [k, N) next to the exact ||Phi(N, k)||^2.

    The exact value comes from :func:`product_oracle` unless supplied.
    """
    phis = _phis(phis_normalized)
    _check_range(k, N, len(phis))
    lam, max_mu, sum_mub = _block_aggregates(phis, weights.values, k, N)
    den = (math.sqrt(max_mu) + math.sqrt(sum_mub)) ** 2
    if den == 0.0:
        warnings.warn(f"all weights vanish on [{k}, {N}); bound is 1", DegenerateWeights, stacklevel=2)
        term = 0.0
    else:
        term = max(lam, 0.0) / den
    if exact_norm_sq is None:
        exact_norm_sq = spectral_norm(product_oracle(phis, np.ones(len(phis)), k, N)) ** 2
    return BlockBoundReport(k, N, float(lam), max_mu, sum_mub, 1.0 - term, float(exact_norm_sq), term)


@dataclass
class Certificate:
    """Materialized quantities behind the bound on one interval.

    ``C`` holds the correlations C_jl = phi_j^T phi_l (l < j). The recursion
    x_{j+1} = (I - A_j) x_j gives v = (I + C) u.
    """

    u: np.ndarray
    v: np.ndarray
    C: np.ndarray
    Lambda: np.ndarray  # diagonal entries sqrt(mu_j)
    quad_form: float  # x_k^T S x_k
    energy_drop: float  # ||x_k||^2 - ||x_i||^2
    norm_LC: float  # ||Lambda (I + C)||
    norm_bound: float  # sqrt(max mu) + sqrt(sum mu_j B_jk)

    @property
    def identity_residual(self) -> float:
        return float(np.linalg.norm(self.v - (self.u + self.C @ self.u)))

    @property
    def lambda_v_sq(self) -> float:
        return float(np.sum((self.Lambda * self.v) ** 2))

    def checks(self, tol: float = 1e-10) -> dict:
        u_norm = float(np.linalg.norm(self.u))
        return {
            "identity": self.identity_residual <= tol * (1.0 + u_norm),
            "quadratic_form": abs(self.quad_form - self.lambda_v_sq) <= tol * (1.0 + abs(self.quad_form)),
            "norm_bound": self.norm_LC <= self.norm_bound + tol * (1.0 + self.norm_bound),
            "energy": float(self.u @ self.u) <= self.energy_drop + tol * (1.0 + abs(self.energy_drop)),
        }


def certificate(phis_normalized, weights: WeightScheme, probe, k: int, i: int) -> Certificate:
    phis = _phis(phis_normalized)
    _check_range(k, i, len(phis))
    mu = weights.values[k:i]
    blk = phis[k:i]
    xk = np.asarray(probe, dtype=float).reshape(phis.shape[1])
    x = xk.copy()
    u = np.empty(i - k)
    for idx, ph in enumerate(blk):
        u[idx] = ph @ x
        x = x - ph * u[idx]
    v = blk @ xk
    C = np.tril(blk @ blk.T, -1)
    lam = np.sqrt(mu)
    s = (blk * mu[:, None]).T @ blk
    norm_lc = spectral_norm(lam[:, None] * (np.eye(i - k) + C)) if i > k else 0.0
    sum_mub = float(np.sum(mu * np.sum(C**2, axis=1)))
    bound = (math.sqrt(float(np.max(mu))) if i > k else 0.0) + math.sqrt(sum_mub)
    return Certificate(u, v, C, lam, float(xk @ s @ xk), float(xk @ xk - x @ x), norm_lc, bound)


class IntegralCheck(NamedTuple):
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-9 * (1.0 + abs(self.rhs))


def integral_estimate_check(phis_raw, rs, k: int, i: int) -> IntegralCheck:
    """Exact sum_{j=k}^{i-1} r_j B_jk against its closed-form estimate.

    rhs = r_{i-1} (log r_{i-1} - log r_{k-1}) - (r_{i-1} - r_{k-1}); needs k >= 1
    and r_l = r_{l-1} + ||phi_l||^2 on the interval.
    """
    rs = np.asarray(rs, dtype=float)
    phis = normalize(phis_raw, rs)
    if k < 1:
        raise DomainError("the estimate needs r_{k-1}, so k >= 1")
    _check_range(k, i, len(phis))
    if i == k:
        return IntegralCheck(0.0, 0.0)
    lhs = float(rs[k:i] @ block_B(phis, k, i))
    hi, lo = rs[i - 1], rs[k - 1]
    rhs = float(hi * (math.log(hi) - math.log(lo)) - (hi - lo))
    return IntegralCheck(lhs, rhs)


def _r_before(rs, t: int) -> float:
    # r_{t-1}, with r_{-1} read as r_0 (phi_0 adds nothing to r)
    return float(rs[max(t - 1, 0)])


def dk_term(rs, t_prev: int, t_cur: int) -> float:
    """D_k = r_{t_k-1} (log r_{t_k-1} - log r_{t_{k-1}-1}) + r_{t_{k-1}-1}."""
    if not t_prev < t_cur:
        raise DomainError(f"need t_prev < t_cur, got {t_prev}, {t_cur}")
    hi, lo = _r_before(rs, t_cur), _r_before(rs, t_prev)
    if hi < 1 or lo < 1:
        raise DomainError(f"r values must be >= 1, got {lo}, {hi}")
    return hi * (math.log(hi) - math.log(lo)) + lo


@dataclass
class CriterionRow:
    k: int
    start: int
    end: int
    lambda_min: float
    denominator: float
    term: float
    partial_sum: float


def criterion_partial_sums(phis_raw, rs, schedule: BlockSchedule,
                           variant: Literal["general-mu", "dk"] = "general-mu",
                           weights: WeightScheme | None = None) -> list:
    """Per-block terms of the divergence criterion and their running sums.

    ``general-mu`` divides lambda_min(S) by (sqrt(max mu) + sqrt(sum mu B))^2
    with normalized regressors (r-weighted unless ``weights`` is given, in
    which case S is the weighted sum of normalized outer products); ``dk``
    divides lambda_min of the raw block sum by D_k. Terms are clipped at 0.
    """
    rs = np.asarray(rs, dtype=float)
    raw = _phis(phis_raw)
    phis = normalize(raw, rs)
    mu = (weights or WeightScheme.r_weighted(rs)).values
    rows = []
    total = 0.0
    for k, a, b in schedule.blocks():
        if b <= a:
            warnings.warn(f"empty block k={k}", RuntimeWarning, stacklevel=2)
            rows.append(CriterionRow(k, a, b, 0.0, math.nan, 0.0, total))
            continue
        if variant == "dk":
            lam = eig_extremes(raw[a:b].T @ raw[a:b])[0]
            den = dk_term(rs, a, b)
        elif variant == "general-mu":
            lam, max_mu, sum_mub = _block_aggregates(phis, mu, a, b)
            den = (math.sqrt(max_mu) + math.sqrt(sum_mub)) ** 2
        else:
            raise ValueError(f"unknown variant {variant!r}")
        term = max(lam, 0.0) / den if den > 0 else 0.0
        total += term
        rows.append(CriterionRow(k, a, b, float(lam), float(den), float(term), float(total)))
    return rows


def summand_rate_fit(rows, alpha: float, k_min: int = 5) -> tuple[float, float]:
    """min and max over k >= k_min of term_k * k**alpha * (log k)**(1 + alpha)."""
    scaled = [row.term * row.k**alpha * math.log(row.k) ** (1 + alpha) for row in rows if row.k >= k_min]
    if not scaled:
        return math.nan, math.nan
    return min(scaled), max(scaled)


@dataclass
class LedgerRow:
    """One inequality ``lhs <= rhs``; slack = rhs - lhs."""

    name: str
    lhs: float
    rhs: float
    block: int = 0
    applicable: bool = True
    tol: float = 1e-9

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        if not self.applicable:
            return True
        return self.lhs <= self.rhs + self.tol * (1.0 + abs(self.rhs) + abs(self.lhs))

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(slack=self.slack, passed=self.passed)
        return d


def weyl_split_check(S_full_end, S_full_start, kappa_bound_M: float, alpha: float, r_end: float, dim: int, block: int = 0) -> list:
    """Evaluate each step of the eigenvalue split for one block.

    The trace lower bound on lambda_min(end) is only claimed when
    kappa(end) <= M (log r_end)^alpha; otherwise that row is marked not
    applicable.
    """
    end = np.asarray(S_full_end, dtype=float)
    start = np.asarray(S_full_start, dtype=float)
    lo_end, hi_end = eig_extremes(end)
    lo_start, hi_start = eig_extremes(start)
    lo_diff = eig_extremes(end - start)[0]
    envelope = kappa_bound_M * math.log(r_end) ** alpha
    kappa_end = hi_end / lo_end if lo_end > 0 else math.inf
    trace_floor = float(np.trace(end)) / (dim * envelope)
    respects = kappa_end <= envelope * (1 + 1e-12)
    return [
        LedgerRow("weyl", lo_end - hi_start, lo_diff, block),
        LedgerRow("kappa_envelope", kappa_end, envelope, block),
        LedgerRow("trace_lower", trace_floor, lo_end, block, applicable=respects),
        LedgerRow("trace_upper", hi_start, float(np.trace(start)), block),
        LedgerRow("combined_lower", trace_floor - float(np.trace(start)), lo_diff, block, applicable=respects),
    ]


def _cumulative_at(phis_raw, points):
    """S_n = sum_{i=1}^{n} phi_i phi_i^T at each n in ``points`` (sorted)."""
    m = phis_raw.shape[1]
    out = {}
    s = np.zeros((m, m))
    prev = 1
    for n in sorted(set(points)):
        if n >= prev:
            blk = phis_raw[prev:n + 1]
            s = s + blk.T @ blk
            prev = n + 1
        out[n] = s.copy()
    return out


def envelope_constant(phis_raw, rs, alpha: float, schedule: BlockSchedule, profile=None, k_min: int = 3) -> float:
    """M = max of kappa(S_n) / (log r_n)^alpha over the profile and the block ends t_k - 1."""
    raw = _phis(phis_raw)
    ends = [b - 1 for k, a, b in schedule.blocks(k_min) if b > a]
    cum = _cumulative_at(raw, ends)
    ratios = []
    for n in ends:
        lo, hi = eig_extremes(cum[n])
        lr = math.log(rs[n])
        if lo > 0 and lr > 0:
            ratios.append(hi / lo / lr**alpha)
    if profile is not None:
        ratios.extend(float(q) for q in profile.ratio[np.isfinite(profile.ratio)])
    return max(ratios) if ratios else math.inf


def main_theorem_ledger(phis_raw, rs, schedule: BlockSchedule, alpha: float, M: float, k_min: int = 3) -> list:
    """Ledger rows for every block k >= k_min: the eigenvalue split, the
    factorial growth of r along the schedule, and the upper bound on D_k."""
    raw = _phis(phis_raw)
    rs = np.asarray(rs, dtype=float)
    m = raw.shape[1]
    # an empty block (r jumped past two factorials in one step) has nothing to check
    blocks = [blk for blk in schedule.blocks(k_min) if blk[2] > blk[1]]
    pts = [b - 1 for _, a, b in blocks] + [max(a - 1, 0) for _, a, b in blocks]
    cum = _cumulative_at(raw, pts)
    lc = schedule.l_const
    rows = []
    for k, a, b in blocks:
        end = cum[b - 1]
        start = cum[a - 1] if a >= 1 else np.zeros((m, m))
        r_end = float(rs[b - 1])
        rows.extend(weyl_split_check(end, start, M, alpha, r_end, m, block=k))
        rows.append(LedgerRow("trace_identity", abs(float(np.trace(end)) - (r_end - 1.0)),
                              1e-9 * r_end, k))
        log_r = math.log(r_end)
        rows.append(LedgerRow("stirling_factorial", log_r, math.log(lc) + log_factorial(k), k))
        rows.append(LedgerRow("stirling_envelope", log_r, math.log(lc) + k * math.log(k), k))
        lo = _r_before(rs, a)
        rows.append(LedgerRow("dk_upper", dk_term(rs, a, b), r_end * (log_r - math.log(lo) + 1.0), k))
    return rows


def write_ledger(rows, csv_path=None, json_path=None) -> None:
    dicts = [r.as_dict() for r in rows]
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["block", "name", "lhs", "rhs", "slack", "applicable", "pass"])
            for d in dicts:
                out.writerow([d["block"], d["name"], repr(d["lhs"]), repr(d["rhs"]), repr(d["slack"]),
                              int(d["applicable"]), int(d["passed"])])
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(dicts, fh, indent=1)


def write_criterion_csv(path, general_rows, dk_rows) -> None:
    dk = {r.k: r for r in dk_rows}
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["k", "t_prev", "t_k", "lambda_min", "general_term", "general_partial_sum",
                      "dk_term", "dk_partial_sum"])
        for g in general_rows:
            d = dk.get(g.k)
            out.writerow([g.k, g.start, g.end, repr(g.lambda_min), repr(g.term), repr(g.partial_sum),
                          "" if d is None else repr(d.term), "" if d is None else repr(d.partial_sum)])


def write_block_reports(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        fields = ["k_start", "k_end", "lambda_min_S", "max_mu", "sum_muB", "bound_value",
                  "exact_norm_sq", "criterion_term", "pass"]
        out.writerow(fields)
        for rep in reports:
            d = asdict(rep)
            out.writerow([d["k_start"], d["k_end"]] + [repr(float(d[f])) for f in fields[2:-1]]
                         + [int(rep.holds)])
