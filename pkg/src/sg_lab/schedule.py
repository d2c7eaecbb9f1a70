"""Factorial block schedule t_k = min{j : r_j >= k!} and its ratio certificates."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientHorizon

#: beyond this k the factorial thresholds are compared in log space
EXACT_FACTORIAL_MAX = 20


def log_factorial(k: int) -> float:
    return math.lgamma(k + 1)


@dataclass
class RatioCert:
    k: int
    lower: float  # k / l
    ratio: float  # r_{t_k} / r_{t_{k-1}}
    upper: float  # l * k
    passed: bool


@dataclass
class BlockSchedule:
    """``t[i]`` is t_k for k = i + 1."""

    t: list
    l_const: float
    ratio_certs: list = field(default_factory=list)

    @property
    def k_max(self) -> int:
        return len(self.t)

    def t_of(self, k: int) -> int:
        if not 1 <= k <= len(self.t):
            raise InsufficientHorizon(f"t_{k} not reached; schedule covers k = 1..{len(self.t)}")
        return self.t[k - 1]

    def blocks(self, k_min: int = 2):
        """(k, start, end) for every complete block [t_{k-1}, t_k)."""
        return [(k, self.t[k - 2], self.t[k - 1]) for k in range(max(k_min, 2), len(self.t) + 1)]


def measured_l(rs) -> float:
    rs = np.asarray(rs, dtype=float)
    if len(rs) < 2:
        return 1.0
    return float(max(1.0, np.max(rs[1:] / rs[:-1])))


def factorial_schedule(rs, min_blocks: int = 1) -> BlockSchedule:
    """First index at which r crosses each factorial.

    ``min_blocks`` is the number of t_k the caller needs; a shorter horizon
    raises InsufficientHorizon.
    """
    rs = np.asarray(rs, dtype=float)
    if len(rs) == 0 or rs[0] < 1:
        raise ValueError("r must start at a value >= 1")
    if np.any(np.diff(rs) < 0):
        raise ValueError("r must be nondecreasing")
    t = []
    log_rs = None
    k = 1
    while True:
        if k <= EXACT_FACTORIAL_MAX:
            j = int(np.searchsorted(rs, float(math.factorial(k)), side="left"))
        else:
            if log_rs is None:
                log_rs = np.log(rs)
            j = int(np.searchsorted(log_rs, log_factorial(k), side="left"))
        if j >= len(rs):
            break
        t.append(j)
        k += 1
    if len(t) < min_blocks:
        raise InsufficientHorizon(f"horizon reaches only {len(t)} schedule points, {min_blocks} requested")
    sched = BlockSchedule(t=t, l_const=measured_l(rs))
    sched.ratio_certs = verify_ratio(sched, rs)
    return sched


def verify_ratio(sched: BlockSchedule, rs) -> list:
    """k / l < r_{t_k} / r_{t_{k-1}} < l k for k >= 2, with l measured from the run."""
    rs = np.asarray(rs, dtype=float)
    lc = sched.l_const
    certs = []
    for k in range(2, len(sched.t) + 1):
        ratio = rs[sched.t[k - 1]] / rs[sched.t[k - 2]]
        lo, hi = k / lc, lc * k
        certs.append(RatioCert(k, lo, float(ratio), hi, bool(lo < ratio < hi)))
    return certs


def stirling_rows(sched: BlockSchedule, rs) -> list:
    """log r_{t_k - 1} against log(l k!) and against log l + k log k, for k >= 2."""
    rs = np.asarray(rs, dtype=float)
    rows = []
    for k in range(2, len(sched.t) + 1):
        tk = sched.t[k - 1]
        lhs = math.log(rs[max(tk - 1, 0)])
        exact = math.log(sched.l_const) + log_factorial(k)
        envelope = math.log(sched.l_const) + k * math.log(k)
        rows.append((k, lhs, exact, envelope))
    return rows


def write_schedule_csv(path, sched: BlockSchedule, rs) -> None:
    rs = np.asarray(rs, dtype=float)
    certs = {c.k: c for c in sched.ratio_certs}
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["k", "t_k", "r_t_k", "ratio", "pass"])
        for k, tk in enumerate(sched.t, start=1):
            c = certs.get(k)
            out.writerow([k, tk, repr(float(rs[tk])), "" if c is None else repr(c.ratio),
                          "" if c is None else int(c.passed)])
