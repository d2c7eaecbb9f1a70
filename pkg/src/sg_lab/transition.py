"""The transition matrix Phi(n, k) = (I - A_{n-1}) ... (I - A_k), A_j = phi_j phi_j^T / r_j."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import AnchorError, ContractionViolation
from .spectral import spectral_norm

CONTRACTION_TOL = 1e-12


@dataclass
class ProbeVector:
    x: np.ndarray
    origin_k: int


@dataclass
class TransitionTracker:
    """Running products Phi(n, k) for a set of anchors k.

    An anchor k > n is pending and becomes the identity once the tracker
    reaches step k.
    """

    dim: int
    n: int = 0
    products: dict = field(default_factory=dict)
    pending: set = field(default_factory=set)
    probes: list = field(default_factory=list)

    @classmethod
    def start(cls, dim: int, anchors=(0,), n: int = 0) -> "TransitionTracker":
        t = cls(dim=dim, n=n)
        for k in anchors:
            t.add_anchor(k)
        return t

    def add_anchor(self, k: int) -> None:
        if k < self.n:
            raise AnchorError(f"cannot anchor at {k}: tracker already at step {self.n}")
        if k == self.n:
            self.products[k] = np.eye(self.dim)
        else:
            self.pending.add(k)

    def drop_anchor(self, k: int) -> np.ndarray:
        try:
            return self.products.pop(k)
        except KeyError:
            raise AnchorError(f"unknown anchor {k}") from None

    def add_probe(self, x) -> ProbeVector:
        pv = ProbeVector(np.array(x, dtype=float).reshape(self.dim), self.n)
        self.probes.append(pv)
        return pv

    def step(self, phi_n, r_n: float) -> "TransitionTracker":
        """Left-multiply every product by I - phi_n phi_n^T / r_n and advance probes."""
        phi = np.asarray(phi_n, dtype=float).reshape(self.dim)
        energy = float(phi @ phi)
        if energy / r_n > 1.0 + CONTRACTION_TOL:
            raise ContractionViolation(f"||phi||^2 / r = {energy / r_n:.6g} > 1 at step {self.n}")
        if energy > 0.0:
            scaled = phi / r_n
            for k, prod in self.products.items():
                prod -= np.outer(scaled, phi @ prod)
            for pv in self.probes:
                pv.x = pv.x - scaled * (phi @ pv.x)
        self.n += 1
        if self.n in self.pending:
            self.pending.discard(self.n)
            self.products[self.n] = np.eye(self.dim)
        return self

    def exact_norm(self, k: int) -> float:
        if k not in self.products:
            raise AnchorError(f"unknown anchor {k}")
        return spectral_norm(self.products[k])


def _as_phis(phis):
    phis = np.asarray(phis, dtype=float)
    return phis[:, None] if phis.ndim == 1 else phis


def product_oracle(phis, rs, k: int, n: int) -> np.ndarray:
    """Phi(n, k) recomputed from scratch by dense matrix products."""
    phis = _as_phis(phis)
    rs = np.asarray(rs, dtype=float)
    if not 0 <= k <= n <= len(phis):
        raise IndexError(f"need 0 <= k <= n <= {len(phis)}, got k={k}, n={n}")
    m = phis.shape[1]
    eye = np.eye(m)
    prod = eye.copy()
    for j in range(k, n):
        prod = (eye - np.outer(phis[j], phis[j]) / rs[j]) @ prod
    return prod


def probe_deficit(x_start: ProbeVector, phis, rs, upto: int):
    """Run x_{j+1} = (I - A_j) x_j from the probe's origin to ``upto``.

    Returns x_upto and the normalized projections phi_j^T x_j / sqrt(r_j).
    The recursion gives x_upto - x_k = -sum_j A_j x_j and the energy bound
    sum_j proj_j^2 <= ||x_k||^2 - ||x_upto||^2.
    """
    phis = _as_phis(phis)
    rs = np.asarray(rs, dtype=float)
    x = np.array(x_start.x, dtype=float)
    proj = []
    for j in range(x_start.origin_k, upto):
        p = float(phis[j] @ x)
        proj.append(p / np.sqrt(rs[j]))
        x = x - phis[j] * (p / rs[j])
    return x, np.array(proj)


def write_norm_series(path, rows) -> None:
    """rows: iterable of (n, anchor, phi_norm)."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["n", "anchor", "phi_norm"])
        for n, k, v in rows:
            out.writerow([int(n), int(k), repr(float(v))])
