"""Placement of the gaps on the circle in the order of the rotation orbit.

Gap k sits where the atom of mass ell_k at frac(k*omega) would sit under the
measure "sum of atoms plus uniformly spread leftover": its left endpoint is
the total mass strictly below its orbit point,

    lambda_k = sum_{m : frac(m w) < frac(k w)} ell_m + residual_mass * frac(k w).

Spreading the untracked tail mass uniformly is the finite completion of the
atomic picture; it makes the placed object exactly self-consistent (gaps are
pairwise disjoint with slack proportional to orbit spacing, and nothing
downstream depends on the unrealizable infinite layout).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


def frac_part(x):
    """x mod 1 in [0, 1), mapping negative inputs correctly."""
    return np.asarray(x, dtype=float) - np.floor(x)


def circle_delta(a, b):
    """Minimal representative of a - b on the circle, in (-1/2, 1/2]."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    d = d - np.round(d)
    return d


@dataclass
class GapTable:
    """Placed gaps I_k = [lambda_k, lambda_k + ell_k] for |k| <= M.

    Arrays are indexed by k + M. sorted_to_k[i] gives the gap index of the
    i-th gap in circular order; prefix[i] is the total gap length strictly
    before it. No placed gap straddles the point 0 = 1 for these builds
    (gap 0 starts exactly at 0) but wrap flags are kept for the contract.
    """

    M: int
    omega: float
    orbit_t: np.ndarray      # frac(k omega), index k + M
    lam: np.ndarray
    ell: np.ndarray
    mu: np.ndarray
    wraps: np.ndarray
    residual_mass: float
    sorted_to_k: np.ndarray
    rank_of_k: np.ndarray    # inverse permutation: circular rank of gap k
    prefix: np.ndarray       # gap mass strictly below each sorted gap
    _sorted_lam: np.ndarray = None
    _sorted_ends: np.ndarray = None

    def __post_init__(self):
        order = self.sorted_to_k + self.M
        self._sorted_lam = self.lam[order]
        self._sorted_ends = self._sorted_lam + self.ell[order]

    def lam_of(self, k):
        return self.lam[np.asarray(k) + self.M]

    def ell_of(self, k):
        return self.ell[np.asarray(k) + self.M]

    def mu_of(self, k):
        return self.mu[np.asarray(k) + self.M]

    def t_of(self, k):
        return self.orbit_t[np.asarray(k) + self.M]

    def J_of(self, k):
        """The middle segment of gap k: [mu - ell/8, mu + ell/8]."""
        m = self.mu_of(k)
        e = self.ell_of(k)
        return (m - e / 8.0, m + e / 8.0)

    def locate(self, x):
        """Classify a circle point: inside gap k or in the residual set.

        Returns ("gap", k, u) with local coordinate u in [0, ell_k], counting
        both endpoints as the gap's; or ("residual", k_left, k_right) with the
        circularly bracketing gap indices.
        """
        x = float(frac_part(x))
        n = len(self._sorted_lam)
        i = int(np.searchsorted(self._sorted_lam, x, side="right")) - 1
        if i >= 0 and x <= self._sorted_ends[i]:
            k = int(self.sorted_to_k[i])
            return ("gap", k, x - float(self._sorted_lam[i]))
        left = i if i >= 0 else n - 1
        right = (i + 1) % n
        return ("residual", int(self.sorted_to_k[left]), int(self.sorted_to_k[right]))


def order_orbit_points(M: int, omega: float) -> np.ndarray:
    """Permutation sorting {frac(k omega)}_{|k| <= M}; entry i is a gap index k.

    Orbit points must be pairwise distinct at double precision, which holds
    with room to spare for the default omega at desk truncations.
    """
    ks = np.arange(-M, M + 1)
    t = frac_part(ks * omega)
    order = np.argsort(t, kind="stable")
    tt = t[order]
    gaps = np.diff(tt)
    if np.any(gaps <= 0.0):
        raise ValueError("orbit points collide at double precision; "
                         "reduce M or change omega")
    return ks[order]


def build_gap_table(seqs, params=None) -> GapTable:
    """Place the stored gaps from built sequences."""
    p = params if params is not None else seqs.params
    M, omega = p.truncation_M, p.omega
    ks = np.arange(-M, M + 1)
    orbit_t = frac_part(ks * omega)
    sorted_to_k = order_orbit_points(M, omega)
    order_idx = sorted_to_k + M
    ell = np.asarray(seqs.ell(ks), dtype=float)
    residual = 1.0 - float(np.sum(ell))
    if not (0.0 < residual < 1.0):
        raise ValueError(f"residual mass {residual} outside (0, 1)")

    sorted_ell = ell[order_idx]
    prefix = np.concatenate(([0.0], np.cumsum(sorted_ell)[:-1]))
    sorted_lam = prefix + residual * orbit_t[order_idx]

    lam = np.empty(2 * M + 1)
    lam[order_idx] = sorted_lam
    rank_of_k = np.empty(2 * M + 1, dtype=int)
    rank_of_k[order_idx] = np.arange(2 * M + 1)

    ends = sorted_lam + sorted_ell
    if np.any(ends[:-1] > sorted_lam[1:]) or ends[-1] >= 1.0:
        raise AssertionError("internal consistency failure: gaps overlap")

    table = GapTable(
        M=M, omega=omega, orbit_t=orbit_t, lam=lam, ell=ell,
        mu=lam + ell / 2.0, wraps=np.zeros(2 * M + 1, dtype=bool),
        residual_mass=residual, sorted_to_k=sorted_to_k,
        rank_of_k=rank_of_k, prefix=prefix)
    return table


# ---------------------------------------------------------------------------
# the semi-conjugacy j (collapses gap k to frac(k omega))
# ---------------------------------------------------------------------------

@dataclass
class SemiConjugacy:
    """Monotone degree-one map j with j(I_k) = frac(k omega).

    On the residual set j inverts the placement measure: a point at gap-mass
    prefix P plus residual offset r*t maps to t. This is the affine
    interpolation between neighboring gap values, so j is weakly increasing
    with j(x + 1) = j(x) + 1 on lifts.
    """

    table: GapTable

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x: float) -> float:
        kind, a, b = self.table.locate(x)
        if kind == "gap":
            return float(self.table.t_of(a))
        return self.eval_residual_t(x)

    def eval_residual_t(self, x: float) -> float:
        """Invert Psi on the residual: t = (x - gap mass below) / residual."""
        t0 = self.table
        x = float(frac_part(x))
        i = int(np.searchsorted(t0._sorted_lam, x, side="right")) - 1
        mass_below = float(t0.prefix[i] + t0.ell[t0.sorted_to_k[i] + t0.M]) if i >= 0 else 0.0
        return (x - mass_below) / t0.residual_mass

    def lift(self, x: float) -> float:
        n = math.floor(x)
        return n + self.eval(x - n)


def dump_gap_table_csv(table: GapTable, path) -> None:
    """Gap table dump with columns (k, lambda, mu, ell, J_lo, J_hi, wrap)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "lambda", "mu", "ell", "J_lo", "J_hi", "wrap"])
        for k in range(-table.M, table.M + 1):
            j_lo, j_hi = table.J_of(k)
            w.writerow([k, repr(float(table.lam_of(k))), repr(float(table.mu_of(k))),
                        repr(float(table.ell_of(k))), repr(float(j_lo)),
                        repr(float(j_hi)), int(table.wraps[k + table.M])])
