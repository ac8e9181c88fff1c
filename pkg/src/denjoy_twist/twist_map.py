"""The symplectic twist map with the invariant graph of g - Id.

With phi = g~ + g~^{-1} - 2 Id (built from periodic parts, so phi(x+1) =
phi(x) bitwise), the map

    f(theta, r) = (theta + r, r + phi(theta + r))

fixes the graph of gamma = g - Id exactly: f(theta, gamma(theta)) =
(g(theta), gamma(g(theta))) is an algebraic identity, so the measured
residual is root-finder tolerance only. r is tracked as an unwrapped real,
theta mod 1.

Also here: the per-gap linearity check of phi on the middle segments, the
second-derivative scan with the four-term decomposition of
zeta_k = h_k + h_{k-1}^{-1} - 2 Id, the stable/unstable segment families
through the gap midpoints, and the report-only diffusion probe.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .circle_map import CircleHomeo
from .layout import circle_delta, frac_part
from .profiles import profile_eval


@dataclass
class GeneratingFunction:
    """phi = (g~ - Id) + (g~^{-1} - Id), evaluated through periodic parts."""

    g: object

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x: float) -> float:
        fr = float(frac_part(x))
        return (self.g.lift(fr) - fr) + (self.g.inverse_lift(fr) - fr)

    def eval_many(self, xs) -> np.ndarray:
        fr = np.asarray(frac_part(xs), dtype=float)
        return (self.g.lift_many(fr) - fr) + (self.g.inverse_lift_many(fr) - fr)

    def deriv(self, x: float, side: str = "right") -> float:
        fr = float(frac_part(x))
        return (self.g.derivative(fr, side=side) - 1.0) + (
            self.g.inverse_derivative(fr, side=side) - 1.0)

    def second_deriv(self, x: float, side: str = "right") -> float:
        fr = float(frac_part(x))
        return (self.g.second_derivative(fr, side=side)
                + self.g.inverse_second_derivative(fr, side=side))


def phi_eval(system, x, order=0):
    """phi or a one-sided derivative: order in {0, '1L', '1R', '2L', '2R'}."""
    phi = system.phi
    if order == 0:
        return phi.eval(x)
    side = {"L": "left", "R": "right"}[order[1]]
    if order[0] == "1":
        return phi.deriv(x, side=side)
    if order[0] == "2":
        return phi.second_deriv(x, side=side)
    raise ValueError(f"unknown order {order!r}")


@dataclass
class ManifoldSegment:
    """An affine segment through (mu_k, gamma(mu_k)) with slope K_k.

    For k >= 1 these are the stable segments (the half left of the midpoint
    lies on the invariant curve); for k <= 0 the unstable ones (right half
    on the curve). markers holds (x, r) at the left end, midpoint, right end.
    """

    k: int
    kind: str
    base: tuple
    slope: float
    x_half_width: float
    markers: np.ndarray
    in_linear_band: bool = True

    def height(self, x):
        return self.base[1] + self.slope * (np.asarray(x) - self.base[0])


class TwistSystem:
    """The assembled map f, its inverse, and the invariant curve."""

    def __init__(self, g, table=None, seqs=None, profiles=None):
        self.g = g
        self.table = table
        self.seqs = seqs
        self.profiles = profiles
        self.phi = GeneratingFunction(g)

    # -- the map -----------------------------------------------------------

    def curve_height(self, theta):
        """gamma(theta) = g~(theta) - theta on the canonical branch."""
        if np.ndim(theta) == 0:
            fr = float(frac_part(theta))
            return self.g.lift(fr) - fr
        fr = np.asarray(frac_part(theta), dtype=float)
        return self.g.lift_many(fr) - fr

    def forward(self, theta, r):
        # split r into integer and fractional parts (both exact) so the
        # theta output commutes bitwise with vertical integer translation
        fr = r - math.floor(r)
        w = (theta - math.floor(theta)) + fr
        theta1 = w - 1.0 if w >= 1.0 else w
        return theta1, r + self.phi.eval(theta1)

    def backward(self, theta, r):
        th = theta - math.floor(theta)
        p = self.phi.eval(th)
        w = th - (r - math.floor(r)) + p
        return w - math.floor(w), r - p

    def forward_lift(self, theta, r):
        w = theta + r
        return w, r + self.phi.eval(w)

    def backward_lift(self, theta, r):
        p = self.phi.eval(theta)
        return theta - r + p, r - p

    def iterate(self, theta, r, n):
        """n-step orbit (forward for n > 0, backward for n < 0), lift in theta."""
        out = np.empty((abs(n) + 1, 2))
        out[0] = theta, r
        step = self.forward_lift if n > 0 else self.backward_lift
        th, rr = theta, r
        for i in range(1, abs(n) + 1):
            th, rr = step(th, rr)
            out[i] = th, rr
        return out

    # -- checks ------------------------------------------------------------

    def sample_points(self, n, seed=0):
        """Mixed circle samples: gap interiors, gap endpoints, residual."""
        rng = np.random.default_rng(seed)
        tb = self.table
        pts = [rng.random(n // 2)]  # generic (almost surely residual-heavy)
        ks = rng.integers(-tb.M, tb.M + 1, size=n // 4)
        u = rng.random(n // 4)
        pts.append(np.asarray(tb.lam_of(ks)) + u * np.asarray(tb.ell_of(ks)))
        ks2 = rng.integers(-tb.M, tb.M + 1, size=n - n // 2 - n // 4)
        pts.append(np.asarray(tb.lam_of(ks2)))  # endpoints
        return np.concatenate(pts)

    def verify_invariant_curve(self, n_samples: int = 10000, seed: int = 0,
                               translate: int = 0) -> dict:
        """Max residual of f(theta, gamma + translate) vs the shifted curve."""
        if self.table is not None:
            thetas = self.sample_points(n_samples, seed)
        else:
            thetas = np.random.default_rng(seed).random(n_samples)
        fr = np.asarray(frac_part(thetas), dtype=float)
        lift1 = self.g.lift_many(fr)
        gam = lift1 - fr
        w = fr + (gam + translate)
        theta1 = np.asarray(frac_part(w), dtype=float)
        phi1 = ((self.g.lift_many(theta1) - theta1)
                + (self.g.inverse_lift_many(theta1) - theta1))
        r1 = (gam + translate) + phi1
        # target point (g(theta), g^2(theta) - g(theta)), shifted by translate
        target_theta = np.asarray(frac_part(lift1), dtype=float)
        target_r = self.g.lift_many(target_theta) - target_theta
        res_theta = np.abs(circle_delta(theta1, target_theta))
        res_r = np.abs(r1 - (target_r + translate))
        return {
            "n_samples": int(n_samples),
            "max_residual": float(max(res_theta.max(), res_r.max())),
            "max_theta_residual": float(res_theta.max()),
            "max_r_residual": float(res_r.max()),
        }

    def roundtrip_check(self, n_samples: int = 10000, seed: int = 1) -> float:
        """max over samples of |f^{-1}(f(theta, r)) - (theta, r)| and converse."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_samples):
            th, r = rng.random(), rng.uniform(-1.5, 1.5)
            t1, r1 = self.forward(th, r)
            t2, r2 = self.backward(t1, r1)
            worst = max(worst, abs(float(circle_delta(t2, th))), abs(r2 - r))
            t1, r1 = self.backward(th, r)
            t2, r2 = self.forward(t1, r1)
            worst = max(worst, abs(float(circle_delta(t2, th))), abs(r2 - r))
        return worst

    def vertical_translation_check(self, n_samples: int = 256, seed: int = 2) -> dict:
        """f(theta, r+1) - f(theta, r) = (0, 1): theta bitwise, r to an ulp.

        r samples are coarse dyadics so that r+1 is exactly representable;
        the r-part can still differ in the last bit because r + phi rounds
        at different exponents.
        """
        rng = np.random.default_rng(seed)
        worst_t, worst_r = 0.0, 0.0
        for _ in range(n_samples):
            th = rng.random()
            r = rng.integers(-2048, 2048) / 1024.0
            t1, r1 = self.forward(th, r)
            t2, r2 = self.forward(th, r + 1.0)
            worst_t = max(worst_t, abs(t2 - t1))
            worst_r = max(worst_r, abs((r2 - r1) - 1.0))
        return {"max_theta_dev": worst_t, "max_r_dev": worst_r}

    def det_check(self, n_samples: int = 1000, seed: int = 3,
                  step: float = 1e-6) -> float:
        """|det Df - 1| by central differences at differentiable points."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_samples):
            if self.table is not None:
                # gap interiors with margin: differentiable, and theta +- step
                # cannot straddle a slope kink there
                k = int(rng.integers(-min(400, self.table.M), min(400, self.table.M)))
                s = rng.uniform(0.1, 0.4) if rng.random() < 0.5 else rng.uniform(0.6, 0.9)
                theta = float(self.table.lam_of(k)) + s * float(self.table.ell_of(k))
            else:
                theta = rng.random()
            r = rng.uniform(-0.5, 0.5)
            w = theta - r  # probe at theta+r == theta, away from kinks
            F = self.forward_lift
            a = (F(w + step, r)[0] - F(w - step, r)[0]) / (2 * step)
            b = (F(w, r + step)[0] - F(w, r - step)[0]) / (2 * step)
            c = (F(w + step, r)[1] - F(w - step, r)[1]) / (2 * step)
            d = (F(w, r + step)[1] - F(w, r - step)[1]) / (2 * step)
            worst = max(worst, abs(a * d - b * c - 1.0))
        return worst

    def twist_check(self, n_samples: int = 100, seed: int = 4,
                    step: float = 1e-6) -> dict:
        """d theta' / d r: affine-in-r by the formula; confirmed by differences."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_samples):
            th, r = rng.random(), rng.uniform(-1.0, 1.0)
            d = (self.forward_lift(th, r + step)[0]
                 - self.forward_lift(th, r - step)[0]) / (2 * step)
            worst = max(worst, abs(d - 1.0))
        return {"symbolic": 1.0, "max_fd_dev": worst}

    def periodicity_check(self, n_samples: int = 1000, seed: int = 5) -> float:
        rng = np.random.default_rng(seed)
        xs = rng.random(n_samples)
        return float(np.max(np.abs(self.phi.eval_many(xs + 1.0)
                                   - self.phi.eval_many(xs))))

    def mean_check(self, n_grid: int = 8192) -> float:
        """Quadrature mean of phi (exact zero is unattainable under truncation)."""
        xs = (np.arange(n_grid) + 0.5) / n_grid
        return float(np.mean(self.phi.eval_many(xs)))

    # -- phi linearity on the middle segments -------------------------------

    def phi_linearity_check(self, n_points: int = 64) -> dict:
        """Affine fit of phi on each J_k; slope against m_k - 2.

        Index 1 uses the adjusted m. In midpoint-centered coordinates the
        fitted constant is the circle-consistent second difference of the
        midpoints for every k; the extra affine offset -alpha_1 ell_1 / 2
        lives in the local-coordinate form h_1 + h_0^{-1} = m u - a1 l1/2
        and is checked separately below.
        """
        tb, seqs = self.table, self.seqs
        M = tb.M
        ks, devs, slope_devs, const_devs = [], [], [], []
        for k in range(-M + 1, M):
            mu = float(tb.mu_of(k))
            ell = float(tb.ell_of(k))
            xs = mu + np.linspace(-ell / 8.0, ell / 8.0, n_points)
            vals = self.phi.eval_many(xs)
            A = np.vstack([xs - mu, np.ones_like(xs)]).T
            (slope, const), *_ = np.linalg.lstsq(A, vals, rcond=None)
            fit_dev = float(np.max(np.abs(A @ np.array([slope, const]) - vals)))
            m_k = seqs.m1_adjusted if k == 1 else float(seqs.m(k))
            expected_const = (float(circle_delta(tb.mu_of(k + 1), mu))
                              + float(circle_delta(tb.mu_of(k - 1), mu)))
            ks.append(k)
            devs.append(fit_dev)
            slope_devs.append(abs(slope - (m_k - 2.0)))
            const_devs.append(abs(const - expected_const))
        # local-coordinate identity at index 1, where the adjusted head
        # relation makes h_1 + h_0^{-1} affine with offset -alpha_1 ell_1 / 2
        h1, h0 = self.g.local[1], self.g.local[0]
        ell1 = h1.ell
        us = ell1 * np.linspace(0.375, 0.625, n_points)
        local_sum = h1.value(us) + h0.invert(us)
        expected = seqs.m1_adjusted * us - float(seqs.alpha(1)) * ell1 / 2.0
        local_offset_dev = float(np.max(np.abs(local_sum - expected)))
        return {
            "k": ks,
            "max_fit_deviation": float(np.max(devs)),
            "max_slope_deviation": float(np.max(slope_devs)),
            "max_const_deviation": float(np.max(const_devs)),
            "local_offset_dev_k1": local_offset_dev,
            "fit_deviation": devs,
            "slope_deviation": slope_devs,
        }

    # -- regularity scan -----------------------------------------------------

    def second_derivative_scan(self, n_grid: int = 256,
                               fd_step_rel: float = 1e-4) -> "RegularityReport":
        """Per-gap second-derivative data for zeta_k = h_k + h_{k-1}^{-1} - 2 Id.

        Evaluates the four closed-form terms on an interior grid that avoids
        the midpoint, sums them, and cross-checks against (i) a five-point
        finite difference of the analytic first derivative and (ii) the
        direct chain-rule second derivative.
        """
        g, seqs = self.g, self.seqs
        M = self.table.M
        ks = list(range(-M + 1, M))
        rows = {name: [] for name in
                ("sup_d2", "sup_II", "sup_III", "sup_IV", "sup_V",
                 "sup_dzeta", "sup_zeta", "rel_fd_dev", "abs_analytic_dev")}
        s_grid = (np.arange(n_grid) + 0.5) / n_grid
        for k in ks:
            hk = g.local[k]
            hkm1 = g.local[k - 1]
            ell_k, ell_km1 = hk.ell, hkm1.ell
            K_k, K_km1 = hk.K, hkm1.K
            a_k, a_km1 = hk.alpha, hkm1.alpha
            gam_k, gam_km1 = hk.gamma, hkm1.gamma
            u = s_grid * ell_k
            v = hkm1.invert(u)
            st = v / ell_km1
            s = s_grid

            eta = self.profiles.eta
            eta1_s = profile_eval(eta, s, 1)
            eta1_st = profile_eval(eta, st, 1)
            gk1_s = profile_eval(gam_k, s, 1)
            gkm1_1_s = profile_eval(gam_km1, s, 1)
            gkm1_1_st = profile_eval(gam_km1, st, 1)
            psi_v = K_km1 * profile_eval(eta, st, 0) + a_km1 * profile_eval(gam_km1, st, 0)
            dpsi_v = (K_km1 * eta1_st + a_km1 * gkm1_1_st) / ell_km1
            df_inv = (ell_k / ell_km1) / (1.0 + psi_v)

            II = (K_k * eta1_s - K_km1 * eta1_s
                  + a_k * gk1_s - a_km1 * gkm1_1_s) / ell_k
            III = -((K_km1 * eta1_st + a_km1 * gkm1_1_st) / ell_k) * (
                df_inv / (1.0 + psi_v) - 1.0)
            IV = (ell_km1 / ell_k) * psi_v * dpsi_v * df_inv / (1.0 + psi_v) ** 2
            V = (K_km1 * (eta1_s - eta1_st)
                 + a_km1 * (gkm1_1_s - gkm1_1_st)) / ell_k
            total = II + III + IV + V

            # direct chain rule
            psik1_u = (K_k * eta1_s + a_k * gk1_s) / ell_k
            direct = (psik1_u - dpsi_v / (1.0 + psi_v) ** 2
                      + psi_v * dpsi_v / (1.0 + psi_v) ** 3)

            # five-point FD of the analytic first derivative of zeta
            hstep = fd_step_rel * ell_k

            def dzeta(uu):
                vv = hkm1.invert(uu)
                ss = uu / ell_k
                sst = vv / ell_km1
                psi_k_u = (K_k * profile_eval(eta, ss, 0)
                           + a_k * profile_eval(gam_k, ss, 0))
                psi_km1_v = (K_km1 * profile_eval(eta, sst, 0)
                             + a_km1 * profile_eval(gam_km1, sst, 0))
                return psi_k_u - psi_km1_v / (1.0 + psi_km1_v)

            fd = (-dzeta(u + 2 * hstep) + 8.0 * dzeta(u + hstep)
                  - 8.0 * dzeta(u - hstep) + dzeta(u - 2 * hstep)) / (12.0 * hstep)

            zeta = hk.value(u) + v - 2.0 * u
            dz = dzeta(u)

            rows["sup_d2"].append(float(np.max(np.abs(total))))
            rows["sup_II"].append(float(np.max(np.abs(II))))
            rows["sup_III"].append(float(np.max(np.abs(III))))
            rows["sup_IV"].append(float(np.max(np.abs(IV))))
            rows["sup_V"].append(float(np.max(np.abs(V))))
            rows["sup_dzeta"].append(float(np.max(np.abs(dz))))
            rows["sup_zeta"].append(float(np.max(np.abs(zeta))))
            rows["rel_fd_dev"].append(
                float(np.max(np.abs(total - fd)) / np.max(np.abs(fd))))
            rows["abs_analytic_dev"].append(float(np.max(np.abs(total - direct))))
        return RegularityReport(k=ks, **rows)


@dataclass
class RegularityReport:
    """Per-gap suprema of the second-derivative data and decay summaries."""

    k: list
    sup_d2: list
    sup_II: list
    sup_III: list
    sup_IV: list
    sup_V: list
    sup_dzeta: list
    sup_zeta: list
    rel_fd_dev: list
    abs_analytic_dev: list

    def summary(self) -> dict:
        k = np.asarray(self.k)
        d2 = np.asarray(self.sup_d2)
        M = int(np.max(np.abs(k))) + 1
        half = M // 2
        tail = float(np.max(d2[np.abs(k) >= half]))
        head = float(np.max(d2[np.abs(k) <= half]))
        off_crossing = (k != 0) & (k != 1)
        return {
            "sup_all": float(np.max(d2)),
            # gaps 0 and 1 pair cross-center indices (K flips sign; the
            # alpha seed jump), where the two-sided difference estimates do
            # not apply; the limit statements concern the complement
            "sup_off_crossing": float(np.max(d2[off_crossing])),
            "sup_tail": tail,
            "sup_head": head,
            "tail_below_head": bool(tail < head),
            "max_rel_fd_dev": float(np.max(self.rel_fd_dev)),
            "max_abs_analytic_dev": float(np.max(self.abs_analytic_dev)),
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "sup_d2", "sup_II", "sup_III", "sup_IV", "sup_V",
                        "sup_dzeta", "sup_zeta", "rel_fd_dev"])
            for i, k in enumerate(self.k):
                w.writerow([k, repr(self.sup_d2[i]), repr(self.sup_II[i]),
                            repr(self.sup_III[i]), repr(self.sup_IV[i]),
                            repr(self.sup_V[i]), repr(self.sup_dzeta[i]),
                            repr(self.sup_zeta[i]), repr(self.rel_fd_dev[i])])


# ---------------------------------------------------------------------------
# stable / unstable segments
# ---------------------------------------------------------------------------

def manifold_segment(system: TwistSystem, k: int, kind: str) -> ManifoldSegment:
    """Base segment through (mu_k, gamma(mu_k)) over J_k.

    Stable segments exist as base formulas for k >= 1, unstable for k <= 0;
    other indices come from extend_family.
    """
    if kind not in ("stable", "unstable"):
        raise ValueError("kind must be 'stable' or 'unstable'")
    if kind == "stable" and k < 1:
        return extend_family(system, "stable", k)[-1]
    if kind == "unstable" and k > 0:
        return extend_family(system, "unstable", k)[-1]
    tb, seqs = system.table, system.seqs
    mu = float(tb.mu_of(k))
    ell = float(tb.ell_of(k))
    base_r = float(system.curve_height(mu))
    slope = float(seqs.K(k))
    xs = np.array([mu - ell / 8.0, mu, mu + ell / 8.0])
    markers = np.column_stack([xs, base_r + slope * (xs - mu)])
    return ManifoldSegment(k=k, kind=kind, base=(mu, base_r), slope=slope,
                           x_half_width=ell / 8.0, markers=markers)


def _in_band(system, markers, k):
    lo, hi = system.table.J_of(k)
    xs = frac_part(markers[:, 0])
    return bool(np.all((xs >= lo - 1e-15) & (xs <= hi + 1e-15)))


def extend_family(system: TwistSystem, kind: str, k_target: int) -> list:
    """Iterated segment markers: stable k <= 0 from f^{k-1}(S_1), unstable
    k >= 1 from f^k(U_0).

    Collinearity is guaranteed (and asserted by the caller) only while each
    pullback stays inside the band where the map is affine; the in_linear_band
    flag tracks it.
    """
    out = []
    if kind == "stable":
        if k_target > 0:
            raise ValueError("extension covers k <= 0 for stable segments")
        seg = manifold_segment(system, 1, "stable")
        markers = seg.markers.copy()
        in_band = True
        for k in range(0, k_target - 1, -1):
            in_band = in_band and _in_band(system, markers, k + 1)
            markers = np.array([system.backward_lift(x, r) for x, r in markers])
            out.append(ManifoldSegment(
                k=k, kind="stable", base=tuple(markers[1]),
                slope=_marker_slope(markers),
                x_half_width=abs(markers[2, 0] - markers[0, 0]) / 2.0,
                markers=markers.copy(), in_linear_band=in_band))
    else:
        if k_target < 1:
            raise ValueError("extension covers k >= 1 for unstable segments")
        seg = manifold_segment(system, 0, "unstable")
        markers = seg.markers.copy()
        in_band = True
        for k in range(1, k_target + 1):
            in_band = in_band and _in_band(system, markers, k - 1)
            markers = np.array([system.forward_lift(x, r) for x, r in markers])
            out.append(ManifoldSegment(
                k=k, kind="unstable", base=tuple(markers[1]),
                slope=_marker_slope(markers),
                x_half_width=abs(markers[2, 0] - markers[0, 0]) / 2.0,
                markers=markers.copy(), in_linear_band=in_band))
    return out


def _marker_slope(markers) -> float:
    return float((markers[2, 1] - markers[0, 1]) / (markers[2, 0] - markers[0, 0]))


def marker_collinearity(markers) -> float:
    """Vertical deviation of the middle marker from the chord."""
    x0, r0 = markers[0]
    x2, r2 = markers[2]
    mid = r0 + (r2 - r0) * (markers[1, 0] - x0) / (x2 - x0)
    return abs(float(markers[1, 1] - mid))


def manifold_iterate_check(system: TwistSystem, k_max: int,
                           n_points: int = 16) -> dict:
    """f maps each stable segment onto the next (and f^{-1} each unstable).

    Reports the worst vertical distance of image points from the target
    segment and the worst contraction-ratio error, measured on x-projections
    (the affine contraction factor; Euclidean length differs by a slope
    correction of order K^2).
    """
    tb, seqs = system.table, system.seqs
    if k_max + 2 > tb.M:
        # gap M itself sits inside the truncation patch, so the last
        # formula-backed target segment is at index M - 1
        raise ValueError("k_max must not exceed M - 2")
    worst_dist = 0.0
    worst_ratio = 0.0
    worst_base = 0.0
    for k in range(1, k_max + 1):
        seg = manifold_segment(system, k, "stable")
        nxt = manifold_segment(system, k + 1, "stable")
        xs = seg.base[0] + np.linspace(-seg.x_half_width, seg.x_half_width, n_points)
        for x in xs:
            x1, r1 = system.forward_lift(x, float(seg.height(x)))
            worst_dist = max(worst_dist,
                             abs(r1 - float(nxt.height(frac_part(x1)))))
        x_lo, _ = system.forward_lift(xs[0], float(seg.height(xs[0])))
        x_hi, _ = system.forward_lift(xs[-1], float(seg.height(xs[-1])))
        ratio = (x_hi - x_lo) / (xs[-1] - xs[0])
        worst_ratio = max(worst_ratio,
                          abs(ratio - float(seqs.ell(k + 1)) / float(seqs.ell(k))))
        # base point orbit: f(mu_k, gamma(mu_k)) = (mu_{k+1}, gamma(mu_{k+1}))
        bx, br = system.forward_lift(seg.base[0], seg.base[1])
        worst_base = max(worst_base,
                         abs(float(circle_delta(bx, nxt.base[0]))),
                         abs(br - nxt.base[1]))
    for k in range(0, -k_max, -1):
        seg = manifold_segment(system, k, "unstable")
        nxt = manifold_segment(system, k - 1, "unstable")
        xs = seg.base[0] + np.linspace(-seg.x_half_width, seg.x_half_width, n_points)
        for x in xs:
            x1, r1 = system.backward_lift(x, float(seg.height(x)))
            worst_dist = max(worst_dist,
                             abs(r1 - float(nxt.height(frac_part(x1)))))
        x_lo, _ = system.backward_lift(xs[0], float(seg.height(xs[0])))
        x_hi, _ = system.backward_lift(xs[-1], float(seg.height(xs[-1])))
        ratio = (x_hi - x_lo) / (xs[-1] - xs[0])
        worst_ratio = max(worst_ratio,
                          abs(ratio - float(seqs.ell(k - 1)) / float(seqs.ell(k))))
    return {"k_max": k_max, "max_image_distance": worst_dist,
            "max_ratio_error": worst_ratio, "max_base_orbit_error": worst_base}


def curve_side_check(system: TwistSystem, n_points: int = 64) -> dict:
    """Height gap between the curve and the free halves of the base segments.

    With the standard profile assignment the half of the first stable
    segment right of the midpoint leaves the curve and the gap equals
    alpha_1 (x - mu_1) > 0 (the instability zone is under the curve);
    mirrored on the unstable side with alpha_0 < 0. Exchanging the jump
    profiles puts the free halves on the other side and flips every gap
    sign (zone above the curve).
    """
    tb, seqs = system.table, system.seqs
    s1 = manifold_segment(system, 1, "stable")
    mu1 = s1.base[0]
    # the free half is where the curve's local slope is K + alpha
    sgn1 = 1.0 if system.g.local[1].gamma_kind == "plus" else -1.0
    xs = mu1 + sgn1 * np.linspace(1e-3, 1.0, n_points) * s1.x_half_width
    gap1 = np.asarray(system.curve_height(xs)) - np.asarray(s1.height(xs))
    expected1 = float(seqs.alpha(1)) * (xs - mu1)
    u0 = manifold_segment(system, 0, "unstable")
    mu0 = u0.base[0]
    sgn0 = -1.0 if system.g.local[0].gamma_kind == "minus" else 1.0
    xs0 = mu0 + sgn0 * np.linspace(1e-3, 1.0, n_points) * u0.x_half_width
    gap0 = np.asarray(system.curve_height(xs0)) - np.asarray(u0.height(xs0))
    expected0 = float(seqs.alpha(0)) * (xs0 - mu0)
    zone_below = not system.g.swap_gamma
    sign_ok = (bool(np.all(gap1 > 0.0) and np.all(gap0 > 0.0)) if zone_below
               else bool(np.all(gap1 < 0.0) and np.all(gap0 < 0.0)))
    return {
        "max_formula_dev": float(max(np.max(np.abs(gap1 - expected1)),
                                     np.max(np.abs(gap0 - expected0)))),
        "zone_below_curve": zone_below,
        "strict_sign_ok": sign_ok,
        "strictly_positive": bool(np.all(gap1 > 0.0) and np.all(gap0 > 0.0)),
        "min_gap": float(min(gap1.min(), gap0.min())),
        "max_gap": float(max(gap1.max(), gap0.max())),
    }


def orbit_convergence_check(system: TwistSystem, x_offset: float, n: int) -> dict:
    """Distance decay of an off-base point on the first stable segment.

    Distances are x-projections, whose per-step ratios telescope exactly to
    products of consecutive gap-length ratios while the orbit stays inside
    the linear strips (Euclidean distances carry an extra slope factor of
    order K^2, reported but not asserted).
    """
    tb, seqs = system.table, system.seqs
    if n + 1 > tb.M:
        raise ValueError("n + 1 exceeds the stored range")
    seg = manifold_segment(system, 1, "stable")
    if not -seg.x_half_width <= x_offset <= seg.x_half_width:
        raise ValueError("x_offset outside the segment")
    base = np.array([seg.base[0], seg.base[1]])
    pt = np.array([seg.base[0] + x_offset, float(seg.height(seg.base[0] + x_offset))])
    d0 = pt[0] - base[0]
    dx = [abs(d0)]
    de = [math.hypot(pt[0] - base[0], pt[1] - base[1])]
    for _ in range(n):
        base = np.array(system.forward_lift(*base))
        pt = np.array(system.forward_lift(*pt))
        dx.append(abs(pt[0] - base[0]))
        de.append(math.hypot(pt[0] - base[0], pt[1] - base[1]))
    ells = np.asarray(seqs.ell(np.arange(1, n + 2)), dtype=float)
    expected = ells[1:] / ells[0]
    measured = np.array(dx[1:]) / dx[0] if dx[0] != 0 else np.zeros(n)
    rel = np.max(np.abs(measured / expected - 1.0)) if dx[0] != 0 else 0.0
    return {"n": n, "d_x": dx, "d_euclid": de,
            "max_rel_ratio_error": float(rel)}


@dataclass
class DiffusionReport:
    """Report-only probe of vertical excursions off the invariant curve."""

    theta0: float
    offset: float
    n_steps: int
    max_excursion: float
    threshold_times: dict
    checkpoints: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "theta0": self.theta0, "offset": self.offset,
            "n_steps": self.n_steps, "max_excursion": self.max_excursion,
            "threshold_times": self.threshold_times,
            "checkpoints": self.checkpoints,
        }


def diffusion_probe(system: TwistSystem, theta0: float, offset: float, n: int,
                    thresholds=(1e-3, 1e-2, 1e-1)) -> DiffusionReport:
    """Iterate (theta0, gamma(theta0) + offset) and track |r_n - gamma(theta_n)|.

    Instability of the zone under the curve is an asymptotic statement about
    the untruncated system, so nothing here is asserted; the report records
    the excursion series and first crossing times.
    """
    th = float(frac_part(theta0))
    r = float(system.curve_height(th)) + offset
    max_exc = abs(offset)
    times = {repr(t): None for t in thresholds}
    checkpoints = []
    checkpoint_at = 1
    for i in range(1, n + 1):
        th, r = system.forward(th, r)
        exc = abs(r - float(system.curve_height(th)))
        if exc > max_exc:
            max_exc = exc
        for t in thresholds:
            if times[repr(t)] is None and exc > t:
                times[repr(t)] = i
        if i == checkpoint_at or i == n:
            checkpoints.append((i, max_exc))
            checkpoint_at *= 2
    return DiffusionReport(theta0=float(frac_part(theta0)), offset=offset,
                           n_steps=n, max_excursion=max_exc,
                           threshold_times=times, checkpoints=checkpoints)


def build_twist_system(g, table=None, seqs=None, profiles=None) -> TwistSystem:
    return TwistSystem(g, table=table, seqs=seqs, profiles=profiles)


def twist_forward(system: TwistSystem, theta: float, r: float):
    """(theta, r) -> (theta + r, r + phi(theta + r)), theta mod 1, r real."""
    return system.forward(theta, r)


def twist_backward(system: TwistSystem, theta: float, r: float):
    """(theta, r) -> (theta - r + phi(theta), r - phi(theta))."""
    return system.backward(theta, r)


def dump_segments_csv(system: TwistSystem, k_lo: int, k_hi: int, path) -> None:
    """Segment endpoints and midpoints, one row per marker."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "kind", "marker", "x", "r", "in_linear_band"])
        for k in range(max(k_lo, 1), k_hi + 1):
            seg = manifold_segment(system, k, "stable")
            for name, (x, r) in zip(("lo", "mid", "hi"), seg.markers):
                w.writerow([k, "stable", name, repr(float(x)), repr(float(r)),
                            int(seg.in_linear_band)])
        for k in range(min(k_hi, 0), k_lo - 1, -1):
            seg = manifold_segment(system, k, "unstable")
            for name, (x, r) in zip(("lo", "mid", "hi"), seg.markers):
                w.writerow([k, "unstable", name, repr(float(x)), repr(float(r)),
                            int(seg.in_linear_band)])


def dump_phase_portrait_csv(system: TwistSystem, orbits, n_steps: int, path,
                            curve_samples: int = 512) -> None:
    """(orbit, step, theta, r) rows; orbit 0 samples the invariant curve."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["orbit", "step", "theta", "r"])
        ths = (np.arange(curve_samples) + 0.5) / curve_samples
        for j, th in enumerate(ths):
            w.writerow([0, j, repr(float(th)), repr(float(system.curve_height(th)))])
        for i, (th0, r0) in enumerate(orbits, start=1):
            th, r = float(th0), float(r0)
            w.writerow([i, 0, repr(float(frac_part(th))), repr(r)])
            for s in range(1, n_steps + 1):
                th, r = system.forward(th, r)
                w.writerow([i, s, repr(th), repr(r)])


def dump_json(obj: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
