"""The Denjoy-type circle homeomorphism g assembled from per-gap diffeos.

Structure of g as a sorted table of pieces over one fundamental domain:

* gap pieces, k in [-M, M-1]: translate-apply-translate with the local
  diffeomorphism h_k, so g(I_k) = I_{k+1} exactly;
* transport pieces on the residual set: the placement measure conjugates the
  rigid rotation, which on atom-free stretches is an affine map of slope
  essentially 1 between images of stored gap endpoints;
* two patch pieces absorbing the truncation boundary: the gap I_M (whose
  image gap is not stored) is flattened affinely into a short residual
  interval, and a short residual interval around the preimage of I_{-M}
  opens up affinely onto that gap.

With the patches kept narrow, the semi-conjugacy to the rotation is exact
outside two intervals of t-measure a few 1e-4, which pins the rotation
number to omega far beyond the 1/n acceptance window.

Evaluation, inversion, derivatives (one-sided at the gap midpoints) and lift
bookkeeping all run off the same piece table; the object is immutable after
build and safe for concurrent read-only use.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .layout import GapTable, frac_part
from .profiles import ProfileSet, profile_eval

_GAP = 0
_AFFINE = 1

_INVERT_REL_TOL = 1e-14
_INVERT_MAX_ITER = 200
_EPS = np.finfo(float).eps


@dataclass
class LocalDiffeo:
    """h_k on [0, ell_k]: integral of 1 + K_k eta_k + alpha_k gamma_k.

    gamma_kind picks which jump profile shapes the slope discontinuity at
    ell_k/2 ("plus": linear left piece has slope 1+K, right 1+K+alpha;
    "minus": mirrored). Treat instances as immutable after construction.
    """

    k: int
    ell: float
    ell_next: float
    K: float
    alpha: float
    gamma_kind: str
    eta: object = field(repr=False, default=None)
    gamma: object = field(repr=False, default=None)
    _bp_u: np.ndarray = field(repr=False, default=None)
    _bp_v: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        self._bp_u = np.array([0.0, 0.375 * self.ell, 0.5 * self.ell,
                               0.625 * self.ell, self.ell])
        self._bp_v = np.asarray(self.value(self._bp_u))

    @property
    def slope_left(self) -> float:
        return 1.0 + self.K + (self.alpha if self.gamma_kind == "minus" else 0.0)

    @property
    def slope_right(self) -> float:
        return 1.0 + self.K + (self.alpha if self.gamma_kind == "plus" else 0.0)

    def _intercept(self, right: bool) -> float:
        slope = self.slope_right if right else self.slope_left
        if slope == 1.0 + self.K:
            return 0.0
        return -self.alpha * self.ell / 2.0

    def value(self, u):
        s = np.asarray(u, dtype=float) / self.ell
        E = profile_eval(self.eta, s, "antiderivative")
        G = profile_eval(self.gamma, s, "antiderivative")
        out = np.asarray(u) + self.K * self.ell * E + self.alpha * self.ell * G
        return float(out) if np.ndim(u) == 0 else out

    def deriv(self, u, side=None):
        s = np.asarray(u, dtype=float) / self.ell
        e = profile_eval(self.eta, s, 0)
        gmm = profile_eval(self.gamma, s, 0, side=side)
        out = 1.0 + self.K * e + self.alpha * gmm
        return float(out) if np.ndim(u) == 0 else out

    def second_deriv(self, u, side=None):
        s = np.asarray(u, dtype=float) / self.ell
        out = (self.K * profile_eval(self.eta, s, 1)
               + self.alpha * profile_eval(self.gamma, s, 1, side=side)) / self.ell
        return float(out) if np.ndim(u) == 0 else out

    def invert(self, v):
        """u with h_k(u) = v, for v in [0, ell_{k+1}].

        Exact closed form on the two linear middle pieces, safeguarded
        Newton elsewhere, to |h(u) - v| <= 1e-14 ell_{k+1}.
        """
        scalar = np.ndim(v) == 0
        v = np.atleast_1d(np.asarray(v, dtype=float))
        us, vs = self._bp_u, self._bp_v
        tol = _INVERT_REL_TOL * self.ell_next
        if np.any(v < -tol) or np.any(v > vs[-1] + tol):
            raise ValueError(f"inverse argument outside [0, ell_{self.k + 1}]")
        v = np.clip(v, 0.0, vs[-1])
        out = np.empty_like(v)

        left_lin = (v >= vs[1]) & (v <= vs[2])
        right_lin = (v > vs[2]) & (v <= vs[3])
        out[left_lin] = (v[left_lin] - self._intercept(False)) / self.slope_left
        out[right_lin] = (v[right_lin] - self._intercept(True)) / self.slope_right

        for lo_u, hi_u, lo_v, hi_v, mask in (
                (us[0], us[1], vs[0], vs[1], v < vs[1]),
                (us[3], us[4], vs[3], vs[4], v > vs[3])):
            if not np.any(mask):
                continue
            vv = v[mask]
            lo = np.full(vv.shape, lo_u)
            hi = np.full(vv.shape, hi_u)
            u = lo_u + (hi_u - lo_u) * (vv - lo_v) / (hi_v - lo_v)
            converged = False
            for _ in range(_INVERT_MAX_ITER):
                f = self.value(u) - vv
                if np.all(np.abs(f) <= tol):
                    converged = True
                    break
                hi = np.where(f > 0.0, u, hi)
                lo = np.where(f > 0.0, lo, u)
                un = u - f / self.deriv(u)
                outside = (un <= lo) | (un >= hi)
                un = np.where(outside, 0.5 * (lo + hi), un)
                u = np.where(np.abs(f) <= tol, u, un)
            if not converged:
                raise RuntimeError(f"inversion of h_{self.k} failed to converge")
            out[mask] = u
        return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# the assembled homeomorphism
# ---------------------------------------------------------------------------

class CircleHomeo:
    """Piecewise circle homeomorphism with exact wandering-gap dynamics."""

    def __init__(self, table: GapTable, seqs, profiles: ProfileSet,
                 swap_gamma: bool = False):
        self.table = table
        self.seqs = seqs
        self.profiles = profiles
        self.swap_gamma = swap_gamma
        self.M = table.M
        self.local = {}
        for k in range(-self.M, self.M):
            plus = (k >= 1) != swap_gamma
            self.local[k] = LocalDiffeo(
                k=k, ell=float(seqs.ell(k)), ell_next=float(seqs.ell(k + 1)),
                K=float(seqs.K(k)), alpha=float(seqs.alpha(k)),
                gamma_kind="plus" if plus else "minus",
                eta=profiles.eta,
                gamma=profiles.gamma_plus if plus else profiles.gamma_minus)
        self._build_pieces()

    # -- construction ------------------------------------------------------

    def _psi_eval(self, t: float) -> float:
        """Placement map at a residual point: gap mass below plus spread tail."""
        rank = int(np.searchsorted(self._sorted_t, t, side="right"))
        return float(self._gap_cummass[rank]) + self.table.residual_mass * float(t)

    def _atom_free_dist(self, t: float) -> float:
        """Circular distance from t to the nearest atom other than t itself."""
        st = self._sorted_t
        n = len(st)
        j = int(np.searchsorted(st, t, side="left"))
        is_atom = j < n and st[j] == t
        lo = st[j - 1] if j > 0 else st[-1] - 1.0
        if is_atom:
            hi = st[j + 1] if j + 1 < n else st[0] + 1.0
        else:
            hi = st[j] if j < n else st[0] + 1.0
        return min(t - lo, hi - t)

    def _build_pieces(self):
        tb, M = self.table, self.M
        order = tb.sorted_to_k + M
        self._sorted_t = tb.orbit_t[order]
        self._gap_cummass = np.concatenate(([0.0], np.cumsum(tb.ell[order])))
        res = tb.residual_mass
        omega = tb.omega

        def circ_dist(a, b):
            d = abs(a - b) % 1.0
            return min(d, 1.0 - d)

        t_star = float(frac_part(tb.t_of(-M) - omega))   # preimage of the -M atom
        t_prime = float(frac_part(tb.t_of(M) + omega))   # image of the M atom
        t_gap_hi = float(tb.t_of(M))
        t_gap_lo = float(tb.t_of(-M))

        cross1 = circ_dist(t_star, t_gap_hi)
        cross2 = circ_dist(t_gap_lo, t_prime)
        w_A = 0.3 * min(self._atom_free_dist(t_star), self._atom_free_dist(t_gap_lo),
                        cross1, cross2)
        w_B = 0.3 * min(self._atom_free_dist(t_prime), self._atom_free_dist(t_gap_hi),
                        cross1, cross2)
        if not (w_A > 0.0 and w_B > 0.0):
            raise AssertionError("degenerate patch width at the truncation boundary")
        self.patch_widths = (w_A, w_B)

        # anchors: (x_lo, x_hi, y_lo_raw, y_width, kind, k)
        anchors = []
        for k in range(-M, M):
            lam = float(tb.lam_of(k))
            anchors.append((lam, lam + float(tb.ell_of(k)),
                            float(tb.lam_of(k + 1)), float(tb.ell_of(k + 1)),
                            _GAP, k))
        lamM, ellM = float(tb.lam_of(M)), float(tb.ell_of(M))
        anchors.append((lamM - res * w_B, lamM + ellM + res * w_B,
                        self._psi_eval(t_prime - w_B), 2.0 * res * w_B,
                        _AFFINE, None))
        lamN, ellN = float(tb.lam_of(-M)), float(tb.ell_of(-M))
        anchors.append((self._psi_eval(t_star - w_A), self._psi_eval(t_star + w_A),
                        lamN - res * w_A, ellN + 2.0 * res * w_A,
                        _AFFINE, None))
        anchors.sort(key=lambda a: a[0])

        # fill the stretches between consecutive anchors with affine transport
        pieces = []
        n_anch = len(anchors)
        for i, a in enumerate(anchors):
            pieces.append(a)
            nxt = anchors[(i + 1) % n_anch]
            x_lo = a[1]
            x_hi = nxt[0] + (1.0 if i == n_anch - 1 else 0.0)
            if x_hi < x_lo - 1e-12:
                raise AssertionError("anchor pieces overlap")
            if x_hi - x_lo <= 0.0:
                continue
            y_lo = (a[2] + a[3]) % 1.0
            width = nxt[2] - y_lo
            if width < -1e-9:
                width += 1.0
            if width <= 0.0:
                raise AssertionError("transport piece with nonpositive image width")
            pieces.append((x_lo, x_hi, y_lo, width, _AFFINE, None))

        if pieces[0][0] != 0.0:
            raise AssertionError("piece table must start at x = 0")

        self._x_lo = np.array([p[0] for p in pieces])
        self._kind = np.array([p[4] for p in pieces], dtype=int)
        self._gap_k = np.array([p[5] if p[4] == _GAP else 10**9 for p in pieces],
                               dtype=int)
        x_hi = np.array([p[1] for p in pieces])
        widths = np.array([p[3] for p in pieces])
        seam = 1.0 - float(np.sum(widths))
        if abs(seam) > 1e-10:
            raise AssertionError(f"image widths sum to 1 {seam:+.3e}")
        # absorb the closing seam into the widest transport piece so the lift
        # closes up to period 1 exactly
        j = int(np.argmax(np.where(self._kind == _AFFINE, widths, -1.0)))
        widths[j] += seam
        self._y_lo = np.concatenate(([pieces[0][2]],
                                     pieces[0][2] + np.cumsum(widths)))
        self._widths = widths
        self._slope = widths / (x_hi - self._x_lo)
        self.n_pieces = len(pieces)
        self.y_start = float(self._y_lo[0])

        if np.any(np.diff(self._x_lo) <= 0.0) or np.any(self._slope <= 0.0):
            raise AssertionError("piece table is not strictly monotone")

    # -- evaluation --------------------------------------------------------

    def lift(self, x: float) -> float:
        """Continuous increasing lift with g~(x+1) = g~(x)+1 exactly."""
        n = math.floor(x)
        fr = x - n
        i = int(np.searchsorted(self._x_lo, fr, side="right")) - 1
        if self._kind[i] == _GAP:
            h = self.local[int(self._gap_k[i])]
            val = self._y_lo[i] + h.value(fr - self._x_lo[i])
        else:
            val = self._y_lo[i] + self._slope[i] * (fr - self._x_lo[i])
        return n + float(val)

    def eval(self, x: float) -> float:
        v = self.lift(x)
        return v - math.floor(v)

    def inverse_lift(self, y: float) -> float:
        m = math.floor(y - self.y_start)
        yf = y - m
        i = min(int(np.searchsorted(self._y_lo, yf, side="right")) - 1,
                self.n_pieces - 1)
        if self._kind[i] == _GAP:
            h = self.local[int(self._gap_k[i])]
            x = self._x_lo[i] + h.invert(yf - self._y_lo[i])
        else:
            x = self._x_lo[i] + (yf - self._y_lo[i]) / self._slope[i]
        return float(x) + m

    def inverse_eval(self, y: float) -> float:
        v = self.inverse_lift(y)
        return v - math.floor(v)

    def lift_many(self, xs) -> np.ndarray:
        """Vectorized lift, grouping points by piece."""
        xs = np.asarray(xs, dtype=float)
        ns = np.floor(xs)
        fr = xs - ns
        idx = np.searchsorted(self._x_lo, fr, side="right") - 1
        out = np.empty_like(fr)
        aff = self._kind[idx] == _AFFINE
        ia = idx[aff]
        out[aff] = self._y_lo[ia] + self._slope[ia] * (fr[aff] - self._x_lo[ia])
        for i in np.unique(idx[~aff]):
            sel = idx == i
            h = self.local[int(self._gap_k[i])]
            out[sel] = self._y_lo[i] + h.value(fr[sel] - self._x_lo[i])
        return ns + out

    def inverse_lift_many(self, ys) -> np.ndarray:
        """Vectorized inverse lift, grouping points by piece."""
        ys = np.asarray(ys, dtype=float)
        ms = np.floor(ys - self.y_start)
        yf = ys - ms
        idx = np.minimum(np.searchsorted(self._y_lo, yf, side="right") - 1,
                         self.n_pieces - 1)
        out = np.empty_like(yf)
        aff = self._kind[idx] == _AFFINE
        ia = idx[aff]
        out[aff] = self._x_lo[ia] + (yf[aff] - self._y_lo[ia]) / self._slope[ia]
        for i in np.unique(idx[~aff]):
            sel = idx == i
            h = self.local[int(self._gap_k[i])]
            out[sel] = self._x_lo[i] + h.invert(yf[sel] - self._y_lo[i])
        return out + ms

    # -- derivatives -------------------------------------------------------

    def _gap_deriv(self, i: int, fr: float, side, order: int) -> float:
        h = self.local[int(self._gap_k[i])]
        u = fr - self._x_lo[i]
        half = 0.5 * h.ell
        # snap within rounding of the midpoint so the side flag governs
        # there; the window covers the global-to-local coordinate rounding
        # (a few ulp at circle scale) and is far below any gap width
        if abs(u - half) <= 8.0 * _EPS:
            u = half
        return h.deriv(u, side=side) if order == 1 else h.second_deriv(u, side=side)

    def derivative(self, x: float, side: str = "right") -> float:
        fr = float(frac_part(x))
        i = int(np.searchsorted(self._x_lo, fr, side="right")) - 1
        if side == "left" and fr == self._x_lo[i]:
            j = (i - 1) % self.n_pieces
            if self._kind[j] == _GAP:
                h = self.local[int(self._gap_k[j])]
                return float(h.deriv(h.ell, side="left"))
            return float(self._slope[j])
        if self._kind[i] == _GAP:
            return float(self._gap_deriv(i, fr, side, 1))
        return float(self._slope[i])

    def second_derivative(self, x: float, side: str = "right") -> float:
        fr = float(frac_part(x))
        i = int(np.searchsorted(self._x_lo, fr, side="right")) - 1
        if self._kind[i] == _GAP:
            return float(self._gap_deriv(i, fr, side, 2))
        return 0.0

    def inverse_derivative(self, y: float, side: str = "right") -> float:
        return 1.0 / self.derivative(self.inverse_eval(y), side=side)

    def inverse_second_derivative(self, y: float, side: str = "right") -> float:
        x = self.inverse_eval(y)
        d = self.derivative(x, side=side)
        return -self.second_derivative(x, side=side) / d**3


class RigidRotation:
    """Test double: the rotation by omega, with the same evaluation surface."""

    def __init__(self, omega: float):
        self.omega = float(omega)

    def lift(self, x):
        return x + self.omega

    def eval(self, x):
        v = x + self.omega
        return v - math.floor(v)

    def inverse_lift(self, y):
        return y - self.omega

    def inverse_eval(self, y):
        v = y - self.omega
        return v - math.floor(v)

    def lift_many(self, xs):
        return np.asarray(xs, dtype=float) + self.omega

    def inverse_lift_many(self, ys):
        return np.asarray(ys, dtype=float) - self.omega

    def derivative(self, x, side="right"):
        return 1.0

    def second_derivative(self, x, side="right"):
        return 0.0

    def inverse_derivative(self, y, side="right"):
        return 1.0

    def inverse_second_derivative(self, y, side="right"):
        return 0.0


def build_circle_homeo(table, seqs, profiles, swap_gamma=False) -> CircleHomeo:
    return CircleHomeo(table, seqs, profiles, swap_gamma=swap_gamma)


def local_diffeo_eval(g: CircleHomeo, k: int, u, order=0):
    """h_k value or derivative in local coordinates; order in {0,'1L','1R','2'}.

    Order 2 exactly at the midpoint carries one-sided data only and raises
    OneSidedLimitRequired.
    """
    h = g.local[k]
    if order == 0:
        return h.value(u)
    if order in ("1L", "1R"):
        return h.deriv(u, side="left" if order == "1L" else "right")
    if order == 2:
        return h.second_deriv(u)
    raise ValueError("order must be one of 0, '1L', '1R', 2")


def local_diffeo_invert(g: CircleHomeo, k: int, v):
    """u in [0, ell_k] with h_k(u) = v."""
    return g.local[k].invert(v)


# ---------------------------------------------------------------------------
# operations on the built map
# ---------------------------------------------------------------------------

def homeo_eval(g, x, direction: str = "fwd", as_lift: bool = False):
    """Evaluate g or its inverse at a circle point or lift."""
    if direction == "fwd":
        return g.lift(x) if as_lift else g.eval(x)
    if direction == "inv":
        return g.inverse_lift(x) if as_lift else g.inverse_eval(x)
    raise ValueError("direction must be 'fwd' or 'inv'")


def rotation_number_estimate(g, x0: float, n: int) -> float:
    """(g~^n(x0) - x0)/n with exact winding bookkeeping."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = float(x0)
    for _ in range(n):
        x = g.lift(x)
    return (x - x0) / n


def orbit_lift(g, x0: float, n: int) -> np.ndarray:
    """The lift orbit x0, g~(x0), ..., g~^n(x0)."""
    out = np.empty(n + 1)
    out[0] = x = float(x0)
    for i in range(1, n + 1):
        x = g.lift(x)
        out[i] = x
    return out


def wandering_interval_check(g: CircleHomeo, n_max: int) -> dict:
    """Iterate the endpoints of I_0 and compare against the stored table."""
    tb = g.table
    if n_max > tb.M:
        raise ValueError("n_max exceeds the stored range")
    dev_fwd = 0.0
    a = float(tb.lam_of(0))
    b = a + float(tb.ell_of(0))
    for n in range(1, n_max + 1):
        a, b = g.eval(a), g.eval(b)
        dev_fwd = max(dev_fwd,
                      abs(a - float(tb.lam_of(n))),
                      abs(b - (float(tb.lam_of(n)) + float(tb.ell_of(n)))))
    dev_bwd = 0.0
    a = float(tb.lam_of(0))
    b = a + float(tb.ell_of(0))
    for n in range(1, n_max + 1):
        a, b = g.inverse_eval(a), g.inverse_eval(b)
        dev_bwd = max(dev_bwd,
                      abs(a - float(tb.lam_of(-n))),
                      abs(b - (float(tb.lam_of(-n)) + float(tb.ell_of(-n)))))
    lengths = np.asarray(tb.ell_of(np.arange(0, n_max + 1)), dtype=float)
    return {
        "n_max": n_max,
        "max_endpoint_deviation_forward": dev_fwd,
        "max_endpoint_deviation_backward": dev_bwd,
        "lengths_decreasing": bool(np.all(np.diff(lengths) < 0)),
    }


def derivative_jump_table(g: CircleHomeo) -> list:
    """(k, left derivative, right derivative, jump) at each gap midpoint."""
    rows = []
    for k in range(-g.M, g.M):
        h = g.local[k]
        u = 0.5 * h.ell
        left = float(h.deriv(u, side="left"))
        right = float(h.deriv(u, side="right"))
        rows.append((k, left, right, right - left))
    return rows


def derivative_jump_scan(g: CircleHomeo, n_samples: int, seed: int = 0) -> dict:
    """One-sided derivative agreement at random non-midpoint circle points."""
    rng = np.random.default_rng(seed)
    xs = rng.random(n_samples)
    worst = 0.0
    for x in xs:
        d = abs(g.derivative(x, side="right") - g.derivative(x, side="left"))
        worst = max(worst, d)
    return {"n_samples": n_samples, "max_offmid_jump": worst}


def dump_orbit_csv(g, x0: float, n: int, path) -> None:
    """Orbit dump with columns (n, theta, lift)."""
    lifts = orbit_lift(g, x0, n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "theta", "lift"])
        for i, v in enumerate(lifts):
            w.writerow([i, repr(float(frac_part(v))), repr(float(v))])


def dump_wandering_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
