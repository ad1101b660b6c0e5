"""One-sided smoothing of the absolute value with a curvature budget.

Given a modulus rho whose squared reciprocal is non-integrable at zero,
one can place, for each index n, a cutoff pair a_n < a_prev with
int_{a_n}^{a_prev} rho(v)**-2 dv = n and a smooth convex element psi_n
that matches |.| up to a_prev: psi_n is zero below a_n, has derivative
rising from 0 to 1 across the band, slope one beyond it, and curvature
bounded by (2/n) * rho(v)**-2. The point of the budget: second-order
terms of psi_n applied to a process pick up at most 2/n times the
squared diffusion modulus, which vanishes as n grows while
x - a_prev <= psi_n(x) <= x pins the approximation error.

The curvature profile is chosen in the normalized band coordinate
z(v) = (1/n) int_{a_n}^v rho**-2, where the budget reads q(z) <= 2 and
the mass constraint reads int_0^1 q = 1: a piecewise-quadratic C1
window with quarter-width ramps and plateau 4/3 satisfies both with
headroom, peaking at two thirds of the admissible ceiling.
"""

import math

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .exceptions import ConvergenceError, DomainError, ValidationError
from .osgood_bihari import Modulus, PowerModulus, osgood_diverges_at_zero

_THETA = 0.25
_PLATEAU = 1.0 / (1.0 - _THETA)
_DENSE_GRID = 65537


def _window_density(z):
    """Piecewise-quadratic C1 window q on [0, 1]: mass 1, peak 4/3."""
    z = np.asarray(z, dtype=np.float64)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.zeros_like(z)
    h, th = _PLATEAU, _THETA
    inside = (z >= 0.0) & (z <= 1.0)
    zm = np.minimum(z, 1.0 - z)  # symmetric profile
    ramp_lo = inside & (zm <= th / 2)
    ramp_hi = inside & (zm > th / 2) & (zm < th)
    plateau = inside & (zm >= th)
    out[ramp_lo] = h * 2.0 * (zm[ramp_lo] / th) ** 2
    out[ramp_hi] = h * (1.0 - 2.0 * (1.0 - zm[ramp_hi] / th) ** 2)
    out[plateau] = h
    return float(out[0]) if scalar else out


def _window_cumulative_half(z):
    # cumulative of the window on [0, 1/2] via closed-form antiderivatives
    h, th = _PLATEAU, _THETA
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    a = z <= th / 2
    b = (z > th / 2) & (z <= th)
    c = z > th
    out[a] = (2.0 * h / (3.0 * th**2)) * z[a] ** 3
    f_b = lambda x: h * (x + (2.0 * th / 3.0) * (1.0 - x / th) ** 3)
    out[b] = h * th / 12.0 + f_b(z[b]) - f_b(th / 2.0)
    out[c] = h * th / 2.0 + h * (z[c] - th)
    return out


def _window_cumulative(z):
    """Cumulative window mass Q(z) with Q(0) = 0 and Q(1) = 1 exactly."""
    z = np.asarray(z, dtype=np.float64)
    z_cl = np.clip(z, 0.0, 1.0)
    lower = z_cl <= 0.5
    out = np.empty_like(z_cl)
    out[lower] = _window_cumulative_half(z_cl[lower])
    out[~lower] = 1.0 - _window_cumulative_half(1.0 - z_cl[~lower])
    return out


def _band_mass_power(alpha, lo, hi):
    # int_lo^hi v**(-2 alpha) dv in closed form
    if alpha == 0.5:
        return math.log(hi / lo)
    s = 1.0 - 2.0 * alpha
    return (hi**s - lo**s) / s


def _band_mass_quad(rho, lo, hi):
    f = lambda u: math.exp(u) / rho.value(math.exp(u)) ** 2
    val, _ = quad(f, math.log(lo), math.log(hi),
                  epsabs=1e-12, epsrel=1e-12, limit=400)
    return val


class SmoothingElement:
    """One element of the smoothing family for a given modulus.

    Exposes the band [a_n, a_prev], the curvature profile psi_second
    (alias bump), the slope psi_prime and the element psi itself, all
    vectorized over numpy arrays.
    """

    def __init__(self, rho, index, a_prev, a_n):
        self.rho = rho
        self.index = int(index)
        self.a_prev = float(a_prev)
        self.a_n = float(a_n)
        self._log_lo = math.log(a_n)
        self._log_hi = math.log(a_prev)
        self._power_alpha = rho.power_exponent if isinstance(
            rho, PowerModulus) else None
        if self._power_alpha is None:
            us = np.linspace(self._log_lo, self._log_hi, _DENSE_GRID)
            w = np.exp(us) / np.asarray(rho(np.exp(us))) ** 2
            cum = np.concatenate(([0.0], np.cumsum(
                np.diff(us) * (w[1:] + w[:-1]) / 2)))
            self._z_us = us
            self._z_cum = cum / cum[-1]
        # dense grid for the element values (integral of the slope)
        us = np.linspace(self._log_lo, self._log_hi, _DENSE_GRID)
        vs = np.exp(us)
        slopes = self._slope_in_band(vs)
        self._t_vs = vs
        self._t_cum = np.concatenate(([0.0], np.cumsum(
            np.diff(vs) * (slopes[1:] + slopes[:-1]) / 2)))

    # -- band coordinate ------------------------------------------------

    def _z(self, v):
        v = np.asarray(v, dtype=np.float64)
        if self._power_alpha is not None:
            alpha = self._power_alpha
            if alpha == 0.5:
                z = (np.log(v) - self._log_lo) / (self._log_hi - self._log_lo)
                # normalized by n = log(a_prev / a_n) for this modulus
                return z
            s = 1.0 - 2.0 * alpha
            total = (self.a_prev**s - self.a_n**s)
            return (v**s - self.a_n**s) / total
        return np.interp(np.log(v), self._z_us, self._z_cum)

    def _slope_in_band(self, v):
        return _window_cumulative(self._z(v))

    # -- public surface ---------------------------------------------------

    def psi_prime(self, x):
        """Slope of the element: 0 below the band, 1 above it."""
        x = np.asarray(x, dtype=np.float64)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.empty_like(x)
        below = x <= self.a_n
        above = x >= self.a_prev
        mid = ~below & ~above
        out[below] = 0.0
        out[above] = 1.0
        out[mid] = self._slope_in_band(x[mid])
        return float(out[0]) if scalar else out

    def psi_second(self, x):
        """Curvature of the element; nonzero only inside the band."""
        x = np.asarray(x, dtype=np.float64)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.zeros_like(x)
        mid = (x > self.a_n) & (x < self.a_prev)
        if np.any(mid):
            xm = x[mid]
            dens = np.atleast_1d(_window_density(self._z(xm)))
            rho_sq = np.asarray(self.rho(xm)) ** 2
            out[mid] = dens * (1.0 / self.index) / rho_sq
        return float(out[0]) if scalar else out

    # the curvature profile is the defining datum of the element
    bump = psi_second

    def psi(self, x):
        """The element itself: int_0^x psi_prime, pinned to the axis."""
        x = np.asarray(x, dtype=np.float64)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.empty_like(x)
        below = x <= self.a_n
        above = x >= self.a_prev
        mid = ~below & ~above
        out[below] = 0.0
        s_total = self._t_cum[-1]
        out[above] = s_total + (x[above] - self.a_prev)
        if np.any(mid):
            out[mid] = np.interp(x[mid], self._t_vs, self._t_cum)
        return float(out[0]) if scalar else out

    def curvature_ceiling(self, x):
        """Admissible curvature bound (2 / index) * rho(x)**-2."""
        x = np.asarray(x, dtype=np.float64)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.full_like(x, math.inf)
        pos = x > 0
        out[pos] = (2.0 / self.index) / np.asarray(self.rho(x[pos])) ** 2
        return float(out[0]) if scalar else out

    def __repr__(self):
        return "SmoothingElement(index=%d, band=[%.6g, %.6g])" % (
            self.index, self.a_n, self.a_prev)


def _solve_lower_cutoff(rho, index, a_prev):
    """Lower band edge a_n with int_{a_n}^{a_prev} rho**-2 = index."""
    if isinstance(rho, PowerModulus):
        alpha = rho.alpha
        if alpha == 0.5:
            return a_prev * math.exp(-float(index))
        s = 1.0 - 2.0 * alpha
        arg = a_prev**s - s * float(index)
        if arg <= 0:
            raise DomainError(
                "the band mass %d is not reachable below %g" % (index,
                                                                a_prev))
        return arg ** (1.0 / s)
    target = float(index)
    log_hi = math.log(a_prev)
    lo = log_hi - 1.0
    for _ in range(200):
        mass = _band_mass_quad(rho, math.exp(lo), a_prev)
        if mass >= target:
            break
        lo -= 10.0
        if lo < -700.0:
            raise ConvergenceError(
                "cutoff solve ran past the floating point floor")
    else:
        raise ConvergenceError("cutoff bracket expansion failed")
    f = lambda l: _band_mass_quad(rho, math.exp(l), a_prev) - target
    root = brentq(f, lo, log_hi - 1e-15, rtol=1e-13, maxiter=300)
    return math.exp(root)


def build_smoothing(rho, index, a_prev):
    """Build the smoothing element of a given index below a_prev.

    Requires the squared-reciprocal integral of the modulus to diverge
    at zero; otherwise large indices would exhaust the available mass.
    """
    if not isinstance(rho, Modulus):
        raise ValidationError("rho must be a Modulus")
    if index < 1 or int(index) != index:
        raise ValidationError("index must be a positive integer")
    if a_prev <= 0:
        raise ValidationError("a_prev must be positive")
    rho.require_cone()
    diverges = osgood_diverges_at_zero(rho, 2)
    if diverges is not True:
        raise ValidationError(
            "the squared-reciprocal integral must diverge at zero "
            "(got %r); the band mass would run out" % (diverges,))
    a_n = _solve_lower_cutoff(rho, index, a_prev)
    return SmoothingElement(rho, index, a_prev, a_n)


def build_smoothing_sequence(rho, count, a_start=1.0):
    """Chain of elements: band edges a_0 = a_start > a_1 > ... > a_count."""
    if count < 1:
        raise ValidationError("count must be at least 1")
    elements = []
    a_prev = float(a_start)
    for n in range(1, int(count) + 1):
        el = build_smoothing(rho, n, a_prev)
        elements.append(el)
        a_prev = el.a_n
    return elements


def verify_smoothing(element, n_grid=1000, x_max=None):
    """Grid report of the defining identities and inequalities.

    Returns the measured band mass, the worst violation of each
    inequality (slope range, slope one beyond the band, relative
    curvature ceiling, the two-sided pinch of psi against x), and the
    overall maximum. Violations are magnitudes of overshoot; zero means
    the property holds on the grid.
    """
    el = element
    if x_max is None:
        x_max = max(2.0, 3.0 * el.a_prev)
    grid = np.unique(np.concatenate([
        np.logspace(math.log10(max(el.a_n * 1e-2, 1e-300)),
                    math.log10(el.a_prev), n_grid // 2),
        np.linspace(el.a_prev, x_max, n_grid - n_grid // 2),
        [el.a_n, el.a_prev],
    ]))
    slope = el.psi_prime(grid)
    curv = el.psi_second(grid)
    vals = el.psi(grid)
    ceiling = el.curvature_ceiling(grid)
    mass = _band_mass_quad(el.rho, el.a_n, el.a_prev)
    after = grid >= el.a_prev
    in_band = (grid > el.a_n) & (grid < el.a_prev)
    rel_curv = np.zeros_like(grid)
    sel = in_band & np.isfinite(ceiling)
    rel_curv[sel] = (curv[sel] - ceiling[sel]) / ceiling[sel]
    violations = {
        "slope_below_zero": float(max(0.0, -np.min(slope))),
        "slope_above_one": float(max(0.0, np.max(slope) - 1.0)),
        "slope_one_after_band": float(np.max(np.abs(slope[after] - 1.0))
                                      if np.any(after) else 0.0),
        "curvature_ceiling_rel": float(max(0.0, np.max(rel_curv))),
        "psi_above_x": float(max(0.0, np.max(vals - grid))),
        "pinch_gap": float(max(0.0, np.max((grid - el.a_prev) - vals))),
    }
    max_violation = max(violations.values())
    return {
        "band_mass": mass,
        "band_mass_error": abs(mass - el.index),
        "violations": violations,
        "max_violation": max_violation,
        "grid_points": len(grid),
        "passed": max_violation <= 1e-8 and abs(mass - el.index) <= 1e-8,
    }
