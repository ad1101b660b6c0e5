"""Moduli of continuity and comparison functionals built on them.

A modulus here is a continuous increasing function rho on [0, inf) that
vanishes only at zero. Two scalar functionals drive every comparison
argument in the package: the integral transform phi(w) = int_1^w dv/rho(v),
negative below one and zero at one, and its shifted inverse
psi(v, w) = phi^{-1}(phi(v) + w), defined while phi(v) + w stays below
phi(inf). Classic closed forms (powers, linear, logarithmic correction)
are built in; everything else runs through quadrature in the log
variable plus bracketed root finding, so tabulated moduli work too.

The divergence test at zero (whether int_0 rho(v)^{-e} dv is infinite
for e = 1 or 2) is what separates uniqueness-grade moduli from the rest.
"""

import math

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .exceptions import DomainError, ValidationError

_ENDPOINT_CUTOFF = 1e12
_CONE_GRID = np.logspace(-8.0, 8.0, 64)

UNKNOWN = "unknown"


class Modulus:
    """Base class; subclasses implement value() on positive scalars."""

    #: exponent alpha when rho is exactly a power, else None
    power_exponent = None

    def value(self, v):
        raise NotImplementedError

    def __call__(self, v):
        arr = np.asarray(v, dtype=np.float64)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        if np.any(arr < 0):
            raise DomainError("modulus arguments must be nonnegative")
        out = np.asarray([self.value(float(x)) if x > 0 else 0.0
                          for x in arr])
        return float(out[0]) if scalar else out

    def verify_cone(self, grid=None):
        """Numerical cone report on a logarithmic grid.

        Checks positivity and monotonicity of sampled values plus decay
        toward zero at the left end. A report with ok=False does not
        prevent construction; the functionals refuse to run on it.
        """
        grid = _CONE_GRID if grid is None else np.asarray(grid)
        vals = self(grid)
        positive = bool(np.all(vals > 0))
        increasing = bool(np.all(np.diff(vals) >= 0))
        vanishes = bool(self(float(grid[0])) < max(1.0, vals[-1]))
        ok = positive and increasing and vanishes
        return {"positive": positive, "is_increasing": increasing,
                "vanishes_at_zero": vanishes, "ok": ok}

    def require_cone(self):
        report = getattr(self, "_cone_report", None)
        if report is None:
            report = self.verify_cone()
            self._cone_report = report
        if not report["ok"]:
            raise ValidationError(
                "modulus fails the cone check: %r" % (report,))

    # hooks for closed forms; None means "use the numeric path"

    def phi_closed(self, w):
        return None

    def phi_inverse_closed(self, y):
        return None

    def phi_endpoints_closed(self):
        return None

    def diverges_closed(self, exponent):
        return None


class PowerModulus(Modulus):
    """rho(v) = v**alpha for alpha > 0."""

    def __init__(self, alpha):
        if alpha <= 0:
            raise ValidationError("alpha must be positive")
        self.alpha = float(alpha)
        self.power_exponent = self.alpha

    def value(self, v):
        return v**self.alpha

    def phi_closed(self, w):
        if self.alpha == 1.0:
            return math.log(w)
        s = 1.0 - self.alpha
        return (w**s - 1.0) / s

    def phi_inverse_closed(self, y):
        if self.alpha == 1.0:
            return math.exp(y)
        s = 1.0 - self.alpha
        arg = 1.0 + s * y
        if s > 0:
            # below the lower endpoint the comparison value collapses to 0
            return 0.0 if arg <= 0 else arg ** (1.0 / s)
        if arg <= 0:
            raise DomainError("value beyond the finite upper endpoint")
        return arg ** (1.0 / s)

    def phi_endpoints_closed(self):
        if self.alpha == 1.0:
            return (-math.inf, math.inf)
        s = 1.0 - self.alpha
        if s > 0:
            return (-1.0 / s, math.inf)
        return (-math.inf, -1.0 / s)

    def diverges_closed(self, exponent):
        return self.alpha * exponent >= 1.0

    def __repr__(self):
        return "PowerModulus(%g)" % self.alpha


class LinearModulus(Modulus):
    """rho(v) = c * v; the Lipschitz member of the family.

    c = 0 is storable (a degenerate cap) but fails the cone check, so
    the functionals reject it.
    """

    def __init__(self, c):
        if c < 0:
            raise ValidationError("slope must be nonnegative")
        self.c = float(c)
        if c > 0:
            self.power_exponent = 1.0

    def value(self, v):
        return self.c * v

    def phi_closed(self, w):
        return math.log(w) / self.c

    def phi_inverse_closed(self, y):
        return math.exp(self.c * y)

    def phi_endpoints_closed(self):
        return (-math.inf, math.inf)

    def diverges_closed(self, exponent):
        return True

    def __repr__(self):
        return "LinearModulus(%g)" % self.c


class LogModulus(Modulus):
    """rho(v) = a * v * (|log v| + 1), the borderline superlinear modulus."""

    def __init__(self, a):
        if a <= 0:
            raise ValidationError("scale a must be positive")
        self.a = float(a)

    def value(self, v):
        return self.a * v * (abs(math.log(v)) + 1.0)

    def phi_closed(self, w):
        if w >= 1.0:
            return math.log(1.0 + math.log(w)) / self.a
        return -math.log(1.0 - math.log(w)) / self.a

    def phi_inverse_closed(self, y):
        if y >= 0.0:
            return math.exp(math.exp(self.a * y) - 1.0)
        return math.exp(1.0 - math.exp(-self.a * y))

    def phi_endpoints_closed(self):
        return (-math.inf, math.inf)

    def diverges_closed(self, exponent):
        # near zero rho behaves like a*v*(1 - log v); both the first and
        # the squared reciprocal integrals lose to the 1/v factor
        return True

    def __repr__(self):
        return "LogModulus(%g)" % self.a


class MaxOfModulus(Modulus):
    """Pointwise maximum of two moduli; the cone is closed under max."""

    def __init__(self, first, second):
        if not isinstance(first, Modulus) or not isinstance(second, Modulus):
            raise ValidationError("both components must be moduli")
        self.first = first
        self.second = second

    def value(self, v):
        return max(self.first.value(v), self.second.value(v))

    def diverges_closed(self, exponent):
        # the larger component controls the reciprocal integral near 0
        probe = 1e-12
        a = self.first.value(probe)
        b = self.second.value(probe)
        dominant = self.first if a >= b else self.second
        return osgood_diverges_at_zero(dominant, exponent)

    def __repr__(self):
        return "MaxOfModulus(%r, %r)" % (self.first, self.second)


class TabulatedModulus(Modulus):
    """Modulus known on a logarithmic grid of points.

    Between nodes the value is interpolated linearly in log-log space;
    beyond the grid it is extrapolated as a power law using the edge
    slopes, which also drive the divergence test.
    """

    def __init__(self, v_grid, values):
        v = np.asarray(v_grid, dtype=np.float64)
        r = np.asarray(values, dtype=np.float64)
        if v.ndim != 1 or len(v) < 2 or np.any(np.diff(v) <= 0):
            raise ValidationError("v_grid must be strictly increasing")
        if r.shape != v.shape:
            raise ValidationError("one value per grid point required")
        if np.any(v <= 0) or np.any(r <= 0):
            raise ValidationError("tabulated modulus needs positive data")
        self._log_v = np.log(v)
        self._log_r = np.log(r)
        self.left_slope = float((self._log_r[1] - self._log_r[0]) /
                                (self._log_v[1] - self._log_v[0]))
        self.right_slope = float((self._log_r[-1] - self._log_r[-2]) /
                                 (self._log_v[-1] - self._log_v[-2]))

    def value(self, v):
        lv = math.log(v)
        if lv <= self._log_v[0]:
            lr = self._log_r[0] + self.left_slope * (lv - self._log_v[0])
        elif lv >= self._log_v[-1]:
            lr = self._log_r[-1] + self.right_slope * (lv - self._log_v[-1])
        else:
            lr = float(np.interp(lv, self._log_v, self._log_r))
        return math.exp(lr)

    def diverges_closed(self, exponent):
        s = self.left_slope
        if abs(s * exponent - 1.0) < 0.05:
            return UNKNOWN
        return s * exponent >= 1.0

    def __repr__(self):
        return "TabulatedModulus(%d points)" % len(self._log_v)


def _phi_numeric(rho, w):
    # integrate dv/rho(v) from 1 to w in the log variable u = log v
    f = lambda u: math.exp(u) / rho.value(math.exp(u))
    if w == 1.0:
        return 0.0
    a, b = (0.0, math.log(w)) if w > 1.0 else (math.log(w), 0.0)
    val, err = quad(f, a, b, epsabs=1e-10, epsrel=1e-10, limit=200)
    if not math.isfinite(val):
        raise DomainError("quadrature for the modulus transform failed")
    return val if w > 1.0 else -val


def phi_rho(rho, w, force_numeric=False):
    """Integral transform int_1^w dv / rho(v) for w > 0.

    Negative below one, zero at one. force_numeric skips the closed
    forms, which is how the quadrature path gets cross-checked.
    """
    rho.require_cone()
    w = float(w)
    if w <= 0:
        raise DomainError("phi is defined for w > 0")
    if not force_numeric:
        closed = rho.phi_closed(w)
        if closed is not None:
            return closed
    return _phi_numeric(rho, w)


def _endpoint_numeric(rho, side):
    """Probe the transform toward 0+ or infinity.

    Returns a float (possibly +-inf) or UNKNOWN. Uses three probes a
    few decades apart: geometric contraction of the increments means a
    finite limit, clear growth means divergence, anything else is
    reported as indeterminate.
    """
    if side == "lower":
        probes = [1e-4, 1e-8, 1e-12]
        sign = -1.0
    else:
        probes = [1e4, 1e8, 1e12]
        sign = 1.0
    try:
        vals = [_phi_numeric(rho, p) for p in probes]
    except Exception:
        return UNKNOWN
    if abs(vals[-1]) > _ENDPOINT_CUTOFF:
        return sign * math.inf
    inc1 = vals[1] - vals[0]
    inc2 = vals[2] - vals[1]
    if abs(inc2) < 1e-14:
        return vals[-1]
    if abs(inc1) > 0 and abs(inc2) / abs(inc1) < 0.7:
        r = abs(inc2) / abs(inc1)
        return vals[-1] + inc2 * r / (1.0 - r)
    if abs(inc1) > 0 and abs(inc2) / abs(inc1) > 1.05:
        return sign * math.inf
    return UNKNOWN


def phi_rho_endpoints(rho):
    """Limits of the transform at 0+ and infinity.

    Each endpoint is a float (with +-inf once the magnitude passes
    1e12) or the string "unknown" when the numeric probes cannot tell.
    """
    rho.require_cone()
    closed = rho.phi_endpoints_closed()
    if closed is not None:
        return closed
    return (_endpoint_numeric(rho, "lower"), _endpoint_numeric(rho, "upper"))


def in_domain(rho, v, w):
    """Whether (v, w) admits the shifted inverse: phi(v) + w < phi(inf)."""
    rho.require_cone()
    v = float(v)
    w = float(w)
    if v < 0:
        raise DomainError("v must be nonnegative")
    lower, upper = phi_rho_endpoints(rho)
    if upper == UNKNOWN:
        raise DomainError("upper endpoint is numerically indeterminate")
    if upper == math.inf:
        return True
    if v == 0.0:
        if lower == UNKNOWN:
            raise DomainError("lower endpoint is numerically indeterminate")
        phi_v = lower
    else:
        phi_v = phi_rho(rho, v)
    return bool(phi_v + w < upper)


def psi_rho(rho, v, w, force_numeric=False, rtol=1e-10):
    """Shifted inverse psi(v, w) = phi^{-1}(phi(v) + w).

    v >= 0 and w may be negative; a target below the lower endpoint of
    the transform collapses to 0, one at or above the upper endpoint
    raises DomainError. psi(v, 0) returns v exactly.
    """
    rho.require_cone()
    v = float(v)
    w = float(w)
    if v < 0:
        raise DomainError("v must be nonnegative")
    if w == 0.0:
        return v
    lower, upper = phi_rho_endpoints(rho)
    if v == 0.0:
        if lower == UNKNOWN:
            raise DomainError("lower endpoint is numerically indeterminate")
        if lower == -math.inf:
            return 0.0
        target = lower + w
    else:
        target = phi_rho(rho, v, force_numeric=force_numeric) + w
    if upper == UNKNOWN or lower == UNKNOWN:
        raise DomainError("transform endpoint is numerically indeterminate")
    if upper != math.inf and target >= upper:
        raise DomainError(
            "phi(v) + w = %g reaches the upper endpoint %g" % (target, upper))
    if lower != -math.inf and target <= lower:
        return 0.0
    if not force_numeric:
        closed = rho.phi_inverse_closed(target)
        if closed is not None:
            return closed
    phi = lambda x: phi_rho(rho, x, force_numeric=force_numeric)
    lo = hi = max(v, 1e-300) if v > 0 else 1.0
    # expand the bracket multiplicatively; phi is increasing
    for _ in range(600):
        if phi(hi) >= target:
            break
        hi *= 4.0
        if hi > 1e300:
            raise DomainError("bracket expansion overflowed upward")
    for _ in range(600):
        if phi(lo) <= target:
            break
        lo /= 4.0
        if lo < 1e-300:
            return 0.0
    if lo == hi:
        return lo
    root = brentq(lambda x: phi(x) - target, lo, hi,
                  rtol=max(rtol, 1e-14), maxiter=300)
    return float(root)


def osgood_diverges_at_zero(rho, exponent):
    """Whether int_0 rho(v)**(-exponent) dv diverges, exponent 1 or 2.

    Divergence at the first power is the uniqueness-grade property of a
    drift modulus; the squared version is the diffusion-grade one.
    Returns True, False, or "unknown" for tabulated data whose edge
    slope is too close to the threshold.
    """
    if exponent not in (1, 2):
        raise ValidationError("exponent must be 1 or 2")
    rho.require_cone()
    closed = rho.diverges_closed(exponent)
    if closed is not None:
        return closed
    raise ValidationError(
        "no divergence rule for modulus %r" % (type(rho).__name__,))


class BihariCurve:
    """Comparison bound along a grid with its first failure time."""

    def __init__(self, grid, values, t0_plus):
        self.grid = grid
        self.values = values
        self.t0_plus = t0_plus

    @property
    def blew_up(self):
        return math.isfinite(self.t0_plus)


def bihari_bound_curve(rho0, initial, additive, multiplicative, grid):
    """Comparison bound psi(initial + int add, int mult) on a grid.

    additive and multiplicative are CoefficientFn-like objects with
    exact `integral`, or constants. Nodes past the domain of the
    shifted inverse get NaN; t0_plus records the first failing node
    (+inf if none fails). The additive accumulation must stay
    nonnegative.
    """
    from .coeff_calc import CoefficientFn

    rho0.require_cone()
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise ValidationError("grid must be strictly increasing, length >= 2")
    if initial < 0:
        raise ValidationError("initial value must be nonnegative")
    domain = (grid[0], grid[-1] + 1.0)
    if not hasattr(additive, "integral"):
        additive = CoefficientFn.constant(float(additive), domain=domain)
    if not hasattr(multiplicative, "integral"):
        multiplicative = CoefficientFn.constant(float(multiplicative),
                                                domain=domain)
    values = np.empty_like(grid)
    t0_plus = math.inf
    v = float(initial)
    w = 0.0
    for i, t in enumerate(grid):
        if i > 0:
            v += additive.integral(grid[i - 1], t)
            w += multiplicative.integral(grid[i - 1], t)
        if v < -1e-12:
            raise ValidationError(
                "additive accumulation went negative at t=%g" % t)
        v = max(v, 0.0)
        if math.isfinite(t0_plus) or not in_domain(rho0, v, w):
            if not math.isfinite(t0_plus):
                t0_plus = float(t)
            values[i] = math.nan
            continue
        values[i] = psi_rho(rho0, v, w)
    return BihariCurve(grid, values, t0_plus)
