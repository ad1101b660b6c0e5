"""Empirical measures, transport distances and domination functionals.

Measures are uniform clouds of n points in R^m. Distances of Wasserstein
type are computed exactly: order statistics in one dimension (any pair of
cloud sizes), optimal assignment in higher dimension (equal sizes). On
top of the metric sit the domination functionals used by the stability
calculus: a functional theta together with a scale c_p certifying
theta(law(X), law(Y)) <= c_p * E|X - Y| over couplings, and the running
integral of theta along a measure path.
"""

import csv
import io

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import DomainError, ValidationError

# exact assignment is cubic; beyond this size it is the wrong tool
MAX_ASSIGNMENT_SIZE = 2048


def _as_points(points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ValidationError("points must be an (n, m) array, got shape %s"
                              % (pts.shape,))
    if pts.shape[0] < 1:
        raise ValidationError("a measure needs at least one point")
    if not np.all(np.isfinite(pts)):
        raise ValidationError("points must be finite")
    return pts


class EmpiricalMeasure:
    """Uniformly weighted cloud of n points in R^m."""

    def __init__(self, points):
        self.points = _as_points(points)
        self.n, self.m = self.points.shape

    @classmethod
    def point_mass(cls, x, n=1, m=None):
        """n copies of a single point. Scalar x with m set gives x*ones."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0:
            x = np.full(m if m is not None else 1, float(x))
        return cls(np.tile(x, (n, 1)))

    def abs_moment(self, p=1.0):
        """Mean of |x_i|^p with the Euclidean norm, p > 0."""
        if p <= 0:
            raise ValidationError("moment order must be positive")
        norms = np.sqrt(np.sum(self.points**2, axis=1))
        return float(np.mean(norms**p))

    def mean(self):
        return self.points.mean(axis=0)

    def to_csv(self, path):
        """One point per row, columns x1..xm, 17 significant digits."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x%d" % (j + 1) for j in range(self.m)])
            for row in self.points:
                writer.writerow(["%.17g" % v for v in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or not header[0].startswith("x"):
                raise ValidationError("expected header x1..xm in %s" % path)
            rows = [[float(v) for v in row] for row in reader if row]
        return cls(np.asarray(rows))

    def __repr__(self):
        return "EmpiricalMeasure(n=%d, m=%d)" % (self.n, self.m)


def moment(mu, p=1.0):
    """Absolute p-th moment of the cloud, (1/n) sum |x_i|^p."""
    return mu.abs_moment(p)


def _wp_sorted_1d(x, y, p):
    # quantile coupling; exact for uniform clouds of equal size
    xs = np.sort(x)
    ys = np.sort(y)
    d = np.abs(xs - ys)
    if p == 1.0:
        return float(np.mean(d))
    return float(np.mean(d**p) ** (1.0 / p))


def _wp_merged_1d(x, y, p):
    """Exact 1-d distance for clouds of different sizes.

    Integrates |quantile_x - quantile_y|^p over (0, 1). Both quantile
    functions are steps with breaks at i/n, so the integral is a finite
    sum over the merged break grid.
    """
    xs = np.sort(x)
    ys = np.sort(y)
    nx, ny = len(xs), len(ys)
    cuts = np.union1d(np.arange(1, nx + 1) / nx, np.arange(1, ny + 1) / ny)
    widths = np.diff(np.concatenate(([0.0], cuts)))
    mids = cuts - widths / 2
    ix = np.minimum((mids * nx).astype(np.int64), nx - 1)
    iy = np.minimum((mids * ny).astype(np.int64), ny - 1)
    gaps = np.abs(xs[ix] - ys[iy])
    if p == 1.0:
        return float(np.sum(widths * gaps))
    return float(np.sum(widths * gaps**p) ** (1.0 / p))


def _wp_assignment(xp, yp, p):
    n = xp.shape[0]
    if n > MAX_ASSIGNMENT_SIZE:
        raise ValidationError(
            "exact assignment limited to n <= %d points, got %d"
            % (MAX_ASSIGNMENT_SIZE, n))
    diff = xp[:, None, :] - yp[None, :, :]
    cost = np.sqrt(np.sum(diff**2, axis=2))
    if p != 1.0:
        cost = cost**p
    rows, cols = linear_sum_assignment(cost)
    total = float(cost[rows, cols].sum()) / n
    if p == 1.0:
        return total
    return float(total ** (1.0 / p))


def wp_distance(mu, nu, p=1.0):
    """Exact order-p Wasserstein distance between two clouds.

    One-dimensional clouds may differ in size. In higher dimension the
    clouds must have equal size (optimal assignment), bounded by
    MAX_ASSIGNMENT_SIZE.
    """
    if p < 1.0:
        raise ValidationError("order p must be >= 1, got %r" % (p,))
    if mu.m != nu.m:
        raise ValidationError("dimension mismatch: %d vs %d" % (mu.m, nu.m))
    if mu.m == 1:
        x = mu.points[:, 0]
        y = nu.points[:, 0]
        if mu.n == nu.n:
            return _wp_sorted_1d(x, y, p)
        return _wp_merged_1d(x, y, p)
    if mu.n != nu.n:
        raise ValidationError(
            "clouds of unequal size are only supported in dimension 1")
    return _wp_assignment(mu.points, nu.points, p)


def w1_distance(mu, nu):
    """First-order Wasserstein distance; alias of wp_distance at p=1."""
    return wp_distance(mu, nu, 1.0)


class MeasureFunctionalSpec:
    """A functional theta on pairs of measures plus a domination scale.

    Three shapes are supported:
      * order-p Wasserstein distance,
      * phi(int psi dmu - int psi dnu) for callables psi: R^m -> R and
        phi: R -> R_+,
      * a power beta in (0, 1] of the first-order distance.
    c_p >= 0 is the constant in the coupling bound
    theta(mu, nu) <= c_p * E|X - Y|.
    """

    WASSERSTEIN = "wasserstein"
    PSI_INTEGRAL_DIFFERENCE = "psi_integral_difference"
    POWER_OF_W1 = "power_of_w1"

    def __init__(self, kind, c_p=1.0, p=1.0, beta=None, psi=None, phi=None):
        if kind not in (self.WASSERSTEIN, self.PSI_INTEGRAL_DIFFERENCE,
                        self.POWER_OF_W1):
            raise ValidationError("unknown functional kind %r" % (kind,))
        if c_p < 0:
            raise ValidationError("c_p must be nonnegative")
        if kind == self.WASSERSTEIN and p < 1.0:
            raise ValidationError("order p must be >= 1")
        if kind == self.POWER_OF_W1:
            if beta is None or not 0.0 < beta <= 1.0:
                raise ValidationError("beta must lie in (0, 1]")
        if kind == self.PSI_INTEGRAL_DIFFERENCE:
            if psi is None or phi is None:
                raise ValidationError("psi and phi callables are required")
        self.kind = kind
        self.c_p = float(c_p)
        self.p = float(p)
        self.beta = beta
        self.psi = psi
        self.phi = phi

    @classmethod
    def wasserstein(cls, p=1.0, c_p=1.0):
        return cls(cls.WASSERSTEIN, c_p=c_p, p=p)

    @classmethod
    def psi_integral_difference(cls, psi, phi, c_p=1.0):
        return cls(cls.PSI_INTEGRAL_DIFFERENCE, c_p=c_p, psi=psi, phi=phi)

    @classmethod
    def power_of_w1(cls, beta, c_p=1.0):
        return cls(cls.POWER_OF_W1, c_p=c_p, beta=beta)


def _psi_integral(spec, mu):
    vals = np.asarray([spec.psi(x) for x in mu.points], dtype=np.float64)
    return float(np.mean(vals))


def theta_eval(spec, mu, nu):
    """Evaluate the functional of `spec` on a pair of clouds."""
    if spec.kind == MeasureFunctionalSpec.WASSERSTEIN:
        return wp_distance(mu, nu, spec.p)
    if spec.kind == MeasureFunctionalSpec.POWER_OF_W1:
        return float(w1_distance(mu, nu) ** spec.beta)
    diff = _psi_integral(spec, mu) - _psi_integral(spec, nu)
    val = float(spec.phi(diff))
    if val < 0:
        raise DomainError("phi must map into R_+, got %r" % val)
    return val


def check_domination(spec, pairs, rtol=1e-12, atol=1e-15):
    """Check theta(mu, nu) <= c_p * mean|x_i - y_i| over explicit couplings.

    `pairs` is a sequence of (x_points, y_points) arrays of equal shape;
    row i of x is coupled to row i of y. Returns a dict with per-pair
    theta values, coupled mean distances, margins and a pass flag.
    """
    thetas = []
    coupled = []
    for x, y in pairs:
        xp = _as_points(x)
        yp = _as_points(y)
        if xp.shape != yp.shape:
            raise ValidationError("coupled clouds must have equal shape")
        mu = EmpiricalMeasure(xp)
        nu = EmpiricalMeasure(yp)
        thetas.append(theta_eval(spec, mu, nu))
        coupled.append(float(np.mean(np.sqrt(np.sum((xp - yp) ** 2, axis=1)))))
    thetas = np.asarray(thetas)
    coupled = np.asarray(coupled)
    bounds = spec.c_p * coupled
    margins = bounds - thetas
    ok = thetas <= bounds * (1 + rtol) + atol
    return {
        "theta": thetas,
        "coupled_mean": coupled,
        "bound": bounds,
        "margin": margins,
        "pair_passed": ok,
        "passed": bool(np.all(ok)),
    }


def _eval_on_grid(f, grid, name):
    if callable(f):
        return np.asarray([float(f(s)) for s in grid], dtype=np.float64)
    arr = np.asarray(f, dtype=np.float64)
    if arr.shape != grid.shape:
        raise ValidationError("%s must match the grid length" % name)
    return arr


class ThetaCurveResult:
    """Integrand samples and running integral of the domination criterion."""

    def __init__(self, grid, values, cumulative, verdict):
        self.grid = grid
        self.values = values
        self.cumulative = cumulative
        self.total = float(cumulative[-1])
        self.verdict = verdict


def theta_integrability_curve(grid, lambda_vals, rho_outer, theta_vals,
                              eta_vals=None, rho_state=None,
                              moment_vals=None):
    """Sample Theta(s) = lambda(s) rho_outer(theta(s)) and integrate it.

    Optionally adds a state term eta(s) * rho_state(moment(s)) when all
    three of eta_vals, rho_state and moment_vals are given. Inputs may be
    callables of s or arrays on the grid. Integration is trapezoidal on
    the given grid; the verdict reports whether the sampled criterion is
    finite.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise ValidationError("grid must be strictly increasing, length >= 2")
    lam = _eval_on_grid(lambda_vals, grid, "lambda_vals")
    tht = _eval_on_grid(theta_vals, grid, "theta_vals")
    values = lam * np.asarray([float(rho_outer(v)) for v in tht])
    extras = (eta_vals is not None, rho_state is not None,
              moment_vals is not None)
    if any(extras):
        if not all(extras):
            raise ValidationError(
                "eta_vals, rho_state and moment_vals must be given together")
        eta = _eval_on_grid(eta_vals, grid, "eta_vals")
        mom = _eval_on_grid(moment_vals, grid, "moment_vals")
        values = values + eta * np.asarray(
            [float(rho_state(v)) for v in mom])
    cumulative = np.concatenate(
        ([0.0], np.cumsum(np.diff(grid) * (values[1:] + values[:-1]) / 2)))
    if np.all(np.isfinite(values)):
        verdict = "integrable (numeric)"
    else:
        verdict = "not integrable: non-finite integrand samples"
    return ThetaCurveResult(grid, values, cumulative, verdict)


class MeasureFlowGrid:
    """A measure-valued path sampled on a time grid.

    Lookups are piecewise constant from the left node, matching how a
    frozen flow enters an explicit time stepper.
    """

    def __init__(self, times, measures):
        self.times = np.asarray(times, dtype=np.float64)
        if self.times.ndim != 1 or len(self.times) < 1:
            raise ValidationError("times must be a nonempty 1-d array")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("times must be strictly increasing")
        if len(measures) != len(self.times):
            raise ValidationError("one measure per grid time required")
        dims = {mu.m for mu in measures}
        if len(dims) != 1:
            raise ValidationError("all measures must share one dimension")
        self.measures = list(measures)
        self.m = dims.pop()

    @classmethod
    def constant(cls, measure, times):
        return cls(times, [measure] * len(np.atleast_1d(times)))

    def at(self, t):
        """Measure at the last grid node <= t (first node before the grid)."""
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.measures[max(idx, 0)]

    def sup_w1(self, other):
        """Supremum over the common grid of the first-order distance."""
        if len(self.times) != len(other.times) or not np.array_equal(
                self.times, other.times):
            raise ValidationError("flows must share one time grid")
        return max(w1_distance(a, b)
                   for a, b in zip(self.measures, other.measures))

    def __len__(self):
        return len(self.times)
