"""Euler simulation of interacting and frozen-measure diffusions.

The drift of a model splits into a frame part, a measure part and a
forcing: coordinates in an orthonormal frame evolve under a diagonal
linear weight plus tagged scalar maps (signed powers, odd decreasing
polynomials, tabulated decreasing maps), while measure terms feed a
statistic of the current law through a time-dependent weight matrix.
The diffusion is diagonal in the same frame with intensities built from
powers of the frame coordinate magnitude, powers at least one half.

Tags are the load-bearing design choice: the simulator evaluates them,
and the certificate layer reads contraction constants off them without
ever differentiating user code.

Noise is addressed, not streamed. The draw for (particle, step,
component) is a pure function of the seed and those indices, so results
are independent of chunking, thread count and of which subset of steps
is saved.
"""

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ._philox import TAG_INCREMENT, normal_grid
from .coeff_calc import CoefficientFn
from .exceptions import ConfigError, SimulationError, ValidationError
from .measure_space import EmpiricalMeasure, MeasureFlowGrid

BLOW_UP_NORM = 1e9
_NOISE_BUDGET_DOUBLES = 8_000_000  # about 64 MB per pregenerated batch
_THREAD_CHUNK_LANES = 8192  # fixed: chunk layout never depends on threads


# ---------------------------------------------------------------------------
# structural tags for drift maps


class SignedPower:
    """v -> a * sgn(v) * |v|**alpha with alpha in (0, 1]; sgn(0) = 0."""

    kind = "signed_power"

    def __init__(self, a, alpha):
        self.a = float(a)
        self.alpha = float(alpha)
        if not 0.0 < self.alpha <= 1.0:
            raise ValidationError(
                "signed power exponent must lie in (0, 1], got %g" % alpha)

    def apply(self, v):
        return self.a * np.sign(v) * np.abs(v) ** self.alpha

    def __repr__(self):
        return "SignedPower(a=%g, alpha=%g)" % (self.a, self.alpha)


class OddPolyNeg:
    """v -> -sum_j c_j v**(2j+1) with c_j >= 0: odd and nonincreasing."""

    kind = "odd_poly_neg"

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=np.float64)
        if self.coeffs.ndim != 1 or len(self.coeffs) == 0:
            raise ValidationError("coeffs must be a nonempty vector")
        if np.any(self.coeffs < 0):
            raise ValidationError(
                "odd polynomial coefficients must be nonnegative "
                "(the map must not increase anywhere)")

    def apply(self, v):
        acc = np.zeros_like(np.asarray(v, dtype=np.float64))
        for j, c in enumerate(self.coeffs):
            if c != 0.0:
                acc += c * v ** (2 * j + 1)
        return -acc

    def __repr__(self):
        return "OddPolyNeg(%s)" % (list(self.coeffs),)


class DecreasingTable:
    """Piecewise-linear nonincreasing map, constant beyond the table."""

    kind = "decreasing_table"

    def __init__(self, v_grid, values):
        self.v_grid = np.asarray(v_grid, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        if self.v_grid.ndim != 1 or self.v_grid.shape != self.values.shape:
            raise ValidationError("table grids must be matching vectors")
        if len(self.v_grid) < 2 or np.any(np.diff(self.v_grid) <= 0):
            raise ValidationError("table abscissae must strictly increase")
        if np.any(np.diff(self.values) > 0):
            raise ValidationError("table values must be nonincreasing")

    def apply(self, v):
        return np.interp(v, self.v_grid, self.values)

    def __repr__(self):
        return "DecreasingTable(%d nodes)" % len(self.v_grid)


# structural tags for measure statistics


class MeanMap:
    """mu -> its mean vector."""

    kind = "mean"

    def statistic(self, states):
        return states.mean(axis=0)

    def output_dim(self, m):
        return m


class MomentPower:
    """mu -> (first absolute moment)**beta with beta in (0, 1]."""

    kind = "moment_power"

    def __init__(self, beta):
        self.beta = float(beta)
        if not 0.0 < self.beta <= 1.0:
            raise ValidationError(
                "moment exponent must lie in (0, 1], got %g" % beta)

    def statistic(self, states):
        first = np.sqrt((states**2).sum(axis=1)).mean()
        return np.array([first**self.beta])

    def output_dim(self, m):
        return 1


class PsiIntegral:
    """mu -> integral of a user map; simulable, carries no certificate.

    psi must accept an (n, m) array of points and return (n,) values.
    """

    kind = "psi_integral"

    def __init__(self, psi):
        if not callable(psi):
            raise ValidationError("psi must be callable")
        self.psi = psi

    def statistic(self, states):
        vals = np.asarray(self.psi(states), dtype=np.float64)
        if vals.shape != (states.shape[0],):
            raise ValidationError(
                "psi must map (n, m) points to (n,) values")
        return np.array([vals.mean()])

    def output_dim(self, m):
        return 1


# ---------------------------------------------------------------------------
# model description


def _as_fn(value, shape=()):
    if isinstance(value, CoefficientFn):
        if value.value_shape != shape:
            raise ValidationError(
                "coefficient has value shape %r, expected %r"
                % (value.value_shape, shape))
        return value
    arr = np.broadcast_to(np.asarray(value, dtype=np.float64), shape)
    return CoefficientFn.constant(np.array(arr, dtype=np.float64))


def _entries_nonnegative(fn):
    flat_idx = np.ndindex(*fn.value_shape) if fn.value_shape else [()]
    for idx in flat_idx:
        entry = fn.entry(*idx) if idx else fn
        if (-entry).sample_max(*entry.domain) > 1e-12:
            return False
    return True


class DriftTerm:
    """One nonlinear frame term: weight vector eta >= 0 and a map tag."""

    def __init__(self, eta, f, m=None):
        if m is not None:
            eta = _as_fn(eta, (m,))
        if not isinstance(eta, CoefficientFn) or len(eta.value_shape) != 1:
            raise ValidationError("eta must be a vector coefficient")
        if not _entries_nonnegative(eta):
            raise ValidationError("eta weights must be nonnegative")
        if not hasattr(f, "kind") or not hasattr(f, "apply"):
            raise ValidationError("f must be a drift map tag")
        self.eta = eta
        self.f = f


class MeasureTerm:
    """One measure term: weight matrix lam and a statistic tag g."""

    def __init__(self, lam, g, m=None):
        if not hasattr(g, "kind") or not hasattr(g, "statistic"):
            raise ValidationError("g must be a measure statistic tag")
        if m is not None and not isinstance(lam, CoefficientFn):
            lam = _as_fn(lam, (m, g.output_dim(m)))
        if not isinstance(lam, CoefficientFn) or len(lam.value_shape) != 2:
            raise ValidationError("lam must be a matrix coefficient")
        self.lam = lam
        self.g = g


class DriftSpec:
    def __init__(self, m, kappa=None, linear_eta=None, nonlinear_terms=(),
                 measure_terms=()):
        self.m = int(m)
        self.kappa = None if kappa is None else _as_fn(kappa, (self.m,))
        self.linear_eta = (None if linear_eta is None
                           else _as_fn(linear_eta, (self.m,)))
        self.nonlinear_terms = [
            t if isinstance(t, DriftTerm) else DriftTerm(t[0], t[1], self.m)
            for t in nonlinear_terms]
        self.measure_terms = [
            t if isinstance(t, MeasureTerm)
            else MeasureTerm(t[0], t[1], self.m)
            for t in measure_terms]
        for t in self.nonlinear_terms:
            if t.eta.value_shape != (self.m,):
                raise ValidationError("nonlinear weight has wrong length")
        for t in self.measure_terms:
            rows, cols = t.lam.value_shape
            if rows != self.m or cols != t.g.output_dim(self.m):
                raise ValidationError(
                    "measure weight shape %r does not match statistic"
                    % (t.lam.value_shape,))


class DiffusionRow:
    """Intensity of one frame coordinate: eta0 + sum eta_k |v|**p_k."""

    def __init__(self, eta0=0.0, terms=()):
        self.eta0 = _as_fn(eta0)
        self.terms = []
        for eta_k, power in terms:
            power = float(power)
            if power < 0.5:
                raise ValidationError(
                    "diffusion powers below one half are outside the "
                    "uniqueness regime, got %g" % power)
            self.terms.append((_as_fn(eta_k), power))

    def intensity(self, t, v):
        out = np.full_like(v, float(self.eta0(t)))
        mag = np.abs(v)
        for eta_k, power in self.terms:
            out += float(eta_k(t)) * mag**power
        return out

    def is_additive_free(self):
        lo, hi = self.eta0.domain
        return self.eta0.abs().sample_max(lo, hi) <= 1e-15


class DiffusionSpec:
    def __init__(self, rows):
        self.rows = [r if isinstance(r, DiffusionRow) else DiffusionRow(*r)
                     for r in rows]


class ModelSpec:
    """Complete coefficient description of one interacting diffusion."""

    def __init__(self, m, drift, diffusion, frame=None, t_domain=(0.0, 1e9),
                 name="model", d=None):
        self.m = int(m)
        if self.m < 1:
            raise ValidationError("m must be at least 1")
        self.d = self.m if d is None else int(d)
        if self.d != self.m:
            raise ValidationError(
                "driving dimension must match state dimension")
        if not isinstance(drift, DriftSpec):
            raise ValidationError("drift must be a DriftSpec")
        if drift.m != self.m:
            raise ValidationError("drift dimension mismatch")
        if not isinstance(diffusion, DiffusionSpec):
            raise ValidationError("diffusion must be a DiffusionSpec")
        if len(diffusion.rows) != self.m:
            raise ValidationError(
                "diffusion needs exactly one row per coordinate")
        if frame is None:
            frame = np.eye(self.m)
        frame = np.asarray(frame, dtype=np.float64)
        if frame.shape != (self.m, self.m):
            raise ValidationError("frame must be m-by-m")
        if np.max(np.abs(frame.T @ frame - np.eye(self.m))) > 1e-12:
            raise ValidationError("frame columns must be orthonormal")
        self.drift = drift
        self.diffusion = diffusion
        self.frame = frame
        lo, hi = float(t_domain[0]), float(t_domain[1])
        if not lo < hi:
            raise ValidationError("t_domain must be an increasing pair")
        self.t_domain = (lo, hi)
        self.name = str(name)

    def has_measure_terms(self):
        return len(self.drift.measure_terms) > 0

    def validate_existence_profile(self):
        """Reject additive noise; the fixed-point argument needs the
        diffusion to vanish with the frame coordinate."""
        for i, row in enumerate(self.diffusion.rows):
            if not row.is_additive_free():
                raise ValidationError(
                    "diffusion row %d has an additive intensity; the "
                    "strong-solution construction requires none" % i)

    # -- pointwise evaluation ---------------------------------------------

    def drift_eval(self, t, states, measure_stats):
        """b(t, x, mu) for an (N, m) state block.

        measure_stats: precomputed list of statistic vectors, one per
        measure term (they depend on the law, not the particle).
        """
        frame_coords = states @ self.frame
        frame_out = np.zeros_like(frame_coords)
        if self.drift.linear_eta is not None:
            frame_out += np.asarray(self.drift.linear_eta(t)) * frame_coords
        for term in self.drift.nonlinear_terms:
            frame_out += np.asarray(term.eta(t)) * term.f.apply(frame_coords)
        out = frame_out @ self.frame.T
        for term, stat in zip(self.drift.measure_terms, measure_stats):
            out = out + np.asarray(term.lam(t)) @ stat
        if self.drift.kappa is not None:
            out = out + np.asarray(self.drift.kappa(t))
        return out

    def measure_statistics(self, states):
        return [term.g.statistic(states)
                for term in self.drift.measure_terms]

    def measure_statistics_from(self, mu):
        return [term.g.statistic(mu.points)
                for term in self.drift.measure_terms]

    def diffusion_eval(self, t, states):
        """Frame intensities sigma_i(t, x) for an (N, m) state block."""
        frame_coords = states @ self.frame
        out = np.empty_like(frame_coords)
        for i, row in enumerate(self.diffusion.rows):
            out[:, i] = row.intensity(t, frame_coords[:, i])
        return out


# ---------------------------------------------------------------------------
# runs


class SimConfig:
    def __init__(self, t0=0.0, horizon=1.0, dt=1e-3, n_particles=1000,
                 seed=0, scheme="euler_maruyama", save_every=1):
        self.t0 = float(t0)
        self.horizon = float(horizon)
        self.dt = float(dt)
        self.n_particles = int(n_particles)
        self.seed = seed
        self.scheme = scheme
        self.save_every = int(save_every)
        if self.horizon <= self.t0:
            raise ConfigError("horizon must exceed t0")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.n_particles < 1:
            raise ConfigError("need at least one particle")
        if scheme != "euler_maruyama":
            raise ConfigError("unknown scheme %r" % (scheme,))
        if self.save_every < 1:
            raise ConfigError("save_every must be a positive integer")
        n_steps = int(round((self.horizon - self.t0) / self.dt))
        if n_steps < 1 or abs(self.t0 + n_steps * self.dt
                              - self.horizon) > 1e-9 * max(
                                  1.0, abs(self.horizon)):
            raise ConfigError(
                "the horizon must be an integer number of steps from t0")
        self.n_steps = n_steps

    def saved_steps(self):
        steps = list(range(0, self.n_steps + 1, self.save_every))
        if steps[-1] != self.n_steps:
            steps.append(self.n_steps)
        return np.asarray(steps, dtype=np.int64)

    def as_dict(self):
        return {"t0": self.t0, "horizon": self.horizon, "dt": self.dt,
                "n_particles": self.n_particles, "seed": int(self.seed),
                "scheme": self.scheme, "save_every": self.save_every}


class PathEnsemble:
    """Saved trajectories of one run: states[i, k] at grid[k]."""

    def __init__(self, grid, states, config, model_name, truncated=False,
                 blow_up=None):
        self.grid = grid
        self.states = states
        self.config = config
        self.model_name = model_name
        self.truncated = truncated
        self.blow_up = blow_up

    @property
    def n_particles(self):
        return self.states.shape[0]

    @property
    def m(self):
        return self.states.shape[2]

    def at_index(self, k):
        return EmpiricalMeasure(self.states[:, k, :])

    def law_flow(self):
        return MeasureFlowGrid(
            self.grid, [self.at_index(k) for k in range(len(self.grid))])

    def mean_abs_curve(self, frame=None):
        """Mean absolute size per saved time.

        With a frame, the size of a state is the sum of absolute frame
        coordinates; otherwise the Euclidean norm.
        """
        if frame is None:
            sizes = np.sqrt((self.states**2).sum(axis=2))
        else:
            sizes = np.abs(np.einsum("nkm,mj->nkj", self.states,
                                     frame)).sum(axis=2)
        return sizes.mean(axis=0), sizes.std(axis=0, ddof=1)

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.grid).tobytes())
        h.update(np.ascontiguousarray(self.states).tobytes())
        h.update(self.model_name.encode())
        return h.hexdigest()

    def to_csv_bundle(self, out_dir, prefix="paths"):
        """One CSV per coordinate (rows = particles, columns = times)
        plus a manifest with config and fingerprint."""
        os.makedirs(out_dir, exist_ok=True)
        files = []
        header = ",".join("%.17g" % t for t in self.grid)
        for j in range(self.m):
            name = "%s_coord%d.csv" % (prefix, j)
            path = os.path.join(out_dir, name)
            with open(path, "w") as fh:
                fh.write("# t," + header + "\n")
                for i in range(self.n_particles):
                    fh.write(",".join("%.17g" % v
                                      for v in self.states[i, :, j]) + "\n")
            files.append(name)
        manifest = {
            "model": self.model_name,
            "config": self.config.as_dict(),
            "fingerprint": self.fingerprint(),
            "truncated": self.truncated,
            "blow_up": self.blow_up,
            "files": files,
        }
        with open(os.path.join(out_dir, "%s_manifest.json" % prefix),
                  "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        return manifest


def _initial_states(x0, n, m):
    arr = np.asarray(x0, dtype=np.float64)
    if arr.ndim == 0:
        out = np.full((n, m), float(arr))
    elif arr.shape == (m,):
        out = np.tile(arr, (n, 1))
    elif arr.shape == (n, m):
        out = arr.copy()
    else:
        raise ValidationError(
            "initial condition must be a scalar, an (m,) vector or an "
            "(n, m) array; got shape %r" % (arr.shape,))
    if not np.all(np.isfinite(out)):
        raise ValidationError("initial condition must be finite")
    return out


def _noise_batch(seed, steps, n_lanes, threads):
    """Normals for the given absolute steps, shape (len(steps), n_lanes).

    The lane range is cut into fixed-size chunks regardless of the
    thread count; each chunk is a pure function of its addresses, so
    the assembled array never depends on the parallelism.
    """
    if threads <= 1 or n_lanes <= _THREAD_CHUNK_LANES:
        return normal_grid(seed, steps, n_lanes, tag=TAG_INCREMENT)
    out = np.empty((len(steps), n_lanes))
    bounds = list(range(0, n_lanes, _THREAD_CHUNK_LANES)) + [n_lanes]

    def fill(k):
        lo, hi = bounds[k], bounds[k + 1]
        out[:, lo:hi] = normal_grid(seed, steps, hi - lo,
                                    tag=TAG_INCREMENT, lane_offset=lo)

    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        list(pool.map(fill, range(len(bounds) - 1)))
    return out


def _check_time_domain(model, config):
    lo, hi = model.t_domain
    if config.t0 < lo - 1e-12 or config.horizon > hi + 1e-12:
        raise ConfigError(
            "run window [%g, %g] leaves the model time domain [%g, %g]"
            % (config.t0, config.horizon, lo, hi))


class _Driver:
    """Shared stepping loop; the measure hook varies by entry point."""

    def __init__(self, model, config, threads):
        self.model = model
        self.config = config
        self.threads = int(threads)
        _check_time_domain(model, config)
        if self.config.n_steps >= 2**32:
            raise ConfigError("step count exceeds the 32-bit noise address")

    def run(self, x0, measure_hook):
        model, config = self.model, self.config
        n, m = config.n_particles, model.m
        states = _initial_states(x0, n, m)
        sqrt_dt = math.sqrt(config.dt)
        n_lanes = n * model.d
        batch_steps = max(1, _NOISE_BUDGET_DOUBLES // max(1, n_lanes))
        saved = config.saved_steps()
        saved_set = {int(s): k for k, s in enumerate(saved)}
        out = np.empty((n, len(saved), m))
        out[:, 0, :] = states
        blow_up = None
        truncated = False
        last_saved_k = 0
        for batch_lo in range(0, config.n_steps, batch_steps):
            batch_hi = min(batch_lo + batch_steps, config.n_steps)
            noise = _noise_batch(config.seed,
                                 np.arange(batch_lo, batch_hi),
                                 n_lanes, self.threads)
            for step in range(batch_lo, batch_hi):
                t = config.t0 + step * config.dt
                stats = measure_hook(t, states)
                b = model.drift_eval(t, states, stats)
                sig = model.diffusion_eval(t, states)
                z = noise[step - batch_lo].reshape(n, model.d)
                states = states + b * config.dt + (
                    (sig * z) @ model.frame.T) * sqrt_dt
                norms = np.sqrt((states**2).sum(axis=1))
                bad = ~np.isfinite(norms) | (norms > BLOW_UP_NORM)
                if np.any(bad):
                    idx = np.flatnonzero(bad)
                    blow_up = {
                        "step": step + 1,
                        "time": config.t0 + (step + 1) * config.dt,
                        "n_particles": int(len(idx)),
                        "particles": [int(i) for i in idx[:32]],
                        "max_norm": float(np.max(
                            norms[np.isfinite(norms)], initial=0.0)),
                    }
                    truncated = True
                    break
                k = saved_set.get(step + 1)
                if k is not None:
                    out[:, k, :] = states
                    last_saved_k = k
            if truncated:
                break
        if truncated:
            out = out[:, :last_saved_k + 1, :]
            grid = config.t0 + saved[:last_saved_k + 1] * config.dt
        else:
            grid = config.t0 + saved * config.dt
        return PathEnsemble(np.asarray(grid, dtype=np.float64), out,
                            config, model.name, truncated=truncated,
                            blow_up=blow_up)


def simulate_frozen(model, config, x0, flow=None, threads=1):
    """Run the model against a fixed measure flow (no interaction).

    Measure terms read their statistics from flow.at(t); a model with
    measure terms requires a flow.
    """
    if model.has_measure_terms():
        if flow is None:
            raise ValidationError(
                "the model has measure terms; a measure flow is required")

        def hook(t, states):
            mu = flow.at(t)
            return model.measure_statistics_from(mu)
    else:
        def hook(t, states):
            return []
    return _Driver(model, config, threads).run(x0, hook)


def simulate_particle_system(model, config, x0, threads=1):
    """Run the interacting system: the law is the empirical measure."""

    def hook(t, states):
        return model.measure_statistics(states)

    return _Driver(model, config, threads).run(x0, hook)


def simulate_coupled(model, config, x0_first, x0_second, flow_first=None,
                     flow_second=None, threads=1):
    """Two runs of the same model driven by identical increments.

    Differences between the two ensembles are then attributable to the
    initial conditions and measure flows alone.
    """
    first = simulate_frozen(model, config, x0_first, flow=flow_first,
                            threads=threads)
    second = simulate_frozen(model, config, x0_second, flow=flow_second,
                             threads=threads)
    if first.truncated or second.truncated:
        raise SimulationError(
            "a coupled run blew up; diagnostics: %r / %r"
            % (first.blow_up, second.blow_up))
    return first, second


# ---------------------------------------------------------------------------
# built-in models


def mean_field_ou_model():
    """dX = (-2 X + mean) dt + 0.3 |x|^(1/2) dW, one dimension."""
    drift = DriftSpec(1, linear_eta=[-2.0],
                      measure_terms=[([[1.0]], MeanMap())])
    diffusion = DiffusionSpec([DiffusionRow(0.0, [(0.3, 0.5)])])
    return ModelSpec(1, drift, diffusion, name="mean_field_ou")


def sqrt_diffusion_contraction_model():
    """dX = -X dt + 0.5 |x|^(1/2) dW, one dimension, no interaction."""
    drift = DriftSpec(1, linear_eta=[-1.0])
    diffusion = DiffusionSpec([DiffusionRow(0.0, [(0.5, 0.5)])])
    return ModelSpec(1, drift, diffusion,
                     name="sqrt_diffusion_contraction")


def odd_poly_drift_model():
    """dX = -(X + X^3) dt + 0.4 |x|^(3/4) dW, one dimension."""
    drift = DriftSpec(1, nonlinear_terms=[([1.0], OddPolyNeg([1.0, 1.0]))])
    diffusion = DiffusionSpec([DiffusionRow(0.0, [(0.4, 0.75)])])
    return ModelSpec(1, drift, diffusion, name="odd_poly_drift")


def pure_contraction_model():
    """dX = -1.5 X dt + 0.2 |x| dW, one dimension, no interaction."""
    drift = DriftSpec(1, linear_eta=[-1.5])
    diffusion = DiffusionSpec([DiffusionRow(0.0, [(0.2, 1.0)])])
    return ModelSpec(1, drift, diffusion, name="pure_contraction")


def builtin_models():
    """Registry of named model builders."""
    return {
        "mean_field_ou": mean_field_ou_model,
        "sqrt_diffusion_contraction": sqrt_diffusion_contraction_model,
        "odd_poly_drift": odd_poly_drift_model,
        "pure_contraction": pure_contraction_model,
    }
