import math

import numpy as np
import pytest

from mkvlab.coeff_calc import derive_holder_spec, stability_coefficients
from mkvlab.exceptions import ConfigError, SimulationError, ValidationError
from mkvlab.measure_space import EmpiricalMeasure, MeasureFlowGrid
from mkvlab.sde_engine import (
    DecreasingTable,
    DiffusionRow,
    DiffusionSpec,
    DriftSpec,
    MeanMap,
    ModelSpec,
    MomentPower,
    OddPolyNeg,
    PsiIntegral,
    SignedPower,
    SimConfig,
    builtin_models,
    mean_field_ou_model,
    pure_contraction_model,
    simulate_coupled,
    simulate_frozen,
    simulate_particle_system,
    sqrt_diffusion_contraction_model,
)


def _ode_model(linear=-1.0, nonlinear=None, name="ode"):
    terms = [] if nonlinear is None else [nonlinear]
    drift = DriftSpec(1, linear_eta=[linear], nonlinear_terms=terms)
    return ModelSpec(1, drift, DiffusionSpec([DiffusionRow()]), name=name)


class TestDeterministicDrift:
    def test_linear_decay_matches_explicit_euler(self):
        # sigma = 0: the run is exactly the deterministic Euler map
        cfg = SimConfig(horizon=1.0, dt=1e-3, n_particles=3, seed=9)
        ens = simulate_frozen(_ode_model(-1.0), cfg, 1.0)
        want = (1.0 - 1e-3) ** 1000
        np.testing.assert_allclose(ens.states[:, -1, 0], want, rtol=1e-12)
        assert abs(want - math.exp(-1.0)) < 1e-3
        assert ens.states.shape == (3, 1001, 1)

    def test_cubic_decay_first_order_in_dt(self):
        # dX = -X^3 dt from 1: exact value (1 + 2t)^(-1/2)
        exact = (1.0 + 2.0) ** -0.5
        errs = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            cfg = SimConfig(horizon=1.0, dt=dt, n_particles=1, seed=0)
            model = _ode_model(0.0, ([1.0], OddPolyNeg([0.0, 1.0])))
            ens = simulate_frozen(model, cfg, 1.0)
            errs.append(abs(ens.states[0, -1, 0] - exact))
        slopes = np.log2(np.asarray(errs[:-1]) / np.asarray(errs[1:]))
        assert np.all(slopes > 0.8)
        assert np.all(slopes < 1.2)

    def test_affine_gap_contracts_exactly_under_coupling(self):
        # constant diffusion cancels in the difference of a coupled pair
        drift = DriftSpec(1, kappa=[1.0], linear_eta=[-1.0])
        model = ModelSpec(1, drift, DiffusionSpec([DiffusionRow(0.7)]),
                          name="affine")
        cfg = SimConfig(horizon=2.0, dt=1e-3, n_particles=5, seed=21)
        a, b = simulate_coupled(model, cfg, 0.0, 2.0)
        gap = b.states - a.states
        want = 2.0 * (1.0 - 1e-3) ** np.arange(2001)
        np.testing.assert_allclose(
            gap[:, :, 0], np.tile(want, (5, 1)), rtol=1e-10)

    def test_rotated_frame_decouples_modes(self):
        c, s = math.cos(0.3), math.sin(0.3)
        u = np.array([[c, -s], [s, c]])
        drift = DriftSpec(2, linear_eta=[-1.0, -3.0])
        model = ModelSpec(2, drift,
                          DiffusionSpec([DiffusionRow(), DiffusionRow()]),
                          frame=u, name="rotated")
        cfg = SimConfig(horizon=1.0, dt=1e-4, n_particles=1, seed=4)
        x0 = np.array([1.0, 2.0])
        ens = simulate_frozen(model, cfg, x0)
        want = u @ np.diag([math.exp(-1.0), math.exp(-3.0)]) @ u.T @ x0
        np.testing.assert_allclose(ens.states[0, -1], want, atol=2e-4)


class TestNoise:
    def test_brownian_variance(self):
        drift = DriftSpec(1)
        model = ModelSpec(1, drift, DiffusionSpec([DiffusionRow(0.8)]),
                          name="bm")
        cfg = SimConfig(horizon=2.0, dt=1e-2, n_particles=10000, seed=77)
        ens = simulate_frozen(model, cfg, 0.0)
        final = ens.states[:, -1, 0]
        var_want = 0.8**2 * 2.0
        se = var_want * math.sqrt(2.0 / (cfg.n_particles - 1))
        assert abs(final.var(ddof=1) - var_want) <= 3 * se
        assert abs(final.mean()) <= 3 * math.sqrt(var_want / cfg.n_particles)

    def test_increments_scale_with_sqrt_dt(self):
        drift = DriftSpec(1)
        model = ModelSpec(1, drift, DiffusionSpec([DiffusionRow(1.0)]),
                          name="bm")
        cfg = SimConfig(horizon=0.01, dt=0.01, n_particles=4096, seed=3)
        ens = simulate_frozen(model, cfg, 0.0)
        one_step = ens.states[:, 1, 0]
        assert abs(one_step.std(ddof=1) - 0.1) < 0.01


class TestMeanField:
    def test_interacting_mean_follows_the_ode(self):
        model = mean_field_ou_model()
        cfg = SimConfig(horizon=1.0, dt=1e-3, n_particles=2000, seed=123)
        ens = simulate_particle_system(model, cfg, 1.0)
        # the mean of dX = (-2X + E[X]) dt + ... satisfies dE = -E dt
        mean_curve = ens.states[:, :, 0].mean(axis=0)
        want = np.exp(-ens.grid)
        se = ens.states[:, -1, 0].std(ddof=1) / math.sqrt(cfg.n_particles)
        assert abs(mean_curve[-1] - want[-1]) <= 3 * se + 2 * cfg.dt

    def test_frozen_point_mass_at_zero_kills_measure_term(self):
        model = mean_field_ou_model()
        cfg = SimConfig(horizon=0.5, dt=1e-3, n_particles=64, seed=5)
        flow = MeasureFlowGrid.constant(
            EmpiricalMeasure([[0.0]]), [0.0, 0.5])
        frozen = simulate_frozen(model, cfg, 1.0, flow=flow)
        bare = ModelSpec(1, DriftSpec(1, linear_eta=[-2.0]),
                         DiffusionSpec([DiffusionRow(0.0, [(0.3, 0.5)])]),
                         name="mean_field_ou")
        ref = simulate_frozen(bare, cfg, 1.0)
        np.testing.assert_array_equal(frozen.states, ref.states)

    def test_flow_required_when_measure_terms_exist(self):
        with pytest.raises(ValidationError):
            simulate_frozen(mean_field_ou_model(),
                            SimConfig(n_particles=4), 1.0)

    def test_moment_power_term_runs(self):
        drift = DriftSpec(1, linear_eta=[-1.0],
                          measure_terms=[([[0.5]], MomentPower(0.5))])
        model = ModelSpec(1, drift, DiffusionSpec([DiffusionRow()]),
                          name="mompow")
        cfg = SimConfig(horizon=0.2, dt=1e-2, n_particles=50, seed=1)
        ens = simulate_particle_system(model, cfg, 2.0)
        assert np.all(np.isfinite(ens.states))

    def test_psi_integral_term_runs_but_has_no_certificate(self):
        tag = PsiIntegral(lambda pts: np.cos(pts[:, 0]))
        drift = DriftSpec(1, linear_eta=[-1.0],
                          measure_terms=[([[0.1]], tag)])
        model = ModelSpec(1, drift, DiffusionSpec([DiffusionRow()]),
                          name="psi")
        cfg = SimConfig(horizon=0.1, dt=1e-2, n_particles=20, seed=1)
        ens = simulate_particle_system(model, cfg, 0.0)
        assert np.all(np.isfinite(ens.states))
        with pytest.raises(ValidationError):
            derive_holder_spec(model)


class TestDeterminismContracts:
    def test_threads_do_not_change_results(self):
        model = sqrt_diffusion_contraction_model()
        cfg = SimConfig(horizon=0.5, dt=1e-3, n_particles=9000, seed=42)
        one = simulate_frozen(model, cfg, 1.0, threads=1)
        four = simulate_frozen(model, cfg, 1.0, threads=4)
        assert one.fingerprint() == four.fingerprint()
        np.testing.assert_array_equal(one.states, four.states)

    def test_save_every_thins_without_changing_trajectories(self):
        model = sqrt_diffusion_contraction_model()
        full_cfg = SimConfig(horizon=0.2, dt=1e-3, n_particles=200, seed=8)
        thin_cfg = SimConfig(horizon=0.2, dt=1e-3, n_particles=200, seed=8,
                             save_every=7)
        full = simulate_frozen(model, full_cfg, 1.0)
        thin = simulate_frozen(model, thin_cfg, 1.0)
        keep = np.isin(np.arange(201), np.append(np.arange(0, 201, 7), 200))
        np.testing.assert_array_equal(thin.grid, full.grid[keep])
        np.testing.assert_array_equal(thin.states, full.states[:, keep, :])

    def test_seed_changes_stream(self):
        model = sqrt_diffusion_contraction_model()
        cfg_a = SimConfig(horizon=0.1, dt=1e-2, n_particles=10, seed=1)
        cfg_b = SimConfig(horizon=0.1, dt=1e-2, n_particles=10, seed=2)
        a = simulate_frozen(model, cfg_a, 1.0)
        b = simulate_frozen(model, cfg_b, 1.0)
        assert a.fingerprint() != b.fingerprint()

    def test_coupled_runs_share_increments(self):
        model = sqrt_diffusion_contraction_model()
        cfg = SimConfig(horizon=0.1, dt=1e-2, n_particles=30, seed=11)
        a, b = simulate_coupled(model, cfg, 1.0, 1.0)
        np.testing.assert_array_equal(a.states, b.states)


class TestBlowUp:
    def test_explosion_is_reported_not_raised(self):
        drift = DriftSpec(1, nonlinear_terms=[
            ([1.0], SignedPower(50.0, 1.0))])  # dX = 50 X dt
        model = ModelSpec(1, drift, DiffusionSpec([DiffusionRow()]),
                          name="boom")
        cfg = SimConfig(horizon=10.0, dt=0.5, n_particles=3, seed=0)
        ens = simulate_frozen(model, cfg, 10.0)
        assert ens.truncated
        assert ens.blow_up is not None
        assert ens.blow_up["n_particles"] == 3
        assert ens.states.shape[1] == len(ens.grid)

    def test_coupled_blow_up_raises(self):
        drift = DriftSpec(1, nonlinear_terms=[([1.0], SignedPower(50.0,
                                                                  1.0))])
        model = ModelSpec(1, drift, DiffusionSpec([DiffusionRow()]),
                          name="boom")
        cfg = SimConfig(horizon=10.0, dt=0.5, n_particles=2, seed=0)
        with pytest.raises(SimulationError):
            simulate_coupled(model, cfg, 10.0, 10.0)


class TestValidationAndConfig:
    def test_config_rejects_bad_values(self):
        with pytest.raises(ConfigError):
            SimConfig(horizon=0.0)
        with pytest.raises(ConfigError):
            SimConfig(dt=-1.0)
        with pytest.raises(ConfigError):
            SimConfig(n_particles=0)
        with pytest.raises(ConfigError):
            SimConfig(scheme="milstein")
        with pytest.raises(ConfigError):
            SimConfig(save_every=0)
        with pytest.raises(ConfigError):
            SimConfig(horizon=1.0, dt=0.3)  # not a whole number of steps

    def test_model_rejects_bad_frames_and_dimensions(self):
        drift = DriftSpec(1, linear_eta=[-1.0])
        with pytest.raises(ValidationError):
            ModelSpec(1, drift, DiffusionSpec([DiffusionRow()]),
                      frame=[[2.0]])
        with pytest.raises(ValidationError):
            ModelSpec(1, drift, DiffusionSpec([DiffusionRow()]), d=2)
        with pytest.raises(ValidationError):
            ModelSpec(2, drift, DiffusionSpec([DiffusionRow()] * 2))

    def test_diffusion_power_floor(self):
        with pytest.raises(ValidationError):
            DiffusionRow(0.0, [(1.0, 0.4)])

    def test_tag_validation(self):
        with pytest.raises(ValidationError):
            SignedPower(1.0, 1.5)
        with pytest.raises(ValidationError):
            OddPolyNeg([-1.0])
        with pytest.raises(ValidationError):
            DecreasingTable([0.0, 1.0], [0.0, 1.0])
        with pytest.raises(ValidationError):
            DriftSpec(1, nonlinear_terms=[([-1.0], SignedPower(1.0, 0.5))])

    def test_initial_condition_shapes(self):
        model = _ode_model()
        cfg = SimConfig(horizon=0.1, dt=0.05, n_particles=4)
        for x0 in (1.0, np.array([1.0]), np.ones((4, 1))):
            ens = simulate_frozen(model, cfg, x0)
            np.testing.assert_array_equal(ens.states[:, 0, 0], np.ones(4))
        with pytest.raises(ValidationError):
            simulate_frozen(model, cfg, np.ones((3, 2)))
        with pytest.raises(ValidationError):
            simulate_frozen(model, cfg, np.nan)

    def test_run_window_must_sit_in_model_domain(self):
        drift = DriftSpec(1, linear_eta=_as_linear_on((0.0, 0.5)))
        model = ModelSpec(1, drift, DiffusionSpec([DiffusionRow()]),
                          t_domain=(0.0, 0.5), name="short")
        with pytest.raises(ConfigError):
            simulate_frozen(model, SimConfig(horizon=1.0, dt=0.1,
                                             n_particles=2), 1.0)

    def test_existence_profile_rejects_additive_noise(self):
        drift = DriftSpec(1, linear_eta=[-1.0])
        model = ModelSpec(1, drift, DiffusionSpec([DiffusionRow(0.3)]),
                          name="additive")
        with pytest.raises(ValidationError):
            model.validate_existence_profile()
        pure_contraction_model().validate_existence_profile()


def _as_linear_on(domain):
    from mkvlab.coeff_calc import CoefficientFn
    return CoefficientFn.constant(np.array([-1.0]),
                                  domain=np.asarray(domain))


class TestTableDrift:
    def test_decreasing_table_interpolates_and_saturates(self):
        tag = DecreasingTable([-1.0, 1.0], [1.0, -1.0])
        np.testing.assert_allclose(tag.apply(np.array([-2.0, 0.0, 0.5, 3.0])),
                                   [1.0, 0.0, -0.5, -1.0])

    def test_table_drift_contracts(self):
        tag = DecreasingTable([-5.0, 5.0], [5.0, -5.0])  # identity-like decay
        model = _ode_model(0.0, ([1.0], tag), name="table")
        cfg = SimConfig(horizon=2.0, dt=1e-3, n_particles=1, seed=0)
        ens = simulate_frozen(model, cfg, 1.0)
        assert abs(ens.states[0, -1, 0] - math.exp(-2.0)) < 2e-3


class TestEnsembleSurface:
    def test_law_flow_and_mean_abs(self):
        model = pure_contraction_model()
        cfg = SimConfig(horizon=0.2, dt=0.1, n_particles=16, seed=2)
        ens = simulate_frozen(model, cfg, 1.0)
        flow = ens.law_flow()
        assert flow.at(0.0).points.shape == (16, 1)
        mean_curve, sd_curve = ens.mean_abs_curve()
        assert mean_curve.shape == (3,)
        assert np.all(mean_curve > 0)
        framed, _ = ens.mean_abs_curve(frame=np.eye(1))
        np.testing.assert_allclose(framed, mean_curve, rtol=1e-12)

    def test_csv_bundle(self, tmp_path):
        model = pure_contraction_model()
        cfg = SimConfig(horizon=0.2, dt=0.1, n_particles=5, seed=2)
        ens = simulate_frozen(model, cfg, 1.0)
        manifest = ens.to_csv_bundle(tmp_path)
        assert manifest["fingerprint"] == ens.fingerprint()
        data = np.loadtxt(tmp_path / "paths_coord0.csv", delimiter=",",
                          skiprows=1)
        np.testing.assert_array_equal(data, ens.states[:, :, 0])
        with open(tmp_path / "paths_manifest.json") as fh:
            assert "fingerprint" in fh.read()


class TestBuiltinsAndCertificates:
    def test_registry_has_at_least_four(self):
        reg = builtin_models()
        assert len(reg) >= 4
        cfg = SimConfig(horizon=0.05, dt=5e-3, n_particles=8, seed=1)
        for name, build in reg.items():
            model = build()
            assert model.name == name
            if model.has_measure_terms():
                ens = simulate_particle_system(model, cfg, 1.0)
            else:
                ens = simulate_frozen(model, cfg, 1.0)
            assert np.all(np.isfinite(ens.states))

    def test_mean_field_ou_certificate(self):
        spec = derive_holder_spec(mean_field_ou_model())
        coeffs = stability_coefficients(spec)
        assert coeffs.drift_only_rate(0.5) == pytest.approx(-2.0)
        assert coeffs.rate(0.5) == pytest.approx(-1.0)

    def test_sqrt_model_certificate(self):
        spec = derive_holder_spec(sqrt_diffusion_contraction_model())
        coeffs = stability_coefficients(spec)
        assert coeffs.rate(1.0) == pytest.approx(-1.0)
        assert coeffs.offset(1.0) == pytest.approx(0.0)
