import numpy as np
import pytest

from dsnls.diagnostics import charge_limit_discrete, discrete_charge
from dsnls.harness import (
    EnsembleBlowUp,
    ExperimentConfig,
    charge_experiment,
    ergodic_experiment,
    jackknife_se,
    ms_error,
    order_fit,
    resolve_initial,
    run_ensemble,
)
from dsnls.integrator import integrate, make_propagator
from dsnls.model import GridSpec, ModelParams, NoiseSpec, spectrum
from dsnls.noise import generate_path


def _config(**overrides):
    base = dict(
        kind="charge",
        params=ModelParams(alpha=0.5, lam=1, epsilon=1.0),
        grid=GridSpec(J=5),
        noise=NoiseSpec(P=4, eta=spectrum("power-law(6)", 4), seed=42),
        spectrum_desc="power-law(6)",
        tau=2.0 ** -6,
        T=1.0,
        M=4,
        initial="sine",
        record_stride=16,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfigValidation:
    def test_t_not_multiple_of_tau(self):
        with pytest.raises(ValueError):
            _config(T=1.01)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            _config(kind="banana")

    def test_unknown_observable(self):
        with pytest.raises(ValueError):
            _config(observables=("log-norm",))

    def test_error_kind_needs_nested_ladder(self):
        with pytest.raises(ValueError):
            _config(kind="error", tau=2.0 ** -8, tau_ref=2.0 ** -8,
                    tau_ladder=(3.0 * 2.0 ** -8,), horizons=(1.0,))

    def test_error_kind_horizon_alignment(self):
        with pytest.raises(ValueError):
            _config(kind="error", tau=2.0 ** -8, tau_ref=2.0 ** -8,
                    tau_ladder=(2.0 ** -6,), horizons=(0.7, 1.0))

    def test_order_kind_tau_must_equal_ref(self):
        with pytest.raises(ValueError):
            _config(kind="order", tau=2.0 ** -6, tau_ref=2.0 ** -8,
                    tau_ladder=(2.0 ** -6,))

    def test_ergodic_needs_positive_spectrum(self):
        with pytest.raises(ValueError):
            _config(kind="ergodic", initials=("sine",),
                    noise=NoiseSpec(P=2, eta=(1.0, 0.0), seed=1),
                    spectrum_desc="explicit: 1, 0")

    def test_valid_error_config(self):
        cfg = _config(kind="error", tau=2.0 ** -8, tau_ref=2.0 ** -8,
                      tau_ladder=(2.0 ** -6, 2.0 ** -7), horizons=(0.5, 1.0))
        assert cfg.n_steps == 256


class TestJackknife:
    def test_single_sample(self):
        assert jackknife_se(np.array([3.0])) == 0.0

    def test_matches_classical_se_for_mean(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(200)
        classical = x.std(ddof=1) / np.sqrt(x.size)
        assert jackknife_se(x) == pytest.approx(classical, rel=1e-12)

    def test_vectorized(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((50, 3))
        out = jackknife_se(x)
        assert out.shape == (3,)
        for k in range(3):
            assert out[k] == pytest.approx(jackknife_se(x[:, k]), rel=1e-12)

    def test_sqrt_transform_scales_like_delta_method(self):
        rng = np.random.default_rng(2)
        x = 4.0 + 0.1 * rng.standard_normal(500)
        se_plain = jackknife_se(x)
        se_sqrt = jackknife_se(x, transform=np.sqrt)
        # delta method: d sqrt(m)/dm = 1/(2 sqrt(m)) with m ~ 4
        assert se_sqrt == pytest.approx(se_plain / 4.0, rel=0.05)


class TestRunEnsemble:
    def test_single_realization_matches_integrate(self):
        cfg = _config(M=1, record_stride=8)
        h = cfg.grid.h
        ens = run_ensemble(cfg, lambda psi: discrete_charge(psi, h))
        prop = make_propagator(cfg.grid, cfg.tau, cfg.params.alpha)
        path = generate_path(cfg.noise, cfg.tau, cfg.n_steps, 0)
        traj = integrate(resolve_initial(cfg.grid, "sine"), prop, cfg.params,
                         cfg.noise, path, record_stride=8)
        direct = discrete_charge(traj.states.T, h)
        np.testing.assert_array_equal(ens.values[0, :, 0], direct)

    def test_chunk_size_invariance(self):
        cfg = _config(M=7)
        h = cfg.grid.h
        results = [run_ensemble(cfg, lambda psi: discrete_charge(psi, h), chunk_size=c)
                   for c in (None, 1, 3)]
        for other in results[1:]:
            np.testing.assert_array_equal(results[0].values, other.values)
            np.testing.assert_array_equal(results[0].mean, other.mean)
            np.testing.assert_array_equal(results[0].se, other.se)

    def test_mc_mean_tracks_charge_law(self):
        # statistical: 4 standard errors around the discrete analogue of the
        # exponential charge relaxation
        cfg = _config(M=256, grid=GridSpec(J=4), tau=2.0 ** -8, T=0.5,
                      record_stride=32,
                      noise=NoiseSpec(P=4, eta=spectrum("power-law(6)", 4), seed=7))
        h = cfg.grid.h
        ens = run_ensemble(cfg, lambda psi: discrete_charge(psi, h))
        limit = charge_limit_discrete(cfg.grid, cfg.noise, cfg.params)
        psi0 = resolve_initial(cfg.grid, "sine")
        c0 = float(discrete_charge(psi0, h))
        decay = np.exp(-2.0 * cfg.params.alpha * ens.times)
        law = decay * c0 + limit * (1.0 - decay)
        for i in range(1, len(ens.times)):
            assert abs(ens.mean[i, 0] - law[i]) <= 4.0 * ens.se[i, 0] + 1e-12

    def test_blowup_carries_realization(self):
        cfg = _config(M=3, initial="explicit: 1e200+0j, 0, 0, 0, 0")
        h = cfg.grid.h
        with pytest.raises(EnsembleBlowUp) as err:
            run_ensemble(cfg, lambda psi: discrete_charge(psi, h))
        assert err.value.step_index == 1
        assert err.value.realization == 0

    def test_long_run_charge_boundedness(self):
        # uniform moment bound: MC mean charge stays below
        # exp(-alpha t) * charge0 + C at every record point.  C frozen at 2.5,
        # estimated once from the stationary plateau (~2.03 for this setup)
        # plus a 4-sigma Monte Carlo margin.
        cfg = _config(M=64, grid=GridSpec(J=9), T=20.0, record_stride=8,
                      noise=NoiseSpec(P=100, eta=spectrum("power-law(6)", 100), seed=21))
        h = cfg.grid.h
        ens = run_ensemble(cfg, lambda psi: discrete_charge(psi, h))
        charge0 = ens.mean[0, 0]
        bound = np.exp(-cfg.params.alpha * ens.times) * charge0 + 2.5
        assert np.all(ens.mean[:, 0] <= bound)


class TestChargeExperiment:
    def test_deterministic_single_run_has_zero_se(self):
        cfg = _config(M=1, params=ModelParams(alpha=0.5, lam=1, epsilon=0.0))
        rec = charge_experiment(cfg)
        assert rec.columns == ("step", "t", "charge_mean", "charge_se", "charge_analytic")
        se = [row[3] for row in rec.rows]
        assert all(v == 0.0 for v in se)

    def test_deterministic_matches_analytic_decay_loosely(self):
        cfg = _config(M=1, params=ModelParams(alpha=0.5, lam=1, epsilon=0.0),
                      tau=2.0 ** -9, T=0.25, record_stride=128)
        rec = charge_experiment(cfg)
        last = rec.rows[-1]
        assert last[2] == pytest.approx(last[4], rel=5e-3)

    def test_bitwise_reproducible(self):
        cfg = _config(M=5)
        a = charge_experiment(cfg, chunk_size=2)
        b = charge_experiment(cfg, chunk_size=None)
        assert a.rows == b.rows


class TestErgodicExperiment:
    def _cfg(self, initials, seed=3):
        return _config(
            kind="ergodic",
            M=3,
            T=0.5,
            record_stride=8,
            initials=initials,
            observables=("exp-norm2", "sin-norm2"),
            noise=NoiseSpec(P=4, eta=spectrum("power-law(6)", 4), seed=seed),
        )

    def test_identical_profiles_identical_curves(self):
        # sine and initial(3) evaluate to the same vector, so their curves match
        rec = ergodic_experiment(self._cfg(("sine", "initial(3)")))
        by_initial = {}
        for t, initial, obs, mean, se in rec.rows:
            by_initial.setdefault(initial, []).append((t, obs, mean, se))
        assert by_initial["sine"] == by_initial["initial(3)"]

    def test_columns_and_rows(self):
        rec = ergodic_experiment(self._cfg(("initial(1)",)))
        assert rec.columns == ("t", "initial", "observable", "mean", "se")
        observables = {row[2] for row in rec.rows}
        assert observables == {"exp-norm2", "sin-norm2"}
        # running average at the first record step is (1/n) sum_{k<n} f
        first_t = min(row[0] for row in rec.rows)
        assert first_t == pytest.approx(8 * 2.0 ** -6)


class TestMsError:
    def _cfg(self, **kw):
        base = dict(
            kind="order",
            tau=2.0 ** -9,
            tau_ref=2.0 ** -9,
            tau_ladder=(2.0 ** -7, 2.0 ** -8),
            T=0.25,
            M=3,
            grid=GridSpec(J=4),
            noise=NoiseSpec(P=4, eta=spectrum("power-law(6)", 4), seed=9),
        )
        base.update(kw)
        return _config(**base)

    def test_self_comparison_is_exact_zero(self):
        cfg = self._cfg(tau_ladder=(2.0 ** -9,))
        rec = ms_error(cfg)
        assert rec.rows[0][2] == 0.0

    def test_chunk_invariance(self):
        cfg = self._cfg(M=5)
        a = ms_error(cfg, chunk_size=2)
        b = ms_error(cfg)
        assert a.rows == b.rows

    def test_errors_decrease_along_ladder(self):
        cfg = self._cfg(params=ModelParams(alpha=0.5, lam=1, epsilon=0.0), M=1)
        rec = ms_error(cfg)
        errs = {row[0]: row[2] for row in rec.rows}
        assert errs[2.0 ** -8] < errs[2.0 ** -7]

    def test_coupling_matches_manual_coarse_run(self):
        # drive the coarse scheme by hand on block-summed increments of the
        # same realization stream and compare against the harness table
        from dsnls.integrator import step
        from dsnls.noise import coarsen, forcing_weights

        cfg = self._cfg(M=1, tau_ladder=(2.0 ** -7,))
        grid, params, noise = cfg.grid, cfg.params, cfg.noise
        n_fine = cfg.n_steps
        path = generate_path(noise, cfg.tau_ref, n_fine, 0)
        weights = forcing_weights(grid, noise, params.epsilon)
        psi0 = resolve_initial(grid, "sine")

        prop_f = make_propagator(grid, cfg.tau_ref, params.alpha)
        fine = psi0.copy()
        for n in range(n_fine):
            fine = step(fine, prop_f, params, weights @ path.increments[n])

        coarse_path = coarsen(path, 4)
        prop_c = make_propagator(grid, 2.0 ** -7, params.alpha)
        coarse = psi0.copy()
        for n in range(coarse_path.n_steps):
            coarse = step(coarse, prop_c, params, weights @ coarse_path.increments[n])

        expected = float(np.sqrt(grid.h * (np.abs(fine - coarse) ** 2).sum()))
        rec = ms_error(cfg)
        assert rec.rows[0][2] == pytest.approx(expected, rel=1e-12)

    def test_horizon_table(self):
        cfg = self._cfg(kind="error", horizons=(0.125, 0.25), T=0.25)
        rec = ms_error(cfg)
        taus = sorted({row[0] for row in rec.rows})
        times = sorted({row[1] for row in rec.rows})
        assert taus == [2.0 ** -8, 2.0 ** -7]
        assert times == [0.125, 0.25]
        assert len(rec.rows) == 4


class TestOrderFit:
    def test_exact_linear_power_law(self):
        taus = [2.0 ** -k for k in range(4, 10)]
        fit = order_fit([(t, 3.7 * t) for t in taus])
        assert fit.slope == pytest.approx(1.0, abs=1e-12)
        assert fit.residual <= 1e-12

    def test_exact_quadratic_power_law(self):
        taus = [2.0 ** -k for k in range(4, 10)]
        fit = order_fit([(t, 0.2 * t ** 2) for t in taus])
        assert fit.slope == pytest.approx(2.0, abs=1e-12)

    def test_warns_and_drops_nonpositive(self):
        taus = [2.0 ** -k for k in range(4, 8)]
        pairs = [(t, 2.0 * t) for t in taus] + [(2.0 ** -9, 0.0)]
        with pytest.warns(UserWarning):
            fit = order_fit(pairs)
        assert fit.slope == pytest.approx(1.0, abs=1e-12)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            order_fit([(0.1, 0.1), (0.2, 0.2)])
