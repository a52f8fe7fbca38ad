import numpy as np
import pytest

from diffsr.errors import DivergenceError
from diffsr.priors import EdmSchedule, GaussianPrior, GmmPrior, VeSchedule, VpSchedule
from diffsr.sde import (
    ReverseSdeConfig,
    SdeTrajectory,
    dump_trajectory,
    integrate_reverse_sde,
    prior_step,
    reverse_sde_step,
    sample_prior_unconditional,
    sigma_grid,
)


class _ZeroNoise:
    """rng stand-in that forces xi = 0."""

    def standard_normal(self, shape):
        return np.zeros(shape)


class _ZeroScore:
    dim = 1
    marginal_scale = 1.0

    def score(self, x, sigma):
        return np.zeros_like(x)


class _ExplodingScore:
    dim = 1
    marginal_scale = 1.0

    def score(self, x, sigma):
        return np.full_like(x, 1e308)


class TestSigmaGrid:
    def test_endpoints_exact_and_decreasing(self):
        grid = sigma_grid(80.0, 1e-3, 100, 7.0)
        assert grid[0] == 80.0
        assert grid[-1] == 1e-3
        assert grid.shape == (101,)
        assert np.all(np.diff(grid) < 0)

    def test_matches_warped_formula(self):
        smax, send, n, p = 5.0, 0.01, 10, 7.0
        grid = sigma_grid(smax, send, n, p)
        i = np.arange(n + 1)
        want = (smax ** (1 / p) + (i / n) * (send ** (1 / p) - smax ** (1 / p))) ** p
        assert np.max(np.abs(grid[1:-1] - want[1:-1])) < 1e-12

    def test_rejects_bad_range(self):
        with pytest.raises(ValueError):
            sigma_grid(0.001, 0.001, 10, 7.0)
        with pytest.raises(ValueError):
            sigma_grid(1.0, -0.1, 10, 7.0)


class TestReverseSdeConfig:
    def test_defaults(self):
        cfg = ReverseSdeConfig()
        assert cfg.steps == 100
        assert cfg.step_exponent == 7.0
        assert cfg.sigma_terminal == 1e-3
        assert cfg.method == "heun_stochastic"

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"steps": 0},
            {"sigma_terminal": 0.0},
            {"method": "milstein"},
            {"step_exponent": -1.0},
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ReverseSdeConfig(**kwargs)


class TestReverseSdeStep:
    def test_zero_score_zero_noise_is_identity(self):
        x = np.array([0.3, -1.2])
        out = reverse_sde_step(x, 1.0, 0.9, _ZeroScore(), EdmSchedule(), _ZeroNoise())
        assert np.array_equal(out, x)

    def test_small_step_continuity(self):
        prior = GaussianPrior(1)
        x = np.array([1.0])
        deltas = []
        for dt in (1e-2, 1e-4, 1e-6):
            rng = np.random.default_rng(0)
            out = reverse_sde_step(x, 0.5, 0.5 - dt, prior, EdmSchedule(), rng)
            deltas.append(abs(out[0] - x[0]))
        assert deltas[0] > deltas[1] > deltas[2]
        assert deltas[2] < 1e-2

    def test_linear_score_mean_contraction(self):
        # Closed-form one-step mean for the linear score of N(0, 1):
        # E[x'] = x0 (1 + 2 t_f / (1 + t_f^2) dt); Monte Carlo over 1e5 paths.
        prior = GaussianPrior(1)
        t_from, t_to = 0.5, 0.45
        x0 = 1.0
        dt = t_to - t_from
        expected = x0 * (1.0 + 2.0 * t_from / (1.0 + t_from**2) * dt)
        rng = np.random.default_rng(11)
        paths = np.full((100_000, 1), x0)
        out = reverse_sde_step(paths, t_from, t_to, prior, EdmSchedule(), rng)
        assert abs(out.mean() - expected) < 1e-3

    def test_rejects_forward_step(self):
        with pytest.raises(ValueError):
            reverse_sde_step(np.zeros(1), 0.5, 0.6, _ZeroScore(), EdmSchedule(),
                             np.random.default_rng(0))

    def test_divergence_raises_with_index(self):
        rng = np.random.default_rng(0)
        with pytest.raises(DivergenceError) as err:
            reverse_sde_step(np.ones(1), 1.0, 0.5, _ExplodingScore(), EdmSchedule(),
                             rng, step_index=7)
        assert "step 7" in str(err.value)
        assert err.value.step_index == 7


class TestIntegrate:
    def test_deterministic_per_seed(self):
        prior = GaussianPrior(4)
        cfg = ReverseSdeConfig(steps=20)
        x0 = np.ones(4)
        out1 = integrate_reverse_sde(x0, 5.0, prior, EdmSchedule(), cfg,
                                     np.random.default_rng(3))
        out2 = integrate_reverse_sde(x0, 5.0, prior, EdmSchedule(), cfg,
                                     np.random.default_rng(3))
        assert np.array_equal(out1, out2)

    def test_trajectory_recording(self):
        prior = GaussianPrior(2)
        cfg = ReverseSdeConfig(steps=10)
        traj = SdeTrajectory(seed=3)
        integrate_reverse_sde(np.ones(2), 5.0, prior, EdmSchedule(), cfg,
                              np.random.default_rng(3), trajectory=traj)
        assert len(traj.states) == 11
        assert len(traj.times) == 11
        assert np.all(np.diff(traj.times) < 0)
        assert all(np.all(np.isfinite(s)) for s in traj.states)

    def test_divergence_names_step(self):
        cfg = ReverseSdeConfig(steps=5)
        with pytest.raises(DivergenceError) as err:
            integrate_reverse_sde(np.ones(1), 5.0, _ExplodingScore(), EdmSchedule(), cfg,
                                  np.random.default_rng(0))
        assert err.value.step_index == 0

    def test_dump_trajectory(self, tmp_path):
        prior = GaussianPrior(4)
        cfg = ReverseSdeConfig(steps=4)
        traj = SdeTrajectory()
        integrate_reverse_sde(np.ones(4), 2.0, prior, EdmSchedule(), cfg,
                              np.random.default_rng(1), trajectory=traj)
        dump_trajectory(traj, 2, 2, tmp_path / "traj", sched=EdmSchedule())
        csv_text = (tmp_path / "traj" / "trajectory.csv").read_text()
        assert csv_text.splitlines()[0] == "step,t,sigma,norm"
        assert len(list((tmp_path / "traj").glob("state_*.imgf32"))) == 5


class TestPriorStepGaussian:
    def test_conjugate_posterior_moments(self):
        # N(0,1) prior, rho=1, z=2 -> posterior N(1, 0.5); 2e4 batched draws
        prior = GaussianPrior(1)
        cfg = ReverseSdeConfig()
        rng = np.random.default_rng(21)
        z = np.full((20_000, 1), 2.0)
        out = prior_step(z, 1.0, prior, EdmSchedule(), cfg, rng)
        assert out.mean() == pytest.approx(1.0, abs=0.04)
        assert out.var() == pytest.approx(0.5, rel=0.05)

    def test_vanishing_rho_returns_input(self):
        prior = GaussianPrior(16)
        cfg = ReverseSdeConfig()
        rng = np.random.default_rng(4)
        z = rng.random(16)
        out = prior_step(z, 2e-3, prior, EdmSchedule(), cfg, rng)
        assert np.linalg.norm(out - z) <= 3 * cfg.sigma_terminal * np.sqrt(16)

    def test_rejects_rho_below_terminal(self):
        prior = GaussianPrior(1)
        cfg = ReverseSdeConfig()
        with pytest.raises(ValueError):
            prior_step(np.zeros(1), 5e-4, prior, EdmSchedule(), cfg,
                       np.random.default_rng(0))

    def test_denoising_posterior_across_rho(self):
        # module contract: matches the conjugate posterior within 3 MC
        # standard errors for every coupling level
        prior = GaussianPrior(1)
        cfg = ReverseSdeConfig()
        draws = 20_000
        for i, rho in enumerate((0.3, 1.0, 3.0, 10.0)):
            rng = np.random.default_rng(100 + i)
            z_val = 1.5
            post_mean = z_val / (1.0 + rho**2)
            post_var = rho**2 / (1.0 + rho**2)
            z = np.full((draws, 1), z_val)
            out = prior_step(z, rho, prior, EdmSchedule(), cfg, rng)
            se_mean = np.sqrt(post_var / draws)
            se_var = post_var * np.sqrt(2.0 / draws)
            assert abs(out.mean() - post_mean) < 3 * se_mean, f"rho={rho}"
            assert abs(out.var() - post_var) < 3 * se_var + 0.01 * post_var, f"rho={rho}"

    def test_step_count_convergence(self):
        # doubling steps moves the posterior-mean estimate by less than MC error
        prior = GaussianPrior(1)
        rng_a = np.random.default_rng(92)
        rng_b = np.random.default_rng(92)
        z = np.full((50_000, 1), 2.0)
        m50 = prior_step(z, 1.0, prior, EdmSchedule(), ReverseSdeConfig(steps=50), rng_a).mean()
        m100 = prior_step(z, 1.0, prior, EdmSchedule(), ReverseSdeConfig(steps=100), rng_b).mean()
        se = np.sqrt(0.5 / 50_000)
        assert abs(m100 - m50) < se


class TestPriorStepGmm:
    def test_matches_quadrature_posterior_mean(self):
        prior = GmmPrior([0.5, 0.5], [[-2.0], [2.0]], [[1.0], [1.0]])
        rho, z_val = 0.5, 2.0
        grid = np.linspace(-10, 10, 20001)
        unnorm = np.exp(prior.log_pdf(grid[:, None])) * np.exp(
            -0.5 * (z_val - grid) ** 2 / rho**2
        )
        want = np.trapezoid(grid * unnorm, grid) / np.trapezoid(unnorm, grid)

        cfg = ReverseSdeConfig()
        rng = np.random.default_rng(31)
        out = prior_step(np.full((4000, 1), z_val), rho, prior, EdmSchedule(), cfg, rng)
        assert abs(out.mean() - want) < 0.02


class TestUnconditionalSampling:
    def test_gaussian_moments_edm(self):
        prior = GaussianPrior(1)
        cfg = ReverseSdeConfig()
        rng = np.random.default_rng(41)
        x = sample_prior_unconditional(prior, EdmSchedule(), cfg, 80.0, 1, rng, count=30_000)
        assert abs(x.mean()) < 0.03
        assert x.var() == pytest.approx(1.0, rel=0.03)

    def test_gaussian_moments_vp(self):
        prior = GaussianPrior(1)
        cfg = ReverseSdeConfig()
        rng = np.random.default_rng(42)
        x = sample_prior_unconditional(prior, VpSchedule(), cfg, 80.0, 1, rng, count=30_000)
        assert abs(x.mean()) < 0.03
        assert x.var() == pytest.approx(1.0, rel=0.03)

    def test_gaussian_moments_ve(self):
        prior = GaussianPrior(1)
        cfg = ReverseSdeConfig()
        rng = np.random.default_rng(43)
        x = sample_prior_unconditional(prior, VeSchedule(), cfg, 80.0, 1, rng, count=30_000)
        assert abs(x.mean()) < 0.03
        assert x.var() == pytest.approx(1.0, rel=0.03)

    def test_bimodal_mass_split(self):
        prior = GmmPrior([0.5, 0.5], [[-2.0], [2.0]], [[1.0], [1.0]])
        cfg = ReverseSdeConfig()
        rng = np.random.default_rng(44)
        x = sample_prior_unconditional(prior, EdmSchedule(), cfg, 80.0, 1, rng, count=10_000)
        upper = np.mean(x > 0)
        assert upper == pytest.approx(0.5, abs=0.02)

    def test_near_terminal_start_preserves_moments(self):
        # starting barely above sigma_terminal from the exact smoothed prior
        prior = GaussianPrior(1)
        cfg = ReverseSdeConfig(steps=8)
        rng = np.random.default_rng(45)
        x = sample_prior_unconditional(prior, EdmSchedule(), cfg, 2e-3, 1, rng, count=30_000)
        assert abs(x.mean()) < 0.03
        assert x.var() == pytest.approx(1.0, rel=0.03)

    def test_single_draw_shape(self):
        prior = GaussianPrior(5)
        cfg = ReverseSdeConfig(steps=10)
        x = sample_prior_unconditional(prior, EdmSchedule(), cfg, 10.0, 5,
                                       np.random.default_rng(0))
        assert x.shape == (5,)

    def test_euler_maruyama_variant_runs(self):
        prior = GaussianPrior(1)
        cfg = ReverseSdeConfig(steps=400, method="euler_maruyama")
        rng = np.random.default_rng(46)
        x = sample_prior_unconditional(prior, EdmSchedule(), cfg, 80.0, 1, rng, count=20_000)
        assert x.var() == pytest.approx(1.0, rel=0.05)


class TestVpEdmEquivalence:
    def test_marginal_moments_agree(self):
        # the same 1-D Gaussian prior sampled through either parameterization
        prior = GaussianPrior(1)
        cfg = ReverseSdeConfig()
        a = sample_prior_unconditional(prior, EdmSchedule(), cfg, 80.0, 1,
                                       np.random.default_rng(51), count=50_000)
        b = sample_prior_unconditional(prior, VpSchedule(), cfg, 80.0, 1,
                                       np.random.default_rng(52), count=50_000)
        assert abs(a.mean() - b.mean()) < 0.02
        assert abs(a.var() - b.var()) < 0.02 * a.var() + 0.02
