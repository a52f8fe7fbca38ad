"""Reverse-time SDE integration and the denoising-posterior (prior) step.

The reverse dynamics are

    dx = [ (s'/s) x - 2 s sigma' sigma score(x/s; sigma) ] dt
         + s sqrt(2 sigma' sigma) dw,

integrated from high to low noise on a warped sigma grid.  Starting the
integration at noise level rho from a noisy iterate z draws (approximately)
from the denoising posterior p(x) exp(-||x - z||^2 / (2 rho^2)), which is the
prior half of the split Gibbs sweep.

Note the score factor is ``2 s sigma' sigma``: taking the gradient of
``log p(x/s; sigma)`` with respect to the unscaled state costs a factor 1/s,
and only this form preserves the marginals for non-identity scalings (it is
also what the canonical denoiser-based formulation expands to).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError
from .forward import ImageGrid
from .formats import write_float_raster
from .priors import DiffusionSchedule, ScoreModel

_METHODS = ("euler_maruyama", "heun_stochastic")


@dataclass(frozen=True)
class ReverseSdeConfig:
    """Discretization settings for one reverse-SDE integration."""

    steps: int = 100
    step_exponent: float = 7.0
    sigma_terminal: float = 1e-3
    method: str = "heun_stochastic"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.step_exponent <= 0:
            raise ValueError(f"step_exponent must be > 0, got {self.step_exponent}")
        if self.sigma_terminal <= 0:
            raise ValueError(f"sigma_terminal must be > 0, got {self.sigma_terminal}")
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}, got {self.method!r}")


@dataclass
class SdeTrajectory:
    """Recorded states x_{t_i} along one integration, times strictly decreasing."""

    states: list = field(default_factory=list)
    times: list = field(default_factory=list)
    seed: int | None = None

    def append(self, t: float, state: np.ndarray) -> None:
        self.times.append(float(t))
        self.states.append(np.array(state, copy=True))


def sigma_grid(sigma_max: float, sigma_end: float, steps: int, exponent: float) -> np.ndarray:
    """Warped noise grid from sigma_max down to sigma_end (steps+1 values).

    sigma_i = (sigma_max^(1/p) + (i/N) (sigma_end^(1/p) - sigma_max^(1/p)))^p,
    with the endpoints pinned exactly.
    """
    if sigma_end <= 0 or sigma_max <= sigma_end:
        raise ValueError(f"need sigma_max > sigma_end > 0, got {sigma_max}, {sigma_end}")
    inv = 1.0 / exponent
    frac = np.arange(steps + 1) / steps
    grid = (sigma_max**inv + frac * (sigma_end**inv - sigma_max**inv)) ** exponent
    grid[0] = sigma_max
    grid[-1] = sigma_end
    return grid


def _drift_diffusion(x, t, score, sched):
    sg = sched.sigma(t)
    sg_d = sched.sigma_deriv(t)
    sc = sched.scale(t)
    sc_d = sched.scale_deriv(t)
    # divergence shows up as inf/nan and is caught by the per-step check
    with np.errstate(over="ignore", invalid="ignore"):
        drift = (sc_d / sc) * x - 2.0 * sc * sg_d * sg * score.score(x / sc, sg)
    diffusion = sc * np.sqrt(2.0 * sg_d * sg)
    return drift, diffusion


def reverse_sde_step(
    x_t: np.ndarray,
    t_from: float,
    t_to: float,
    score: ScoreModel,
    sched: DiffusionSchedule,
    rng: np.random.Generator,
    step_index: int | None = None,
) -> np.ndarray:
    """One Euler-Maruyama step of the reverse SDE from t_from down to t_to."""
    if t_to >= t_from:
        raise ValueError(f"need t_to < t_from, got {t_to} >= {t_from}")
    sched.check_t(t_from)
    sched.check_t(t_to)
    x_t = np.asarray(x_t, dtype=float)
    dt = t_to - t_from
    drift, diffusion = _drift_diffusion(x_t, t_from, score, sched)
    noise = rng.standard_normal(x_t.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        out = x_t + drift * dt + diffusion * np.sqrt(-dt) * noise
    if not np.all(np.isfinite(out)):
        where = f" at step {step_index}" if step_index is not None else ""
        raise DivergenceError(f"reverse SDE diverged{where} (t={t_from:g} -> {t_to:g})", step_index)
    return out


def _heun_step(x_t, t_from, t_to, score, sched, rng, step_index=None):
    x_t = np.asarray(x_t, dtype=float)
    dt = t_to - t_from
    sqrt_dt = np.sqrt(-dt)
    drift_f, diff_f = _drift_diffusion(x_t, t_from, score, sched)
    noise = rng.standard_normal(x_t.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        x_pred = x_t + drift_f * dt + diff_f * sqrt_dt * noise
        drift_t, diff_t = _drift_diffusion(x_pred, t_to, score, sched)
        out = x_t + 0.5 * (drift_f + drift_t) * dt + 0.5 * (diff_f + diff_t) * sqrt_dt * noise
    if not np.all(np.isfinite(out)):
        where = f" at step {step_index}" if step_index is not None else ""
        raise DivergenceError(f"reverse SDE diverged{where} (t={t_from:g} -> {t_to:g})", step_index)
    return out


def integrate_reverse_sde(
    x: np.ndarray,
    sigma_start: float,
    score: ScoreModel,
    sched: DiffusionSchedule,
    cfg: ReverseSdeConfig,
    rng: np.random.Generator,
    trajectory: SdeTrajectory | None = None,
) -> np.ndarray:
    """Integrate from noise level sigma_start down to cfg.sigma_terminal.

    ``x`` is the state at t(sigma_start); the returned state is at
    t(cfg.sigma_terminal), still in the scaled variable of the schedule.
    """
    sigmas = sigma_grid(sigma_start, cfg.sigma_terminal, cfg.steps, cfg.step_exponent)
    times = np.array([sched.t_of_sigma(s) for s in sigmas])
    sched.check_t(times[0])
    sched.check_t(times[-1])
    step = _heun_step if cfg.method == "heun_stochastic" else reverse_sde_step
    if trajectory is not None:
        trajectory.append(times[0], x)
    for i in range(cfg.steps):
        x = step(x, times[i], times[i + 1], score, sched, rng, step_index=i)
        if trajectory is not None:
            trajectory.append(times[i + 1], x)
    return x


def sample_prior_unconditional(
    score: ScoreModel,
    sched: DiffusionSchedule,
    cfg: ReverseSdeConfig,
    sigma_max: float,
    dim: int,
    rng: np.random.Generator,
    count: int | None = None,
) -> np.ndarray:
    """Draw from the prior by integrating pure noise down to sigma_terminal.

    The start state is N(0, s(t0)^2 (sigma_max^2 + c^2) I) with c the prior's
    marginal scale, matching the smoothed prior at sigma_max.  ``count`` adds
    a leading batch axis of independent draws.
    """
    if sigma_max <= cfg.sigma_terminal:
        raise ValueError(f"sigma_max must exceed sigma_terminal, got {sigma_max}")
    t0 = sched.t_of_sigma(sigma_max)
    c = score.marginal_scale
    std = sched.scale(t0) * np.sqrt(sigma_max**2 + c**2)
    shape = (dim,) if count is None else (count, dim)
    x = std * rng.standard_normal(shape)
    x = integrate_reverse_sde(x, sigma_max, score, sched, cfg, rng)
    return x / sched.scale(sched.t_of_sigma(cfg.sigma_terminal))


def prior_step(
    z: np.ndarray,
    rho: float,
    score: ScoreModel,
    sched: DiffusionSchedule,
    cfg: ReverseSdeConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample approximately from p(x | z) with z = x + rho * noise.

    Initializes the scaled state at noise level exactly rho from the noisy
    iterate and integrates the reverse SDE down to sigma_terminal.
    """
    if rho <= cfg.sigma_terminal:
        raise ValueError(f"rho ({rho}) must exceed sigma_terminal ({cfg.sigma_terminal})")
    z = np.asarray(z, dtype=float)
    t_star = sched.t_of_sigma(rho)
    x = sched.scale(t_star) * z
    x = integrate_reverse_sde(x, rho, score, sched, cfg, rng)
    return x / sched.scale(sched.t_of_sigma(cfg.sigma_terminal))


def dump_trajectory(traj: SdeTrajectory, height: int, width: int, out_dir, sched=None) -> None:
    """Write one float raster per saved state plus a step,t,sigma,norm CSV."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trajectory.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "t", "sigma", "norm"])
        for i, (t, state) in enumerate(zip(traj.times, traj.states)):
            sg = sched.sigma(t) if sched is not None else float("nan")
            writer.writerow([i, repr(float(t)), repr(float(sg)), repr(float(np.linalg.norm(state)))])
            grid = ImageGrid(np.asarray(state, dtype=float).reshape(height, width))
            write_float_raster(grid, out / f"state_{i:04d}.imgf32")
