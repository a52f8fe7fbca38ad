"""Score-model priors, noise/scaling schedules, and exact posterior oracles.

A score model exposes ``score(x, sigma) = grad_x log p(x; sigma)`` where
``p(.; sigma)`` is the prior convolved with ``N(0, sigma^2 I)``.  The two
analytic families (diagonal Gaussian and diagonal-covariance Gaussian
mixture) stay closed-form at every noise level, which makes the sampler's
behaviour exactly checkable against conjugate posteriors.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import NumericsError
from .forward import LinearOperatorSVD, MeasurementVector, NoiseModel, _as_array

_LOG_2PI = np.log(2.0 * np.pi)


class ScoreModel(ABC):
    """Prior accessed only through the score of its sigma-smoothed density.

    ``score`` accepts ``(n,)`` or ``(..., n)`` arrays and maps the trailing
    axis; implementations must be pure and safe to call concurrently.
    """

    dim: int

    @abstractmethod
    def score(self, x: np.ndarray, sigma: float) -> np.ndarray:
        ...

    @property
    @abstractmethod
    def marginal_scale(self) -> float:
        """RMS per-coordinate scale of the prior, used to seed unconditional draws."""


def _broadcast_param(value, dim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(dim, float(arr))
    if arr.shape != (dim,):
        raise ValueError(f"parameter must be scalar or length-{dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameter contains non-finite values")
    return arr


class GaussianPrior(ScoreModel):
    """Diagonal Gaussian prior N(mean, diag(variance))."""

    def __init__(self, dim: int, mean=0.0, variance=1.0):
        self.dim = int(dim)
        self.mean = _broadcast_param(mean, self.dim)
        self.variance = _broadcast_param(variance, self.dim)
        if np.any(self.variance <= 0):
            raise ValueError("variance must be positive")

    def score(self, x, sigma):
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        x = np.asarray(x, dtype=float)
        return -(x - self.mean) / (self.variance + sigma * sigma)

    def log_pdf(self, x, sigma=0.0):
        x = np.asarray(x, dtype=float)
        var = self.variance + sigma * sigma
        return -0.5 * np.sum((x - self.mean) ** 2 / var + np.log(var) + _LOG_2PI, axis=-1)

    @property
    def marginal_scale(self):
        return float(np.sqrt(np.mean(self.variance + self.mean**2)))


class GmmPrior(ScoreModel):
    """Gaussian mixture prior with diagonal component covariances.

    Smoothing by sigma adds sigma^2 to every component variance, so the
    smoothed prior is again a mixture of the same form.  Responsibilities are
    evaluated in log space (max-subtraction) to survive high dimensions.
    """

    def __init__(self, weights, means, variances):
        w = np.asarray(weights, dtype=float)
        mu = np.atleast_2d(np.asarray(means, dtype=float))
        var = np.atleast_2d(np.asarray(variances, dtype=float))
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-D sequence")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if mu.shape[0] != w.size or var.shape != mu.shape:
            raise ValueError(
                f"shape mismatch: {w.size} weights, means {mu.shape}, variances {var.shape}"
            )
        if np.any(var <= 0):
            raise ValueError("variances must be positive")
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(var)):
            raise ValueError("means/variances contain non-finite values")
        self.weights = w / w.sum()
        self.means = mu
        self.variances = var
        self.dim = mu.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.size

    def smoothed(self, sigma: float) -> "GmmPrior":
        """The same mixture with sigma^2 merged into every component variance."""
        if sigma == 0.0:
            return self
        return GmmPrior(self.weights, self.means, self.variances + sigma * sigma)

    def _component_log_pdf(self, x):
        """(..., n) -> (..., K) log N(x; mu_k, diag(var_k))."""
        x = np.asarray(x, dtype=float)
        diff = x[..., None, :] - self.means
        return -0.5 * np.sum(
            diff * diff / self.variances + np.log(self.variances) + _LOG_2PI, axis=-1
        )

    def log_pdf(self, x, sigma=0.0):
        widened = self.smoothed(sigma)
        comp = widened._component_log_pdf(x)
        return logsumexp(comp + np.log(widened.weights), axis=-1)

    def score(self, x, sigma):
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        widened = self.smoothed(sigma)
        x = np.asarray(x, dtype=float)
        log_comp = widened._component_log_pdf(x) + np.log(widened.weights)
        log_resp = log_comp - logsumexp(log_comp, axis=-1, keepdims=True)
        resp = np.exp(log_resp)
        comp_scores = -(x[..., None, :] - widened.means) / widened.variances
        return np.sum(resp[..., :, None] * comp_scores, axis=-2)

    @property
    def marginal_scale(self):
        second_moment = self.weights @ np.mean(self.variances + self.means**2, axis=1)
        return float(np.sqrt(second_moment))


def gaussian_score(prior: GaussianPrior, x, sigma: float) -> np.ndarray:
    return prior.score(x, sigma)


def gmm_score(prior: GmmPrior, x, sigma: float) -> np.ndarray:
    return prior.score(x, sigma)


def fit_gmm_prior(
    images,
    n_components: int,
    iterations: int = 25,
    seed: int = 0,
    variance_floor: float = 1e-4,
) -> GmmPrior:
    """Fit a diagonal-covariance GMM to flattened training images via EM.

    Components are initialised from randomly chosen training samples with the
    pooled per-pixel variance, so the fit is deterministic per seed.
    """
    data = np.stack([_as_array(img).ravel() for img in images])
    n_samples, dim = data.shape
    if n_components < 1 or n_components > n_samples:
        raise ValueError(f"need 1 <= n_components <= {n_samples}, got {n_components}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(n_samples, size=n_components, replace=False)
    means = data[picks].copy()
    pooled = np.maximum(data.var(axis=0), variance_floor)
    variances = np.tile(pooled, (n_components, 1))
    weights = np.full(n_components, 1.0 / n_components)

    for _ in range(iterations):
        model = GmmPrior(weights, means, variances)
        log_comp = model._component_log_pdf(data) + np.log(model.weights)
        log_resp = log_comp - logsumexp(log_comp, axis=-1, keepdims=True)
        resp = np.exp(log_resp)  # (n_samples, K)
        counts = resp.sum(axis=0)
        weights = counts / n_samples
        means = (resp.T @ data) / counts[:, None]
        sq = resp.T @ (data * data) / counts[:, None]
        variances = np.maximum(sq - means * means, variance_floor)
    return GmmPrior(weights, means, variances)


class DiffusionSchedule(ABC):
    """Noise level sigma(t) and scaling s(t) with analytic derivatives.

    sigma is strictly increasing on the valid interval ``(t_min, t_max]``,
    and ``t_of_sigma`` inverts it.
    """

    kind: str
    t_min: float
    t_max: float

    @abstractmethod
    def sigma(self, t: float) -> float:
        ...

    @abstractmethod
    def sigma_deriv(self, t: float) -> float:
        ...

    @abstractmethod
    def scale(self, t: float) -> float:
        ...

    @abstractmethod
    def scale_deriv(self, t: float) -> float:
        ...

    @abstractmethod
    def t_of_sigma(self, sigma: float) -> float:
        ...

    def check_t(self, t: float) -> None:
        if not (self.t_min < t <= self.t_max):
            raise ValueError(
                f"t={t} outside the {self.kind} schedule domain ({self.t_min}, {self.t_max}]"
            )


class EdmSchedule(DiffusionSchedule):
    """Identity schedule: sigma(t) = t, s(t) = 1."""

    kind = "edm"

    def __init__(self, t_max: float = 1e4):
        self.t_min = 0.0
        self.t_max = float(t_max)

    def sigma(self, t):
        return float(t)

    def sigma_deriv(self, t):
        return 1.0

    def scale(self, t):
        return 1.0

    def scale_deriv(self, t):
        return 0.0

    def t_of_sigma(self, sigma):
        return float(sigma)


class VpSchedule(DiffusionSchedule):
    """Variance-preserving schedule on t in (0, 1].

    sigma(t) = sqrt(exp(b(t)) - 1) and s(t) = exp(-b(t)/2) with
    b(t) = beta_d t^2 / 2 + beta_min t, beta_d = beta_max - beta_min.
    """

    kind = "vp"

    def __init__(self, beta_min: float = 0.1, beta_max: float = 20.0):
        if beta_min <= 0 or beta_max <= beta_min:
            raise ValueError(f"need 0 < beta_min < beta_max, got {beta_min}, {beta_max}")
        self.beta_min = float(beta_min)
        self.beta_d = float(beta_max - beta_min)
        self.t_min = 0.0
        self.t_max = 1.0

    def _b(self, t):
        return 0.5 * self.beta_d * t * t + self.beta_min * t

    def sigma(self, t):
        return float(np.sqrt(np.expm1(self._b(t))))

    def sigma_deriv(self, t):
        sg = self.sigma(t)
        return float(0.5 * (self.beta_min + self.beta_d * t) * (sg + 1.0 / sg))

    def scale(self, t):
        return float(np.exp(-0.5 * self._b(t)))

    def scale_deriv(self, t):
        return float(-0.5 * (self.beta_min + self.beta_d * t) * self.scale(t))

    def t_of_sigma(self, sigma):
        log1p = np.log1p(sigma * sigma)
        return float(
            (np.sqrt(self.beta_min**2 + 2.0 * self.beta_d * log1p) - self.beta_min) / self.beta_d
        )


class VeSchedule(DiffusionSchedule):
    """Variance-exploding schedule: sigma(t) = sqrt(t), s(t) = 1."""

    kind = "ve"

    def __init__(self, sigma_min: float = 1e-4, sigma_max: float = 100.0):
        if sigma_min <= 0 or sigma_max <= sigma_min:
            raise ValueError(f"need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}")
        self.sigma_min = float(sigma_min)
        self.sigma_max = float(sigma_max)
        self.t_min = sigma_min * sigma_min
        self.t_max = sigma_max * sigma_max

    def sigma(self, t):
        return float(np.sqrt(t))

    def sigma_deriv(self, t):
        return float(0.5 / np.sqrt(t))

    def scale(self, t):
        return 1.0

    def scale_deriv(self, t):
        return 0.0

    def t_of_sigma(self, sigma):
        return float(sigma * sigma)

    def check_t(self, t):
        # σ_min^2 is a valid grid endpoint, hence the closed lower bound.
        if not (self.t_min <= t <= self.t_max):
            raise ValueError(
                f"t={t} outside the ve schedule domain [{self.t_min}, {self.t_max}]"
            )


_SCHEDULES = {"edm": EdmSchedule, "vp": VpSchedule, "ve": VeSchedule}


def make_schedule(kind: str, **params) -> DiffusionSchedule:
    try:
        cls = _SCHEDULES[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown schedule kind {kind!r}; expected one of {sorted(_SCHEDULES)}")
    return cls(**params)


def schedule_eval(sched: DiffusionSchedule, t: float):
    """(sigma, sigma', s, s') at time t, rejecting t outside the valid interval."""
    sched.check_t(t)
    return sched.sigma(t), sched.sigma_deriv(t), sched.scale(t), sched.scale_deriv(t)


@dataclass
class MixturePosterior:
    """Exact Gaussian-mixture posterior with full component covariances.

    The conjugate update of a diagonal-covariance mixture prior under a
    general linear operator produces full covariances, so this result type is
    wider than the prior's.
    """

    weights: np.ndarray
    means: np.ndarray        # (K, n)
    covariances: np.ndarray  # (K, n, n)

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def pdf(self, points: np.ndarray) -> np.ndarray:
        """Density at (..., n) points (practical for small n)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1 and self.means.shape[1] == 1:
            pts = pts[:, None]
        out = np.zeros(pts.shape[:-1])
        n = self.means.shape[1]
        for w, mu, cov in zip(self.weights, self.means, self.covariances):
            diff = pts - mu
            chol = np.linalg.cholesky(cov)
            solved = np.linalg.solve(chol, diff[..., None])[..., 0]
            quad = np.sum(solved * solved, axis=-1)
            logdet = 2.0 * np.sum(np.log(np.diag(chol)))
            out += w * np.exp(-0.5 * (quad + logdet + n * _LOG_2PI))
        return out


def gaussian_posterior_oracle(
    prior: GaussianPrior,
    op: LinearOperatorSVD,
    noise: NoiseModel,
    y: MeasurementVector,
):
    """Dense conjugate posterior (mean, covariance) for a Gaussian prior.

    precision = A^T A / sigma_y^2 + diag(1/variance); intended as a test
    oracle for n <= 4096.
    """
    if noise.sigma_y <= 0:
        raise ValueError("posterior oracle requires sigma_y > 0")
    a = op.as_matrix()
    yv = _as_array(y)
    if a.shape != (yv.size, prior.dim):
        raise ValueError(
            f"shape mismatch: operator {a.shape}, measurement {yv.size}, prior dim {prior.dim}"
        )
    inv_noise = 1.0 / noise.sigma_y**2
    with np.errstate(over="ignore", divide="ignore"):
        precision = inv_noise * (a.T @ a) + np.diag(1.0 / prior.variance)
        rhs = inv_noise * (a.T @ yv) + prior.mean / prior.variance
    if not np.all(np.isfinite(precision)):
        raise NumericsError("posterior precision overflowed")
    try:
        chol = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"posterior precision is singular: {exc}") from exc
    identity = np.eye(prior.dim)
    inv_chol = np.linalg.solve(chol, identity)
    covariance = inv_chol.T @ inv_chol
    mean = covariance @ rhs
    return mean, covariance


def gmm_posterior_oracle(
    prior: GmmPrior,
    op: LinearOperatorSVD,
    noise: NoiseModel,
    y: MeasurementVector,
) -> MixturePosterior:
    """Exact mixture posterior: conjugate component updates, evidence reweighting.

    Component k's new weight is proportional to
    ``w_k N(y; A mu_k, A Sigma_k A^T + sigma_y^2 I)``, normalized in log space.
    """
    if noise.sigma_y <= 0:
        raise ValueError("posterior oracle requires sigma_y > 0")
    a = op.as_matrix()
    yv = _as_array(y)
    m, n = a.shape
    if n != prior.dim or yv.size != m:
        raise ValueError(
            f"shape mismatch: operator {a.shape}, measurement {yv.size}, prior dim {prior.dim}"
        )
    inv_noise = 1.0 / noise.sigma_y**2
    gram = a.T @ a

    k = prior.n_components
    means = np.empty((k, n))
    covs = np.empty((k, n, n))
    log_evidence = np.empty(k)
    for i in range(k):
        var = prior.variances[i]
        mu = prior.means[i]
        precision = inv_noise * gram + np.diag(1.0 / var)
        rhs = inv_noise * (a.T @ yv) + mu / var
        chol = np.linalg.cholesky(precision)
        inv_chol = np.linalg.solve(chol, np.eye(n))
        covs[i] = inv_chol.T @ inv_chol
        means[i] = covs[i] @ rhs
        # marginal evidence N(y; A mu, A Sigma A^T + sigma_y^2 I)
        marg_cov = a @ (var[:, None] * a.T) + noise.sigma_y**2 * np.eye(m)
        diff = yv - a @ mu
        mchol = np.linalg.cholesky(marg_cov)
        solved = np.linalg.solve(mchol, diff)
        logdet = 2.0 * np.sum(np.log(np.diag(mchol)))
        with np.errstate(over="ignore"):
            log_evidence[i] = -0.5 * (solved @ solved + logdet + m * _LOG_2PI)

    log_w = np.log(prior.weights) + log_evidence
    if not np.any(np.isfinite(log_w)):
        raise NumericsError("all component evidences underflowed")
    log_w = log_w - logsumexp(log_w)
    return MixturePosterior(weights=np.exp(log_w), means=means, covariances=covs)
