"""Budget-weight search: Gaussian-process surrogate with expected improvement.

The objective is noisy (privacy noise survives trial averaging), so the
surrogate learns an observation-noise level alongside its kernel
hyperparameters. Weights live on the probability simplex; the GP sees the
first three coordinates since the fourth is determined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg, stats
from scipy.optimize import minimize as _minimize

from tracesmith.data import Dataset
from tracesmith.dp import BudgetWeights, PrivacyLedger, split_budget
from tracesmith.generator import synthesize_dataset
from tracesmith.metrics import MetricConfig, resolve_metric
from tracesmith.synopsis import build_synopsis

JITTER_INITIAL = 1e-8
JITTER_MAX = 1e-4
FIT_RESTARTS = 8
CANDIDATES_RANDOM = 1000
CANDIDATES_LOCAL = 50
LOCAL_SIGMA = 0.05
FAILURE_ABORT_FRACTION = 0.2


class GPFitError(RuntimeError):
    """Surrogate fitting failed even after jitter escalation."""


class OptimizationAborted(RuntimeError):
    """Too many objective evaluations failed to continue meaningfully."""


def to_simplex(raw: Sequence[float]) -> BudgetWeights:
    """Normalize four positive reals onto the open probability simplex."""
    v = np.asarray(raw, dtype=float)
    if v.shape != (4,):
        raise ValueError(f"expected 4 raw parameters, got shape {v.shape}")
    if (v <= 0).any():
        raise ValueError(f"raw parameters must be strictly positive, got {v.tolist()}")
    w = v / v.sum()
    return BudgetWeights(*(float(x) for x in w))


def random_simplex_weights(rng) -> BudgetWeights:
    return to_simplex(rng.uniform(0.01, 1.0, 4))


def perturb_weights(weights: BudgetWeights, rng, sigma: float = LOCAL_SIGMA) -> BudgetWeights:
    raw = weights.as_array() + rng.normal(0.0, sigma, 4)
    return to_simplex(np.clip(raw, 1e-3, None))


@dataclass(frozen=True)
class Observation:
    weights: BudgetWeights
    error: float
    trial_errors: tuple[float, ...]
    phase: str  # "exploration" | "optimization"
    iteration: int

    def __post_init__(self):
        if self.trial_errors and not math.isclose(
            self.error, float(np.mean(self.trial_errors)), rel_tol=1e-12, abs_tol=1e-12
        ):
            raise ValueError("error must be the mean of trial_errors")

    def to_dict(self) -> dict:
        return {
            "weights": list(self.weights.as_tuple()),
            "error": self.error,
            "trial_errors": list(self.trial_errors),
            "phase": self.phase,
            "iteration": self.iteration,
        }


# --- Gaussian process surrogate ----------------------------------------------

_SQRT5 = math.sqrt(5.0)


def _matern52(x_a: np.ndarray, x_b: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    diff = (x_a[:, None, :] - x_b[None, :, :]) / lengthscales
    r = np.sqrt(np.maximum((diff * diff).sum(axis=2), 0.0))
    return (1.0 + _SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-_SQRT5 * r)


class GPModel:
    """Matérn-5/2 GP with per-dimension length-scales and learned noise.

    Outputs are standardized internally; predictions are returned in the
    original scale.
    """

    def __init__(
        self,
        x: np.ndarray,
        y: np.ndarray,
        lengthscales: np.ndarray,
        signal_var: float,
        noise_var: float,
    ):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.lengthscales = np.asarray(lengthscales, dtype=float)
        self.signal_var = float(signal_var)
        self.noise_var = float(noise_var)

        self.y_mean = float(self.y.mean())
        self.y_std = float(self.y.std())
        if self.y_std == 0.0:
            self.y_std = 1.0
        z = (self.y - self.y_mean) / self.y_std

        kernel = self.signal_var * _matern52(self.x, self.x, self.lengthscales)
        self._chol, self.jitter = _robust_cholesky(
            kernel + self.noise_var * np.eye(len(self.x))
        )
        self._alpha = linalg.cho_solve((self._chol, True), z, check_finite=False)

    def predict(self, x_query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation of the latent function."""
        x_query = np.atleast_2d(np.asarray(x_query, dtype=float))
        k_star = self.signal_var * _matern52(x_query, self.x, self.lengthscales)
        mean = k_star @ self._alpha
        v = linalg.solve_triangular(self._chol, k_star.T, lower=True, check_finite=False)
        var = np.maximum(self.signal_var - (v * v).sum(axis=0), 0.0)
        return mean * self.y_std + self.y_mean, np.sqrt(var) * self.y_std


def _robust_cholesky(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    jitter = JITTER_INITIAL
    eye = np.eye(len(matrix))
    while jitter <= JITTER_MAX:
        try:
            return linalg.cholesky(matrix + jitter * eye, lower=True), jitter
        except linalg.LinAlgError:
            jitter *= 10.0
    raise GPFitError(f"kernel matrix stayed singular up to jitter {JITTER_MAX}")


def _weights_to_inputs(all_weights: Sequence[BudgetWeights]) -> np.ndarray:
    return np.array([w.as_tuple()[:3] for w in all_weights])


def _log_marginal_likelihood_and_grad(theta, x, z, sq_dists):
    """theta = (log l1..l3, log signal_var, log noise_var); returns (-lml, -grad)."""
    n, dim = x.shape
    lengthscales = np.exp(theta[:dim])
    signal_var = math.exp(theta[dim])
    noise_var = math.exp(theta[dim + 1])

    r2 = sq_dists @ (1.0 / lengthscales**2)
    r = np.sqrt(np.maximum(r2, 0.0))
    base = np.exp(-_SQRT5 * r)
    k_unit = (1.0 + _SQRT5 * r + (5.0 / 3.0) * r2) * base
    kernel = signal_var * k_unit + (noise_var + JITTER_INITIAL) * np.eye(n)

    try:
        chol = linalg.cholesky(kernel, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return 1e25, np.zeros_like(theta)

    alpha = linalg.cho_solve((chol, True), z, check_finite=False)
    lml = -0.5 * float(z @ alpha)
    lml -= float(np.log(np.diag(chol)).sum())
    lml -= 0.5 * n * math.log(2.0 * math.pi)

    # gradient: 0.5 * tr((alpha alpha^T - K^-1) dK/dtheta)
    k_inv = linalg.cho_solve((chol, True), np.eye(n), check_finite=False)
    inner = np.outer(alpha, alpha) - k_inv

    grad = np.empty_like(theta)
    # d k / d r / r, times r^2's derivative; the r factors cancel analytically.
    dk_dr_over_r = signal_var * (-(5.0 / 3.0)) * (1.0 + _SQRT5 * r) * base
    for d in range(dim):
        dk = dk_dr_over_r * (-sq_dists[:, :, d] / lengthscales[d] ** 2)
        grad[d] = 0.5 * float((inner * dk).sum())
    grad[dim] = 0.5 * float((inner * (signal_var * k_unit)).sum())
    grad[dim + 1] = 0.5 * float(np.trace(inner) * noise_var)
    return -lml, -grad


def gp_fit(observations: Sequence[Observation]) -> GPModel:
    """Fit the surrogate to (weights, error) pairs by maximizing marginal
    likelihood from multiple restarts."""
    if len(observations) < 2:
        raise GPFitError(f"need at least 2 observations, got {len(observations)}")
    x = _weights_to_inputs([o.weights for o in observations])
    y = np.array([o.error for o in observations])
    return _fit_gp(x, y)


def _fit_gp(x: np.ndarray, y: np.ndarray) -> GPModel:
    y_std = float(y.std()) or 1.0
    z = (y - y.mean()) / y_std
    diff = x[:, None, :] - x[None, :, :]
    sq_dists = diff * diff

    dim = x.shape[1]
    bounds = [(math.log(1e-2), math.log(1e2))] * dim
    bounds += [(math.log(1e-4), math.log(1e4))]  # signal variance
    bounds += [(math.log(1e-8), math.log(1e2))]  # noise variance

    # Deterministic restarts: a fixed default start plus seeded random draws.
    starts = [np.concatenate([np.full(dim, math.log(0.3)), [0.0, math.log(0.1)]])]
    restart_rng = np.random.default_rng(0)
    for _ in range(FIT_RESTARTS - 1):
        starts.append(
            np.concatenate(
                [
                    restart_rng.uniform(math.log(0.05), math.log(2.0), dim),
                    [restart_rng.uniform(math.log(0.1), math.log(4.0))],
                    [restart_rng.uniform(math.log(1e-6), math.log(1.0))],
                ]
            )
        )

    best_theta, best_value = None, np.inf
    for start in starts:
        result = _minimize(
            _log_marginal_likelihood_and_grad,
            start,
            args=(x, z, sq_dists),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            # Hyperparameters only steer candidate ranking; modest precision
            # keeps the per-iteration refits cheap.
            options={"maxiter": 35, "ftol": 1e-6, "gtol": 1e-4},
        )
        if result.fun < best_value:
            best_theta, best_value = result.x, result.fun
    if best_theta is None:
        raise GPFitError("no hyperparameter start converged")

    lengthscales = np.exp(best_theta[:dim])
    return GPModel(
        x=x,
        y=y,
        lengthscales=lengthscales,
        signal_var=math.exp(best_theta[dim]),
        noise_var=math.exp(best_theta[dim + 1]),
    )


def expected_improvement(model: GPModel, weights: BudgetWeights, best_error: float) -> float:
    """Closed-form EI for minimization at a single point."""
    mean, std = model.predict(_weights_to_inputs([weights]))
    return float(_ei_values(mean, std, best_error)[0])


def _ei_values(mean: np.ndarray, std: np.ndarray, best_error: float) -> np.ndarray:
    delta = best_error - mean
    out = np.maximum(delta, 0.0)
    positive = std > 0.0
    z = delta[positive] / std[positive]
    out[positive] = delta[positive] * stats.norm.cdf(z) + std[positive] * stats.norm.pdf(z)
    return np.maximum(out, 0.0)


# --- optimization loop --------------------------------------------------------

# objective(weights, rng) -> (mean error, per-trial errors)
ObjectiveFn = Callable[[BudgetWeights, np.random.Generator], tuple[float, tuple[float, ...]]]
ProgressSink = Callable[[Observation], None]


@dataclass(frozen=True)
class OptimizerConfig:
    explorations: int = 100
    iterations: int = 100
    trials: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.explorations < 2:
            raise ValueError(f"explorations must be >= 2, got {self.explorations}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")

    @property
    def total(self) -> int:
        return self.explorations + self.iterations

    def to_dict(self) -> dict:
        return {
            "explorations": self.explorations,
            "iterations": self.iterations,
            "trials": self.trials,
            "seed": self.seed,
        }


@dataclass
class OptimizationState:
    observations: list[Observation]
    best: Observation
    config: OptimizerConfig
    explorations_done: int = 0
    iterations_done: int = 0
    failures: int = 0

    def to_dict(self) -> dict:
        return {
            "observations": [o.to_dict() for o in self.observations],
            "best": self.best.to_dict(),
            "config": self.config.to_dict(),
            "explorations_done": self.explorations_done,
            "iterations_done": self.iterations_done,
            "failures": self.failures,
        }


def evaluate_objective(
    dataset: Dataset,
    epsilon: float,
    weights: BudgetWeights,
    metric: str,
    trials: int,
    rng,
    *,
    grid_n: int = 4,
    metric_config: MetricConfig = MetricConfig(),
    ledger: Optional[PrivacyLedger] = None,
    phase: str = "exploration",
    iteration: int = 0,
) -> Observation:
    """Run the full pipeline `trials` times and average the metric."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    metric_fn = resolve_metric(metric)
    allocation = split_budget(epsilon, weights)
    errors = []
    for index, stream in enumerate(rng.spawn(trials)):
        try:
            synopsis = build_synopsis(dataset, allocation, grid_n, stream)
            synthetic = synthesize_dataset(synopsis, dataset.cardinality, stream)
            errors.append(float(metric_fn(dataset, synthetic, metric_config)))
        except Exception as exc:
            raise RuntimeError(f"pipeline trial {index} failed: {exc}") from exc
        if ledger is not None:
            ledger.record(f"{phase} iteration {iteration} trial {index}", epsilon)
    return Observation(
        weights=weights,
        error=float(np.mean(errors)),
        trial_errors=tuple(errors),
        phase=phase,
        iteration=iteration,
    )


def optimize_function(
    objective: ObjectiveFn,
    config: OptimizerConfig,
    rng,
    progress_sink: Optional[ProgressSink] = None,
) -> OptimizationState:
    """Random exploration then EI-guided iterations over the weight simplex."""
    observations: list[Observation] = []
    failures: list[str] = []
    state = OptimizationState(observations=observations, best=None, config=config)

    def evaluate(weights: BudgetWeights, phase: str, iteration: int) -> None:
        try:
            error, trial_errors = objective(weights, rng.spawn(1)[0])
            obs = Observation(
                weights=weights,
                error=float(error),
                trial_errors=tuple(trial_errors),
                phase=phase,
                iteration=iteration,
            )
        except Exception as exc:  # failed evaluations are skipped, not retried
            failures.append(f"{phase} iteration {iteration}: {exc}")
            state.failures = len(failures)
            attempted = len(observations) + len(failures)
            # The ratio is only meaningful once a few evaluations have run.
            if attempted >= 5 and len(failures) > FAILURE_ABORT_FRACTION * attempted:
                raise OptimizationAborted(
                    f"{len(failures)}/{attempted} evaluations failed; last errors: "
                    + "; ".join(failures[-3:])
                ) from exc
            return
        observations.append(obs)
        if state.best is None or obs.error < state.best.error:
            state.best = obs
        if progress_sink is not None:
            progress_sink(obs)

    iteration = 0
    for _ in range(config.explorations):
        evaluate(random_simplex_weights(rng), "exploration", iteration)
        iteration += 1
    state.explorations_done = config.explorations

    for _ in range(config.iterations):
        weights = _propose(observations, state.best, rng)
        evaluate(weights, "optimization", iteration)
        iteration += 1
        state.iterations_done += 1

    if state.best is None:
        raise OptimizationAborted("no evaluation succeeded; " + "; ".join(failures[-3:]))
    return state


def _propose(
    observations: list[Observation], best: Optional[Observation], rng
) -> BudgetWeights:
    """Argmax-EI over random simplex candidates plus local perturbations.

    The incumbent value fed to EI is the minimum posterior mean over the
    observed inputs (plug-in rule). Using the minimum observed error instead
    would ratchet below the true surface on a noisy objective and turn EI
    into pure uncertainty-chasing.
    """
    if len(observations) < 2 or best is None:
        return random_simplex_weights(rng)
    model = gp_fit(observations)
    observed_mean, _ = model.predict(model.x)
    plug_in_best = float(observed_mean.min())
    candidates = [random_simplex_weights(rng) for _ in range(CANDIDATES_RANDOM)]
    candidates += [perturb_weights(best.weights, rng) for _ in range(CANDIDATES_LOCAL)]
    mean, std = model.predict(_weights_to_inputs(candidates))
    ei = _ei_values(mean, std, plug_in_best)
    return candidates[int(np.argmax(ei))]


def optimize(
    dataset: Dataset,
    epsilon: float,
    metric: str,
    config: OptimizerConfig,
    rng,
    progress_sink: Optional[ProgressSink] = None,
    *,
    grid_n: int = 4,
    metric_config: MetricConfig = MetricConfig(),
    ledger: Optional[PrivacyLedger] = None,
) -> OptimizationState:
    """Minimize the chosen error metric over the budget-weight simplex."""
    resolve_metric(metric)  # fail fast on unknown names

    def objective(weights: BudgetWeights, stream) -> tuple[float, tuple[float, ...]]:
        counters = _phase_of(config)
        obs = evaluate_objective(
            dataset,
            epsilon,
            weights,
            metric,
            config.trials,
            stream,
            grid_n=grid_n,
            metric_config=metric_config,
            ledger=ledger,
            phase=counters[0],
            iteration=counters[1],
        )
        return obs.error, obs.trial_errors

    call_count = [0]

    def _phase_of(cfg: OptimizerConfig) -> tuple[str, int]:
        index = call_count[0]
        call_count[0] += 1
        phase = "exploration" if index < cfg.explorations else "optimization"
        return phase, index

    return optimize_function(objective, config, rng, progress_sink)
