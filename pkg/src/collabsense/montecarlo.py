"""Independent stochastic validation of the analytic pipeline.

Draws (theta, n, v), pushes them through the mixing and channel stages,
applies the estimator at the fusion center, and accumulates empirical
statistics whose expectations the closed-form quantities predict exactly:
total mean squared error against trace(F^{-1}), per-component bias against
zero, transmit power against trace(W (R_theta + R_n) W^T), and the full
error covariance against F^{-1}.

Trials are drawn in fixed-size chunks, each chunk seeded independently from
(seed, chunk index), so a run is bit-reproducible and the chunk space could
be mapped across workers without changing any number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import ConfigurationError, ContractError, EstimationError, ModelError
from .estimator import _gain_vector, _information_direct, _mixing_value, _spectral_rank, _square
from .network import PSD_EIGENVALUE_FLOOR

_CHUNK = 8192

SIGNAL_DISTRIBUTIONS = ("gaussian", "uniform")


def psd_factor(cov) -> np.ndarray:
    """Symmetric-eigendecomposition factor L with L @ L.T equal to cov.

    Works for singular matrices too (zero eigenvalues simply produce zero
    columns); an eigenvalue below the relative indefiniteness floor raises
    a ModelError.
    """
    entries = np.asarray(cov, dtype=float)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise ContractError(f"covariance must be square, got shape {entries.shape}")
    entries = 0.5 * (entries + entries.T)
    eigenvalues, vectors = np.linalg.eigh(entries)
    floor = PSD_EIGENVALUE_FLOOR * max(float(eigenvalues[-1]), 0.0)
    if eigenvalues[0] < floor:
        raise ModelError(
            f"cannot sample from an indefinite covariance (min eigenvalue {eigenvalues[0]:.6e})"
        )
    return vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))


def sample_gaussian(cov, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Zero-mean Gaussian draw(s) with the given covariance.

    Returns a vector for size None, otherwise a (size, dim) array.
    Deterministic given the generator state.
    """
    factor = psd_factor(cov)
    dim = factor.shape[0]
    shape = (dim,) if size is None else (int(size), dim)
    return rng.standard_normal(shape) @ factor.T


@dataclass(frozen=True)
class TrialBatch:
    """Empirical statistics of one Monte Carlo run, with standard errors."""

    num_trials: int
    rng_seed: int
    signal_distribution: str
    empirical_mse_total: float
    empirical_bias: np.ndarray
    empirical_power: float
    empirical_error_covariance: np.ndarray
    mse_stderr: float
    bias_stderr: np.ndarray
    power_stderr: float
    error_covariance_stderr: np.ndarray

    def __post_init__(self):
        if self.num_trials < 1:
            raise ContractError(f"num_trials must be at least 1, got {self.num_trials}")
        for name in ("empirical_mse_total", "empirical_power", "mse_stderr", "power_stderr"):
            if not np.isfinite(getattr(self, name)):
                raise ContractError(f"{name} is not finite")
        for name in ("empirical_bias", "empirical_error_covariance",
                     "bias_stderr", "error_covariance_stderr"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ContractError(f"{name} contains non-finite entries")


def _stderr(sum_sq: np.ndarray | float, mean: np.ndarray | float, n: int):
    ddof = 1 if n > 1 else 0
    variance = np.maximum((sum_sq - n * np.square(mean)) / max(n - ddof, 1), 0.0)
    return np.sqrt(variance / n)


def run_trials(w, gains, r_theta, r_n, r_v, num_trials: int, rng_seed: int,
               signal_distribution: str = "gaussian") -> TrialBatch:
    """Monte Carlo pass through the full chain for one mixing matrix.

    Per trial: draw theta, n, v; form x = theta + n, y = W x, r = G y + v;
    estimate theta_hat from r; accumulate error and power statistics.

    The signal can be drawn as exact Gaussian ("gaussian") or as independent
    uniform factors mixed through a covariance factor ("uniform"), which has
    the same covariance but is not Gaussian; the estimator error statistics
    do not depend on the signal distribution, and this switch makes that
    checkable.
    """
    if num_trials < 1:
        raise ConfigurationError(f"num_trials must be at least 1, got {num_trials}")
    if signal_distribution not in SIGNAL_DISTRIBUTIONS:
        raise ConfigurationError(
            f"signal_distribution must be one of {SIGNAL_DISTRIBUTIONS}, got {signal_distribution!r}"
        )
    W = _mixing_value(w)
    m, k = W.shape
    g = _gain_vector(gains, m)
    rt = _square(r_theta, "signal covariance", k)
    rn = _square(r_n, "observation noise covariance", k)
    rv = _square(r_v, "channel noise covariance", m)

    F, sigma_chol, H = _information_direct(W, g, rn, rv)
    rank_ok, _ = _spectral_rank(F)
    if not rank_ok:
        raise EstimationError(
            "information matrix is rank deficient; Monte Carlo validation of the "
            "unbiased estimator is undefined"
        )
    try:
        f_chol = cho_factor(F, lower=True)
    except LinAlgError as exc:
        raise EstimationError("information matrix could not be factorized") from exc
    # estimator as a single K x M matrix: theta_hat = E r
    estimator = cho_solve(f_chol, cho_solve(sigma_chol, H).T)

    factor_theta = psd_factor(rt)
    factor_n = psd_factor(rn)
    factor_v = psd_factor(rv)
    sqrt3 = math.sqrt(3.0)

    sum_err = np.zeros(k)
    sum_err_sq = np.zeros(k)
    sum_mse = 0.0
    sum_mse_sq = 0.0
    sum_power = 0.0
    sum_power_sq = 0.0
    sum_outer = np.zeros((k, k))
    sum_outer_sq = np.zeros((k, k))

    done = 0
    chunk_index = 0
    while done < num_trials:
        n_c = min(_CHUNK, num_trials - done)
        rng = np.random.default_rng([rng_seed, chunk_index])
        if signal_distribution == "gaussian":
            z_theta = rng.standard_normal((n_c, k))
        else:
            z_theta = rng.uniform(-sqrt3, sqrt3, size=(n_c, k))
        theta = z_theta @ factor_theta.T
        noise = rng.standard_normal((n_c, k)) @ factor_n.T
        channel = rng.standard_normal((n_c, m)) @ factor_v.T

        x = theta + noise
        y = x @ W.T
        received = y * g + channel
        estimate = received @ estimator.T
        err = estimate - theta

        per_trial_power = np.einsum("ij,ij->i", y, y)
        per_trial_mse = np.einsum("ij,ij->i", err, err)

        sum_err += err.sum(axis=0)
        sum_err_sq += np.square(err).sum(axis=0)
        sum_mse += float(per_trial_mse.sum())
        sum_mse_sq += float(np.square(per_trial_mse).sum())
        sum_power += float(per_trial_power.sum())
        sum_power_sq += float(np.square(per_trial_power).sum())
        outer = np.einsum("ti,tj->ij", err, err)
        sum_outer += outer
        sum_outer_sq += np.einsum("ti,tj->ij", np.square(err), np.square(err))

        done += n_c
        chunk_index += 1

    n = num_trials
    bias = sum_err / n
    mse = sum_mse / n
    power = sum_power / n
    error_cov = sum_outer / n
    return TrialBatch(
        num_trials=n,
        rng_seed=rng_seed,
        signal_distribution=signal_distribution,
        empirical_mse_total=mse,
        empirical_bias=bias,
        empirical_power=power,
        empirical_error_covariance=error_cov,
        mse_stderr=float(_stderr(sum_mse_sq, mse, n)),
        bias_stderr=_stderr(sum_err_sq, bias, n),
        power_stderr=float(_stderr(sum_power_sq, power, n)),
        error_covariance_stderr=_stderr(sum_outer_sq, error_cov, n),
    )
