"""Best linear unbiased estimation through the collaborative channel.

The fusion center receives r = G W x + v where x = theta + n is the vector
of raw observations, W is the pattern-constrained mixing matrix, G is the
diagonal matrix of channel gains and v is channel noise. Everything here is
a deterministic function of (W, gains, covariances):

* the information matrix F = (GW)^T Sigma^{-1} (GW) with
  Sigma = G W R_n W^T G^T + R_v,
* its algebraically equivalent resolvent form
  F = R_n^{-1} - R_n^{-1} (W^T G^T R_v^{-1} G W + R_n^{-1})^{-1} R_n^{-1},
* the estimator covariance F^{-1} and the total distortion trace(F^{-1}),
* the cumulative transmit power trace(W (R_theta + R_n) W^T),
* the estimate itself, theta_hat = F^{-1} (GW)^T Sigma^{-1} r.

Symmetric positive-definite solves are used throughout; no general-purpose
matrix inverse is ever formed from scratch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import ContractError, EstimationError, ModelError
from .network import AdjacencyMatrix

# The information matrix counts as invertible while its 2-norm condition
# number stays below this; beyond it the distortion is reported as +inf.
CONDITION_LIMIT = 1e12


def _square(mat, name: str, dim: int | None = None) -> np.ndarray:
    a = np.asarray(mat, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"{name} must be square, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise ContractError(f"{name} must be {dim}x{dim}, got {a.shape[0]}x{a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name} contains non-finite entries")
    return a


def _mixing_value(w) -> np.ndarray:
    if isinstance(w, MixingMatrix):
        return w.entries
    a = np.asarray(w, dtype=float)
    if a.ndim != 2:
        raise ContractError(f"mixing matrix must be 2-d, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError("mixing matrix contains non-finite entries")
    return a


def _gain_vector(gains, m: int) -> np.ndarray:
    g = np.asarray(gains, dtype=float)
    if g.shape != (m,):
        raise ContractError(f"gains must have shape ({m},), got {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ContractError("gains contain non-finite entries")
    return g


@dataclass(frozen=True)
class MixingMatrix:
    """Real combination weights confined to an adjacency pattern.

    Entries where the pattern is 0 must be exactly zero; those sensor pairs
    never exchange observations, so the weight is structurally absent rather
    than merely small.
    """

    entries: np.ndarray
    pattern: AdjacencyMatrix

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        pat = self.pattern.entries
        if entries.shape != pat.shape:
            raise ContractError(
                f"mixing entries shape {entries.shape} does not match pattern {pat.shape}"
            )
        if not np.all(np.isfinite(entries)):
            raise ContractError("mixing entries must be finite")
        if np.any(entries[pat == 0] != 0.0):
            raise ContractError("entries outside the adjacency pattern must be exactly zero")
        entries = entries.copy()
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def zeros(cls, pattern: AdjacencyMatrix) -> "MixingMatrix":
        return cls(np.zeros(pattern.entries.shape), pattern)

    @classmethod
    def masked(cls, entries, pattern: AdjacencyMatrix) -> "MixingMatrix":
        """Zero everything outside the pattern, then wrap."""
        dense = np.asarray(entries, dtype=float)
        return cls(np.where(pattern.entries == 1, dense, 0.0), pattern)

    def scaled(self, factor: float) -> "MixingMatrix":
        return MixingMatrix(self.entries * float(factor), self.pattern)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        arr = self.entries if dtype is None else self.entries.astype(dtype, copy=False)
        return arr.copy() if copy else arr


@dataclass(frozen=True)
class EstimationReport:
    """Analytic performance summary for one mixing matrix.

    distortion is trace(F^{-1}), +inf when the information matrix is rank
    deficient. surrogate is trace(F). lower_bound is K^2 / trace(F), which
    never exceeds the distortion. power is the cumulative transmit power, or
    None when the signal covariance was not supplied. per_signal_variance
    holds diag(F^{-1}) for diagnostics, None without rank_ok.
    """

    distortion: float
    surrogate: float
    lower_bound: float
    power: float | None
    rank_ok: bool
    per_signal_variance: np.ndarray | None = None

    def __post_init__(self):
        if self.surrogate < 0:
            raise ContractError(f"surrogate must be nonnegative, got {self.surrogate}")
        if self.power is not None and self.power < 0:
            raise ContractError(f"power must be nonnegative, got {self.power}")
        if self.rank_ok != bool(np.isfinite(self.distortion)):
            raise ContractError("distortion must be finite exactly when rank_ok is set")
        if self.rank_ok and self.lower_bound > self.distortion * (1 + 1e-12):
            raise ContractError(
                f"lower bound {self.lower_bound} exceeds distortion {self.distortion}"
            )


def transmit_power(w, r_theta, r_n) -> float:
    """Cumulative average transmit power trace(W (R_theta + R_n) W^T)."""
    W = _mixing_value(w)
    k = W.shape[1]
    rt = _square(r_theta, "signal covariance", k)
    rn = _square(r_n, "observation noise covariance", k)
    value = float(np.einsum("ij,ij->", W @ (rt + rn), W))
    return max(value, 0.0)


def _information_direct(W: np.ndarray, g: np.ndarray, rn: np.ndarray, rv: np.ndarray):
    """F, the Cholesky factor of Sigma, and the effective matrix H = G W."""
    H = g[:, None] * W
    sigma = H @ rn @ H.T + rv
    sigma = 0.5 * (sigma + sigma.T)
    try:
        chol = cho_factor(sigma, lower=True)
    except LinAlgError as exc:
        raise ModelError(
            "received-signal covariance is not positive definite; the channel "
            "noise covariance must be strictly positive definite"
        ) from exc
    F = H.T @ cho_solve(chol, H)
    return 0.5 * (F + F.T), chol, H


def _spectral_rank(F: np.ndarray) -> tuple[bool, np.ndarray]:
    eigenvalues = np.linalg.eigvalsh(F)
    lam_min, lam_max = float(eigenvalues[0]), float(eigenvalues[-1])
    ok = lam_max > 0 and lam_min > 0 and lam_max / lam_min < CONDITION_LIMIT
    return ok, eigenvalues


def fisher_information(w, gains, r_n, r_v) -> np.ndarray:
    """Information matrix F = (GW)^T (G W R_n W^T G^T + R_v)^{-1} (GW)."""
    W = _mixing_value(w)
    m, k = W.shape
    g = _gain_vector(gains, m)
    rn = _square(r_n, "observation noise covariance", k)
    rv = _square(r_v, "channel noise covariance", m)
    F, _, _ = _information_direct(W, g, rn, rv)
    return F


def fisher_information_woodbury(w, gains, r_n, r_v) -> np.ndarray:
    """Resolvent form of the information matrix.

    Computes F = R_n^{-1} - R_n^{-1} (W^T G^T R_v^{-1} G W + R_n^{-1})^{-1}
    R_n^{-1}, which works entirely in K x K space once the channel term is
    assembled. Requires both noise covariances strictly positive definite.
    """
    W = _mixing_value(w)
    m, k = W.shape
    g = _gain_vector(gains, m)
    rn = _square(r_n, "observation noise covariance", k)
    rv = _square(r_v, "channel noise covariance", m)
    try:
        rn_chol = cho_factor(rn, lower=True)
    except LinAlgError as exc:
        raise ModelError(
            "observation noise covariance must be strictly positive definite "
            "for the resolvent route"
        ) from exc
    try:
        rv_chol = cho_factor(rv, lower=True)
    except LinAlgError as exc:
        raise ModelError("channel noise covariance must be strictly positive definite") from exc
    rn_inv = cho_solve(rn_chol, np.eye(k))
    rn_inv = 0.5 * (rn_inv + rn_inv.T)
    H = g[:, None] * W
    channel_term = H.T @ cho_solve(rv_chol, H)
    mixed = 0.5 * (channel_term + channel_term.T) + rn_inv
    mixed_chol = cho_factor(0.5 * (mixed + mixed.T), lower=True)
    F = rn_inv - rn_inv @ cho_solve(mixed_chol, rn_inv)
    return 0.5 * (F + F.T)


def surrogate_objective(w, gains, r_n, r_v) -> float:
    """trace(F): the information-trace surrogate for the true distortion."""
    return float(np.trace(fisher_information(w, gains, r_n, r_v)))


def blue_covariance(w, gains, r_n, r_v, r_theta=None) -> EstimationReport:
    """Exact distortion analysis of the best linear unbiased estimator.

    Args:
        w: mixing matrix (MixingMatrix or plain (M, K) array).
        gains: channel gain vector of length M.
        r_n: observation noise covariance, K x K.
        r_v: channel noise covariance, M x M, strictly positive definite.
        r_theta: optional signal covariance; when given, the report carries
            the cumulative transmit power as well.

    Returns:
        EstimationReport with distortion trace(F^{-1}), surrogate trace(F),
        the K^2 / trace(F) lower bound, and per-signal error variances.
        Rank deficiency of F (condition estimate at or above 1e12) yields
        distortion +inf with rank_ok False instead of an exception.
    """
    W = _mixing_value(w)
    m, k = W.shape
    g = _gain_vector(gains, m)
    rn = _square(r_n, "observation noise covariance", k)
    rv = _square(r_v, "channel noise covariance", m)
    F, _, _ = _information_direct(W, g, rn, rv)

    rank_ok, _ = _spectral_rank(F)
    surrogate = max(float(np.trace(F)), 0.0)
    lower_bound = (k * k) / surrogate if surrogate > 0 else float("inf")

    distortion = float("inf")
    per_signal = None
    if rank_ok:
        try:
            f_chol = cho_factor(F, lower=True)
            f_inv = cho_solve(f_chol, np.eye(k))
            distortion = float(np.trace(f_inv))
            per_signal = np.diag(f_inv).copy()
        except LinAlgError:
            rank_ok = False
            distortion = float("inf")
            per_signal = None

    power = transmit_power(W, r_theta, rn) if r_theta is not None else None
    return EstimationReport(
        distortion=distortion,
        surrogate=surrogate,
        lower_bound=lower_bound,
        power=power,
        rank_ok=rank_ok,
        per_signal_variance=per_signal,
    )


def blue_estimate(w, gains, r_n, r_v, received) -> np.ndarray:
    """Apply the best linear unbiased estimator to one received vector.

    theta_hat = F^{-1} (GW)^T Sigma^{-1} r. Raises EstimationError when the
    information matrix is rank deficient, because no unbiased linear
    estimator of the full signal vector exists then.
    """
    W = _mixing_value(w)
    m, k = W.shape
    g = _gain_vector(gains, m)
    rn = _square(r_n, "observation noise covariance", k)
    rv = _square(r_v, "channel noise covariance", m)
    r = np.asarray(received, dtype=float)
    if r.shape != (m,):
        raise ContractError(f"received vector must have shape ({m},), got {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ContractError("received vector contains non-finite entries")

    F, sigma_chol, H = _information_direct(W, g, rn, rv)
    rank_ok, _ = _spectral_rank(F)
    if not rank_ok:
        raise EstimationError(
            "information matrix is rank deficient; the unbiased estimator is undefined"
        )
    whitened = cho_solve(sigma_chol, r)
    try:
        f_chol = cho_factor(F, lower=True)
    except LinAlgError as exc:
        raise EstimationError("information matrix could not be factorized") from exc
    return cho_solve(f_chol, H.T @ whitened)
