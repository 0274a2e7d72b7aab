"""Network geometry, covariance models, and collaboration patterns.

Builds the static description of a collaborating sensor field: sensor
positions scattered in a rectangle, the distance-decay covariance of the
observed signals, equi-correlated observation and channel noise, per-channel
amplitude gains, and the 0/1 adjacency pattern that says which raw
observations each fusion-center-connected sensor is allowed to combine.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, ContractError, ModelError

# Relative eigenvalue floor accepted before a covariance is declared
# indefinite; absorbs floating-point noise in the exp-based entries.
PSD_EIGENVALUE_FLOOR = -1e-10

# Symmetry is structural for every covariance built here, so the accepted
# asymmetry is essentially roundoff.
SYMMETRY_ATOL = 1e-12


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class SensorField:
    """Sensor positions plus the fusion-center side of the network.

    The first ``num_connected`` sensors (by index) hold a dedicated channel
    to the fusion center; ``channel_gains`` carries one amplitude gain per
    such channel. Instances are immutable; use :meth:`with_gains` to swap
    the gain vector.
    """

    positions: np.ndarray
    num_connected: int
    channel_gains: np.ndarray

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 2:
            raise ContractError(f"positions must have shape (K, 2), got {positions.shape}")
        k = positions.shape[0]
        if k < 1:
            raise ConfigurationError("a sensor field needs at least one sensor")
        m = int(self.num_connected)
        if not 1 <= m <= k:
            raise ConfigurationError(f"num_connected must be in [1, {k}], got {m}")
        if not np.all(np.isfinite(positions)):
            raise ContractError("positions contain non-finite values")
        gains = np.asarray(self.channel_gains, dtype=float)
        if gains.shape != (m,):
            raise ContractError(f"channel_gains must have shape ({m},), got {gains.shape}")
        if not np.all(np.isfinite(gains)) or np.any(gains == 0.0):
            raise ContractError("channel gains must be finite and nonzero")
        object.__setattr__(self, "positions", _freeze(positions))
        object.__setattr__(self, "num_connected", m)
        object.__setattr__(self, "channel_gains", _freeze(gains))

    @property
    def num_sensors(self) -> int:
        return self.positions.shape[0]

    def with_gains(self, gains) -> "SensorField":
        """Copy of this field with the per-channel gains replaced."""
        return replace(self, channel_gains=np.asarray(gains, dtype=float))

    def distance_matrix(self) -> np.ndarray:
        """Pairwise Euclidean distances between all sensors (K x K)."""
        delta = self.positions[:, None, :] - self.positions[None, :, :]
        return np.sqrt(np.sum(delta * delta, axis=-1))


@dataclass(frozen=True)
class SignalCovarianceSpec:
    """Distance-decay correlation model for the observed signals.

    Correlation between two sensors at distance d is exp(-(d / beta1) ** beta2)
    and every sensor sees the common signal variance on the diagonal.
    Exponents above 2 leave the family with guaranteed positive definiteness,
    so they are accepted with a warning and the generated matrix is
    eigenvalue-checked instead.
    """

    variance: float = 1.0
    beta1: float = 6.0
    beta2: float = 3.0

    def __post_init__(self):
        if not self.variance > 0:
            raise ConfigurationError(f"signal variance must be positive, got {self.variance}")
        if not self.beta1 > 0:
            raise ConfigurationError(f"beta1 must be positive, got {self.beta1}")
        if not self.beta2 > 0:
            raise ConfigurationError(f"beta2 must be positive, got {self.beta2}")
        if self.beta2 > 2:
            warnings.warn(
                f"decay exponent beta2={self.beta2} exceeds 2, outside the range with "
                "guaranteed positive definiteness; the generated covariance is "
                "eigenvalue-checked and indefiniteness raises a ModelError",
                UserWarning,
                stacklevel=2,
            )


@dataclass(frozen=True)
class EquicorrelatedSpec:
    """Homogeneous noise model: one variance, one pairwise correlation."""

    variance: float
    correlation: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ConfigurationError(f"noise variance must be positive, got {self.variance}")
        if not -1.0 < self.correlation < 1.0:
            raise ConfigurationError(
                f"equi-correlation must lie in (-1, 1), got {self.correlation}"
            )


@dataclass(frozen=True)
class CovarianceSpec:
    """Full second-order description of the network disturbances."""

    signal: SignalCovarianceSpec
    observation_noise: EquicorrelatedSpec
    channel_noise: EquicorrelatedSpec


@dataclass(frozen=True)
class CovarianceMatrix:
    """A validated symmetric positive-semidefinite matrix.

    Construction rejects asymmetry beyond roundoff and eigenvalues below
    the relative floor ``PSD_EIGENVALUE_FLOOR * max_eigenvalue``.
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ContractError(f"covariance must be square, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise ContractError("covariance contains non-finite entries")
        asym = float(np.max(np.abs(entries - entries.T)))
        if asym > SYMMETRY_ATOL:
            raise ModelError(f"covariance is asymmetric by {asym:.3e} (tolerance {SYMMETRY_ATOL})")
        eigenvalues = np.linalg.eigvalsh(entries)
        floor = PSD_EIGENVALUE_FLOOR * max(float(eigenvalues[-1]), 0.0)
        if eigenvalues[0] < floor:
            raise ModelError(
                f"covariance is indefinite: minimum eigenvalue {eigenvalues[0]:.6e}"
            )
        object.__setattr__(self, "entries", _freeze(entries))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        arr = self.entries if dtype is None else self.entries.astype(dtype, copy=False)
        return arr.copy() if copy else arr


@dataclass(frozen=True)
class AdjacencyMatrix:
    """0/1 collaboration pattern.

    Row j lists the sensor observations that connected sensor j may mix;
    every such sensor always keeps its own observation. Columns with no
    one anywhere mark sensors whose observation never reaches the fusion
    center, which :attr:`uncovered_sensors` records without failing.
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries)
        if entries.ndim != 2:
            raise ContractError(f"adjacency must be 2-d, got shape {entries.shape}")
        m, k = entries.shape
        if m < 1 or k < 1 or m > k:
            raise ContractError(
                f"adjacency must have 1 <= rows <= columns, got {m}x{k}"
            )
        if not np.isin(entries, (0, 1)).all():
            raise ContractError("adjacency entries must be 0 or 1")
        entries = entries.astype(int)
        if not np.all(np.diagonal(entries) == 1):
            raise ContractError("every connected sensor must keep its own observation")
        object.__setattr__(self, "entries", _freeze(entries))

    @property
    def num_connected(self) -> int:
        return self.entries.shape[0]

    @property
    def num_sensors(self) -> int:
        return self.entries.shape[1]

    @property
    def uncovered_sensors(self) -> tuple[int, ...]:
        """Sensors whose observation reaches no connected sensor."""
        return tuple(int(i) for i in np.flatnonzero(self.entries.sum(axis=0) == 0))

    @property
    def full_coverage(self) -> bool:
        return not self.uncovered_sensors

    def __array__(self, dtype=None, copy=None):
        arr = self.entries if dtype is None else self.entries.astype(dtype, copy=False)
        return arr.copy() if copy else arr


# ---- generators ----------------------------------------------------------


def generate_field(k: int, m: int, rect, rng_seed: int) -> SensorField:
    """Scatter ``k`` sensors uniformly at random inside a rectangle.

    Args:
        k: total number of sensors.
        m: number of sensors with a fusion-center channel (the first m).
        rect: (xmin, xmax, ymin, ymax) with positive width and height.
        rng_seed: seed for the position draw; the same seed reproduces the
            same positions bit for bit.

    Returns:
        A SensorField with unit channel gains; override them afterwards
        with :meth:`SensorField.with_gains` if needed.
    """
    if k < 1:
        raise ConfigurationError(f"k must be at least 1, got {k}")
    if not 1 <= m <= k:
        raise ConfigurationError(f"m must be in [1, {k}], got {m}")
    try:
        xmin, xmax, ymin, ymax = (float(v) for v in rect)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"rect must be (xmin, xmax, ymin, ymax), got {rect!r}") from exc
    if not (xmax > xmin and ymax > ymin):
        raise ConfigurationError(
            f"rectangle must have positive width and height, got {rect!r}"
        )
    rng = np.random.default_rng(rng_seed)
    positions = rng.uniform(low=(xmin, ymin), high=(xmax, ymax), size=(k, 2))
    return SensorField(positions, m, np.ones(m))


def signal_covariance(field: SensorField, spec) -> CovarianceMatrix:
    """Distance-decay signal covariance over the field.

    Accepts either a full CovarianceSpec or a bare SignalCovarianceSpec.
    The diagonal is exactly the signal variance; each off-diagonal entry is
    variance * exp(-(d / beta1) ** beta2) for the pairwise distance d, so the
    matrix only depends on relative sensor geometry.
    """
    sig = spec.signal if isinstance(spec, CovarianceSpec) else spec
    distances = field.distance_matrix()
    entries = sig.variance * np.exp(-np.power(distances / sig.beta1, sig.beta2))
    np.fill_diagonal(entries, sig.variance)
    entries = 0.5 * (entries + entries.T)
    try:
        return CovarianceMatrix(entries)
    except ModelError as exc:
        raise ModelError(f"signal covariance with beta2={sig.beta2}: {exc}") from exc


def equicorrelated_covariance(dim: int, variance: float, correlation: float) -> CovarianceMatrix:
    """Equi-correlated noise covariance: variance * [(1-c) I + c 11^T].

    Positive definiteness requires -1/(dim-1) < correlation < 1; for dim 1
    the correlation is irrelevant and any value is accepted.
    """
    if dim < 1:
        raise ConfigurationError(f"dimension must be at least 1, got {dim}")
    if not variance > 0:
        raise ConfigurationError(f"variance must be positive, got {variance}")
    if dim > 1:
        lower = -1.0 / (dim - 1)
        if not lower < correlation < 1.0:
            raise ConfigurationError(
                f"correlation must satisfy -1/(dim-1) = {lower:.6g} < c < 1 for a "
                f"positive-definite matrix of dimension {dim}, got {correlation}"
            )
    entries = np.full((dim, dim), variance * correlation)
    np.fill_diagonal(entries, variance)
    return CovarianceMatrix(entries)


def nearest_neighbor_adjacency(field: SensorField, q: int) -> AdjacencyMatrix:
    """Collaboration pattern where each connected sensor mixes its q nearest.

    Every connected sensor keeps its own observation and additionally the q
    spatially nearest other sensors, distance ties broken toward the lower
    sensor index. q = 0 means no collaboration at all.
    """
    k = field.num_sensors
    if not isinstance(q, (int, np.integer)) or isinstance(q, bool):
        raise ConfigurationError(f"q must be an integer, got {q!r}")
    if not 0 <= q <= k - 1:
        raise ConfigurationError(f"q must be in [0, {k - 1}], got {q}")
    distances = field.distance_matrix()
    entries = np.zeros((field.num_connected, k), dtype=int)
    for j in range(field.num_connected):
        entries[j, j] = 1
        if q:
            # sort by (distance, index): a stable, fully deterministic order
            order = np.lexsort((np.arange(k), distances[j]))
            picked = [i for i in order if i != j][:q]
            entries[j, picked] = 1
    return AdjacencyMatrix(entries)
