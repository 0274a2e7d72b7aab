"""Geometry, covariance construction, and adjacency patterns."""

import numpy as np
import pytest

from collabsense import (
    AdjacencyMatrix,
    ConfigurationError,
    ContractError,
    CovarianceMatrix,
    EquicorrelatedSpec,
    ModelError,
    SensorField,
    SignalCovarianceSpec,
    equicorrelated_covariance,
    generate_field,
    nearest_neighbor_adjacency,
    signal_covariance,
)

RECT = (-10.0, 10.0, -5.0, 5.0)


class TestGenerateField:
    def test_positions_inside_rectangle(self):
        field = generate_field(40, 10, RECT, rng_seed=3)
        x, y = field.positions[:, 0], field.positions[:, 1]
        assert np.all((x >= RECT[0]) & (x <= RECT[1]))
        assert np.all((y >= RECT[2]) & (y <= RECT[3]))
        assert field.num_sensors == 40
        assert field.num_connected == 10
        assert np.all(field.channel_gains == 1.0)

    def test_same_seed_reproduces_positions(self):
        a = generate_field(6, 6, RECT, rng_seed=11)
        b = generate_field(6, 6, RECT, rng_seed=11)
        assert np.array_equal(a.positions, b.positions)

    def test_different_seeds_differ(self):
        a = generate_field(6, 6, RECT, rng_seed=11)
        b = generate_field(6, 6, RECT, rng_seed=12)
        assert not np.array_equal(a.positions, b.positions)

    def test_more_connected_than_sensors_rejected(self):
        with pytest.raises(ConfigurationError):
            generate_field(3, 4, RECT, rng_seed=0)

    def test_degenerate_rectangle_rejected(self):
        with pytest.raises(ConfigurationError):
            generate_field(3, 3, (1.0, 1.0, 0.0, 5.0), rng_seed=0)
        with pytest.raises(ConfigurationError):
            generate_field(3, 3, (0.0, 1.0, 5.0, -5.0), rng_seed=0)

    def test_positions_are_frozen(self):
        field = generate_field(4, 2, RECT, rng_seed=1)
        with pytest.raises(ValueError):
            field.positions[0, 0] = 0.0

    def test_with_gains_replaces_only_gains(self):
        field = generate_field(5, 3, RECT, rng_seed=1)
        swapped = field.with_gains([2.0, 0.5, 1.5])
        assert np.array_equal(swapped.positions, field.positions)
        assert np.array_equal(swapped.channel_gains, [2.0, 0.5, 1.5])

    def test_zero_gain_rejected(self):
        field = generate_field(3, 2, RECT, rng_seed=1)
        with pytest.raises(ContractError):
            field.with_gains([1.0, 0.0])


class TestSignalCovariance:
    def test_diagonal_is_exact_variance(self):
        field = generate_field(6, 6, RECT, rng_seed=1)
        cov = signal_covariance(field, SignalCovarianceSpec(variance=2.5, beta1=6.0, beta2=2.0))
        assert np.all(np.diagonal(cov.entries) == 2.5)

    def test_correlation_at_decay_scale(self):
        # two sensors exactly beta1 apart: off-diagonal = variance * exp(-1)
        field = SensorField(np.array([[0.0, 0.0], [6.0, 0.0]]), 2, np.ones(2))
        cov = signal_covariance(field, SignalCovarianceSpec(variance=1.0, beta1=6.0, beta2=2.0))
        assert cov.entries[0, 1] == pytest.approx(0.36787944117144233, rel=1e-14)

    def test_translation_invariance(self):
        rng = np.random.default_rng(8)
        positions = rng.uniform(-5, 5, size=(7, 2))
        spec = SignalCovarianceSpec(variance=1.3, beta1=4.0, beta2=1.5)
        base = signal_covariance(SensorField(positions, 7, np.ones(7)), spec)
        moved = signal_covariance(SensorField(positions + [120.0, -40.0], 7, np.ones(7)), spec)
        np.testing.assert_allclose(moved.entries, base.entries, rtol=1e-9)

    def test_sharp_exponent_warns(self):
        with pytest.warns(UserWarning, match="beta2"):
            SignalCovarianceSpec(variance=1.0, beta1=6.0, beta2=3.0)

    def test_sharp_exponent_can_go_indefinite(self):
        # six equally spaced collinear sensors under a near-rectangular decay
        # profile: the eigenvalue check must fire rather than let an
        # indefinite matrix through
        positions = np.array([[0.9 * i, 0.0] for i in range(6)])
        entries = np.exp(-((np.abs(positions[:, :1] - positions[:, :1].T) / 1.0) ** 40.0))
        np.fill_diagonal(entries, 1.0)
        assert np.linalg.eigvalsh(entries)[0] < -1e-3
        field = SensorField(positions, 6, np.ones(6))
        with pytest.warns(UserWarning):
            spec = SignalCovarianceSpec(variance=1.0, beta1=1.0, beta2=40.0)
        with pytest.raises(ModelError, match="beta2"):
            signal_covariance(field, spec)

    def test_invalid_spec_parameters(self):
        with pytest.raises(ConfigurationError):
            SignalCovarianceSpec(variance=0.0)
        with pytest.raises(ConfigurationError):
            SignalCovarianceSpec(beta1=-1.0)
        with pytest.raises(ConfigurationError):
            SignalCovarianceSpec(beta2=0.0)


class TestEquicorrelatedCovariance:
    def test_entries(self):
        cov = equicorrelated_covariance(3, variance=2.0, correlation=0.25)
        expected = np.array([
            [2.0, 0.5, 0.5],
            [0.5, 2.0, 0.5],
            [0.5, 0.5, 2.0],
        ])
        assert np.array_equal(cov.entries, expected)

    def test_eigenvalue_structure(self):
        # variance * (1 - c) repeated (dim-1) times, variance * (1 + (dim-1) c) once
        dim, variance, corr = 5, 0.1, 0.1
        eigs = np.linalg.eigvalsh(equicorrelated_covariance(dim, variance, corr).entries)
        expected = np.sort([variance * (1 - corr)] * (dim - 1) + [variance * (1 + (dim - 1) * corr)])
        np.testing.assert_allclose(eigs, expected, rtol=1e-9)

    def test_negative_correlation_bound(self):
        # for dim 3 the PD range is -0.5 < c < 1; c = -0.6 gives eigenvalues
        # {1.6, 1.6, -0.2} (times the variance) and must be rejected upfront
        raw = np.full((3, 3), -0.6)
        np.fill_diagonal(raw, 1.0)
        np.testing.assert_allclose(np.linalg.eigvalsh(raw), [-0.2, 1.6, 1.6], atol=1e-12)
        with pytest.raises(ConfigurationError, match="-0.5"):
            equicorrelated_covariance(3, variance=1.0, correlation=-0.6)
        # just inside the bound is fine
        equicorrelated_covariance(3, variance=1.0, correlation=-0.499)

    def test_dimension_one_accepts_any_correlation(self):
        cov = equicorrelated_covariance(1, variance=0.3, correlation=-0.9)
        assert cov.entries[0, 0] == 0.3

    def test_spec_level_bounds(self):
        with pytest.raises(ConfigurationError):
            EquicorrelatedSpec(variance=0.1, correlation=1.0)
        with pytest.raises(ConfigurationError):
            EquicorrelatedSpec(variance=-0.1, correlation=0.0)


class TestCovarianceMatrix:
    def test_rejects_asymmetry(self):
        entries = np.array([[1.0, 0.2], [0.3, 1.0]])
        with pytest.raises(ModelError, match="asymmetric"):
            CovarianceMatrix(entries)

    def test_rejects_indefinite(self):
        entries = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(ModelError, match="indefinite"):
            CovarianceMatrix(entries)

    def test_array_protocol(self):
        cov = equicorrelated_covariance(2, 1.0, 0.5)
        arr = np.asarray(cov)
        assert arr.shape == (2, 2)
        assert np.trace(cov) == pytest.approx(2.0)


class TestNearestNeighborAdjacency:
    def test_no_collaboration(self):
        field = generate_field(6, 4, RECT, rng_seed=2)
        adj = nearest_neighbor_adjacency(field, 0)
        expected = np.hstack([np.eye(4, dtype=int), np.zeros((4, 2), dtype=int)])
        assert np.array_equal(adj.entries, expected)

    def test_full_collaboration(self):
        field = generate_field(5, 5, RECT, rng_seed=2)
        adj = nearest_neighbor_adjacency(field, 4)
        assert np.array_equal(adj.entries, np.ones((5, 5), dtype=int))

    def test_distance_ties_break_toward_lower_index(self):
        # three collinear sensors: the middle one is equidistant from both
        # ends, so its single neighbor must be sensor 0, not sensor 2
        positions = np.array([[0.0, 0.0], [0.9, 0.0], [1.8, 0.0]])
        field = SensorField(positions, 3, np.ones(3))
        adj = nearest_neighbor_adjacency(field, 1)
        expected = np.array([
            [1, 1, 0],
            [1, 1, 0],
            [0, 1, 1],
        ])
        assert np.array_equal(adj.entries, expected)

    def test_patterns_nest_as_q_grows(self):
        field = generate_field(8, 5, RECT, rng_seed=9)
        previous = nearest_neighbor_adjacency(field, 0).entries
        for q in range(1, 8):
            current = nearest_neighbor_adjacency(field, q).entries
            assert np.all(current >= previous)
            assert current.sum() == previous.sum() + 5
            previous = current

    def test_q_out_of_range(self):
        field = generate_field(4, 2, RECT, rng_seed=0)
        with pytest.raises(ConfigurationError):
            nearest_neighbor_adjacency(field, 4)
        with pytest.raises(ConfigurationError):
            nearest_neighbor_adjacency(field, -1)
        with pytest.raises(ConfigurationError):
            nearest_neighbor_adjacency(field, 1.5)

    def test_uncovered_sensors_reported(self):
        adj = AdjacencyMatrix(np.array([[1, 0, 0], [0, 1, 0]]))
        assert adj.uncovered_sensors == (2,)
        assert not adj.full_coverage
        covered = AdjacencyMatrix(np.array([[1, 0, 1], [0, 1, 1]]))
        assert covered.full_coverage

    def test_missing_own_observation_rejected(self):
        with pytest.raises(ContractError, match="own observation"):
            AdjacencyMatrix(np.array([[1, 1], [1, 0]]))

    def test_non_binary_entries_rejected(self):
        with pytest.raises(ContractError):
            AdjacencyMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))
