"""Shared helpers: random SPD instances, patterned mixing matrices, and a
brute-force power-sphere search used as an independent optimum oracle on
tiny problems."""

import numpy as np

from collabsense import AdjacencyMatrix, MixingMatrix


def make_spd(rng, dim, spread=4.0):
    """Random symmetric positive definite matrix with eigenvalues in
    [1/spread, spread], well away from singular."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eigs = np.exp(rng.uniform(-np.log(spread), np.log(spread), size=dim))
    return (q * eigs) @ q.T


def random_adjacency(rng, m, k, density=0.5):
    """Random 0/1 collaboration pattern with the mandatory unit diagonal."""
    entries = (rng.random((m, k)) < density).astype(float)
    for j in range(m):
        entries[j, j] = 1.0
    return AdjacencyMatrix(entries)


def random_mixing(rng, adjacency):
    dense = rng.standard_normal(adjacency.entries.shape)
    return MixingMatrix.masked(dense, adjacency)


def _batched_distortion_2x2(u_flat, chol_rx, g, r_n, r_v):
    """Distortion of a batch of 2x2 mixing matrices given as flattened
    whitened coordinates u = W @ chol_rx (so that ||u||_F^2 is the power).

    Everything is closed-form for 2x2 matrices, which keeps the grid search
    fast enough to act as an oracle.
    """
    w = u_flat.reshape(-1, 2, 2) @ np.linalg.inv(chol_rx)
    h = g[None, :, None] * w
    sigma = h @ r_n @ np.transpose(h, (0, 2, 1)) + r_v
    det_s = sigma[:, 0, 0] * sigma[:, 1, 1] - sigma[:, 0, 1] * sigma[:, 1, 0]
    inv_s = np.empty_like(sigma)
    inv_s[:, 0, 0] = sigma[:, 1, 1]
    inv_s[:, 1, 1] = sigma[:, 0, 0]
    inv_s[:, 0, 1] = -sigma[:, 0, 1]
    inv_s[:, 1, 0] = -sigma[:, 1, 0]
    inv_s /= det_s[:, None, None]
    f = np.transpose(h, (0, 2, 1)) @ inv_s @ h
    det_f = f[:, 0, 0] * f[:, 1, 1] - f[:, 0, 1] * f[:, 1, 0]
    trace_f = f[:, 0, 0] + f[:, 1, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        distortion = trace_f / det_f
    bad = ~np.isfinite(distortion) | (det_f <= 0)
    distortion[bad] = np.inf
    return distortion


def sphere_grid_minimum(r_theta, r_n, r_v, g, p0, coarse=14, refinements=4):
    """Brute-force minimum distortion for a dense 2x2 pattern on the power
    sphere, by multi-level refinement of a hyperspherical angle grid.

    The four mixing entries, whitened by the Cholesky factor of
    R_theta + R_n, live on a 3-sphere of radius sqrt(p0). Three angles
    parameterize the sphere; each refinement zooms the grid around the best
    cell found so far.
    """
    chol_rx = np.linalg.cholesky(r_theta + r_n)  # power = ||W @ chol_rx||_F^2
    centers = np.array([np.pi / 2, np.pi / 2, np.pi])
    widths = np.array([np.pi, np.pi, 2 * np.pi])
    best_val = np.inf
    for _ in range(refinements):
        axes = [np.linspace(c - w / 2, c + w / 2, coarse) for c, w in zip(centers, widths)]
        a1, a2, a3 = np.meshgrid(*axes, indexing="ij")
        u = np.sqrt(p0) * np.stack(
            [
                np.cos(a1),
                np.sin(a1) * np.cos(a2),
                np.sin(a1) * np.sin(a2) * np.cos(a3),
                np.sin(a1) * np.sin(a2) * np.sin(a3),
            ],
            axis=-1,
        ).reshape(-1, 4)
        vals = _batched_distortion_2x2(u, chol_rx, g, r_n, r_v)
        idx = int(np.argmin(vals))
        if vals[idx] < best_val:
            best_val = float(vals[idx])
        centers = np.array([a1.ravel()[idx], a2.ravel()[idx], a3.ravel()[idx]])
        widths = widths * (2.5 / coarse)
    return best_val
