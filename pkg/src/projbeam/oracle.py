"""Brute-force reference answers for small problems.

Everything here is deliberately independent of the projection/feasibility
machinery: feasibility masks and distances are recomputed inline from the raw
descriptor fields, so an agreement failure always points at exactly one side.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import null_space

from .model import Scenario
from .transform import Affine, Ball, SocEpigraph

__all__ = [
    "grid_feasible_m2k1",
    "grid_witness_m2k1",
    "mrt_zf_boundary_m2",
    "projection_grid_check",
]

# Grid points are accepted as feasible up to this absolute slack; it is many
# orders of magnitude below any grid resolution used, so it only absorbs
# floating-point noise on set boundaries.
_FEAS_SLACK = 1e-9


# --- two-cell single-antenna feasibility by exhaustive power grid -------------


def _power_grids(s: Scenario, betas, n_grid: int):
    if s.num_cells != 2 or s.num_antennas != 1:
        raise ValueError("grid oracle requires M=2, K=1")
    b = np.asarray(betas, dtype=float)
    if b.shape != (2,) or np.any(b < 0):
        raise ValueError("betas must be two nonnegative floats")
    g = np.abs(s.channels[:, :, 0]) ** 2  # g[j, i] = |h_ji|^2
    p1 = np.linspace(0.0, s.powers[0], n_grid)
    p2 = np.linspace(0.0, s.powers[1], n_grid)
    q1, q2 = np.meshgrid(p1, p2, indexing="ij")
    sinr1 = g[0, 0] * q1 / (g[1, 0] * q2 + s.noise_vars[0])
    sinr2 = g[1, 1] * q2 / (g[0, 1] * q1 + s.noise_vars[1])
    ok = (sinr1 >= b[0]) & (sinr2 >= b[1])
    return ok, q1, q2


def grid_feasible_m2k1(s: Scenario, betas, n_grid: int = 400) -> bool:
    """Whether any (p_1, p_2) on an n x n power grid meets both SINR floors.

    With K=1 the beamformer phases cancel out of every |h^H w|^2, so scanning
    transmit powers alone is exhaustive up to grid resolution.
    """
    ok, _, _ = _power_grids(s, betas, n_grid)
    return bool(ok.any())


def grid_witness_m2k1(s: Scenario, betas, n_grid: int = 400):
    """Like :func:`grid_feasible_m2k1` but also returns a witness (p_1, p_2)."""
    ok, q1, q2 = _power_grids(s, betas, n_grid)
    if not ok.any():
        return False, None
    flat = np.argmax(ok)  # first feasible point in fixed row-major order
    return True, (float(q1.flat[flat]), float(q2.flat[flat]))


# --- two-user K>=2 Pareto front from the MRT/ZF parameterization --------------


def mrt_zf_boundary_m2(s: Scenario, grid_n: int = 201) -> np.ndarray:
    """Non-dominated rate pairs from full-power MRT/ZF beam combinations.

    For two users the Pareto boundary is swept by
    w_i(l) ~ (1-l) MRT_i + l ZF_i, normalized to ||w_i|| = sqrt(P_i), with
    l in [0, 1] per user (l=0 is MRT, l=1 is ZF).  Returns the non-dominated
    rate pairs over the l x l grid, sorted by the first user's rate.
    """
    if s.num_cells != 2:
        raise ValueError("MRT/ZF front parameterization is for M=2")
    if s.num_antennas < 2:
        raise ValueError("zero forcing needs K >= 2")
    lam = np.linspace(0.0, 1.0, grid_n)

    signal = []  # signal[i][g] = |h_ii^H w_i(lam_g)|^2
    leak = []  # leak[i][g]   = |h_i,other^H w_i(lam_g)|^2
    for i in range(2):
        other = 1 - i
        h_d = s.channels[i, i]
        h_x = s.channels[i, other]
        mrt = h_d / np.linalg.norm(h_d)
        zf_dir = h_d - (np.vdot(h_x, h_d) / np.vdot(h_x, h_x)) * h_x
        nz = np.linalg.norm(zf_dir)
        zf = zf_dir / nz if nz > 1e-12 else mrt  # aligned channels: no null dir
        combos = np.outer(1.0 - lam, mrt) + np.outer(lam, zf)
        norms = np.linalg.norm(combos, axis=1)
        w = np.where(
            norms[:, None] > 1e-12,
            np.sqrt(s.powers[i]) * combos / np.maximum(norms, 1e-300)[:, None],
            0.0,
        )
        signal.append(np.abs(w @ np.conj(h_d)) ** 2)
        leak.append(np.abs(w @ np.conj(h_x)) ** 2)

    sinr1 = signal[0][:, None] / (leak[1][None, :] + s.noise_vars[0])
    sinr2 = signal[1][None, :] / (leak[0][:, None] + s.noise_vars[1])
    r1 = np.log2(1.0 + sinr1).ravel()
    r2 = np.log2(1.0 + sinr2).ravel()

    order = np.lexsort((-r2, -r1))  # r1 descending, ties by r2 descending
    best_r2 = -np.inf
    keep = []
    for idx in order:
        if r2[idx] > best_r2 + 1e-15:
            keep.append(idx)
            best_r2 = r2[idx]
    pts = np.array([[r1[i], r2[i]] for i in reversed(keep)])
    return pts


# --- projection reference by refining grid search ------------------------------


def _feasible_mask(pts: np.ndarray, descriptors) -> np.ndarray:
    """Inline feasibility of each row of pts against every descriptor."""
    ok = np.ones(pts.shape[0], dtype=bool)
    for desc in descriptors:
        if isinstance(desc, Ball):
            val = np.linalg.norm(pts[:, desc.indices], axis=1) - desc.radius
        elif isinstance(desc, SocEpigraph):
            val = np.linalg.norm(pts @ desc.B.T + desc.b, axis=1) - (
                pts @ desc.c + desc.d
            )
        elif isinstance(desc, Affine):
            val = np.max(np.abs(pts @ desc.E.T), axis=1)
        else:
            raise TypeError(f"unknown descriptor {type(desc)!r}")
        ok &= val <= _FEAS_SLACK
    return ok


def projection_grid_check(
    z: np.ndarray,
    descriptors,
    resolution: float = 1e-3,
    half_width: float | None = None,
    pts_per_dim: int = 17,
) -> np.ndarray:
    """Nearest grid point to z inside the descriptor intersection (dim <= 4).

    Multi-level exhaustive search: scan a centered grid, keep the feasible
    point closest to z, then re-grid a shrunken box around it until the cell
    size drops below ``resolution``.  Affine members are handled exactly by
    searching inside their null space, so thin sets stay searchable.  The
    effective search dimension (after affine reduction) must be at most 4.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    affine = [d for d in descriptors if isinstance(d, Affine)]
    others = [d for d in descriptors if not isinstance(d, Affine)]

    if affine:
        basis = null_space(np.vstack([d.E for d in affine]))
        if basis.shape[1] == 0:
            return np.zeros(n)  # only x = 0 satisfies the affine rows
    else:
        basis = np.eye(n)
    q = basis.shape[1]
    if q > 4:
        raise ValueError(f"search dimension {q} too large for the grid oracle")

    # basis is orthonormal, so ||basis @ c - z|| is minimized over the affine
    # set at c0 = basis.T @ z and distances split off a constant term.
    c0 = basis.T @ z
    if half_width is None:
        scale = [1.0, float(np.linalg.norm(c0))]
        scale += [d.radius for d in others if isinstance(d, Ball)]
        scale += [
            float(np.linalg.norm(d.b) + abs(d.d))
            for d in others
            if isinstance(d, SocEpigraph)
        ]
        half_width = 2.0 * max(scale)

    center = np.zeros(q)
    width = float(half_width)
    best = None
    pts_this_level = pts_per_dim
    while True:
        axes = [np.linspace(center[k] - width, center[k] + width, pts_this_level) for k in range(q)]
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = np.stack([m.ravel() for m in mesh], axis=1)
        pts = coords @ basis.T
        ok = _feasible_mask(pts, others)
        if not ok.any():
            if pts_this_level > 2048:
                raise RuntimeError("grid oracle found no feasible point")
            pts_this_level *= 2  # set thinner than the cells: densify, retry
            continue
        d2 = np.sum((coords[ok] - c0) ** 2, axis=1)
        winner = np.flatnonzero(ok)[np.argmin(d2)]
        best = coords[winner]
        cell = 2.0 * width / (pts_this_level - 1)
        if cell <= resolution:
            break
        center = best
        width = 3.0 * cell  # keep a margin of cells around the incumbent
        pts_this_level = pts_per_dim
    return basis @ best
