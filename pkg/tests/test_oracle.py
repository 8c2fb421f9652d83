"""Tests for the brute-force reference oracles.

The oracles must stand on their own (they validate the iterative engines),
so the checks here are closed-form cases and structural properties, never
comparisons against the code they are meant to referee.
"""

import numpy as np
import pytest

from projbeam.model import Scenario, random_scenario
from projbeam.oracle import (
    grid_feasible_m2k1,
    grid_witness_m2k1,
    mrt_zf_boundary_m2,
    projection_grid_check,
)
from projbeam.transform import Affine, Ball, SocEpigraph


def _two_cell_scenario() -> Scenario:
    ch = np.array(
        [[[2.0 + 0j], [0.5j]], [[1.0 - 1.0j], [1.0 + 1.0j]]], dtype=complex
    )
    return Scenario(ch, powers=np.array([4.0, 1.0]), noise_vars=np.array([1.0, 0.5]))


# For K=1 the SINR floors reduce to a 2x2 linear system in the powers
# p_i = |w_i|^2; solving the equality version gives the minimal powers:
#   betas=[1, 1]    -> p = (0.4, 0.3)   feasible within (4, 1)
#   betas=[9, 1.5]  -> p = (25.2, 5.1)  exceeds both budgets
#   betas=[40, 20]  -> negative solution: infeasible at any power
def test_grid_feasibility_matches_linear_system():
    s = _two_cell_scenario()
    assert grid_feasible_m2k1(s, np.array([1.0, 1.0]))
    assert not grid_feasible_m2k1(s, np.array([9.0, 1.5]))
    assert not grid_feasible_m2k1(s, np.array([40.0, 20.0]))


def test_grid_witness_is_verifiable():
    s = _two_cell_scenario()
    betas = np.array([1.0, 1.0])
    ok, w = grid_witness_m2k1(s, betas)
    assert ok and w is not None
    p1, p2 = w
    assert 0 <= p1 <= 4.0 and 0 <= p2 <= 1.0
    g11, g21 = abs(s.channels[0, 0, 0]) ** 2, abs(s.channels[1, 0, 0]) ** 2
    g22, g12 = abs(s.channels[1, 1, 0]) ** 2, abs(s.channels[0, 1, 0]) ** 2
    assert g11 * p1 / (g21 * p2 + 1.0) >= betas[0] - 1e-9
    assert g22 * p2 / (g12 * p1 + 0.5) >= betas[1] - 1e-9
    assert grid_witness_m2k1(s, np.array([40.0, 20.0])) == (False, None)


def test_grid_feasibility_monotone_in_targets():
    rng = np.random.default_rng(23)
    for _ in range(5):
        s = random_scenario(2, 1, rng=rng)
        betas = rng.uniform(0.2, 2.0, size=2)
        if grid_feasible_m2k1(s, betas, n_grid=150):
            assert grid_feasible_m2k1(s, betas * 0.5, n_grid=150)
        else:
            assert not grid_feasible_m2k1(s, betas * 2.0, n_grid=150)


def test_mrt_zf_boundary_orthogonal_channels_collapse():
    # With h_12 orthogonal to h_11 (and h_21 to h_22) the max-ratio beam
    # already nulls the cross link, so every weighting gives the same
    # interference-free rate pair: (log2(1 + P_1), log2(1 + P_2)).
    ch = np.zeros((2, 2, 2), dtype=complex)
    ch[0, 0] = [1.0, 0.0]
    ch[0, 1] = [0.0, 1.0]
    ch[1, 1] = [0.0, 1.0]
    ch[1, 0] = [1.0, 0.0]
    s = Scenario(ch, powers=np.array([2.0, 3.0]), noise_vars=np.ones(2))
    pts = mrt_zf_boundary_m2(s, grid_n=41)
    assert pts.shape[1] == 2
    assert np.allclose(pts[:, 0], np.log2(3.0), atol=1e-9)
    assert np.allclose(pts[:, 1], np.log2(4.0), atol=1e-9)


def test_mrt_zf_boundary_structure():
    s = random_scenario(2, 3, rng=np.random.default_rng(41))
    pts = mrt_zf_boundary_m2(s, grid_n=61)
    assert pts.ndim == 2 and pts.shape[0] >= 1 and pts.shape[1] == 2
    r1, r2 = pts[:, 0], pts[:, 1]
    assert np.all(np.diff(r1) > 0) and np.all(np.diff(r2) < 0)
    caps = [
        np.log2(1.0 + s.powers[i] * np.linalg.norm(s.channels[i, i]) ** 2 / s.noise_vars[i])
        for i in range(2)
    ]
    assert np.all(r1 <= caps[0] + 1e-9) and np.all(r2 <= caps[1] + 1e-9)
    # The zero-forcing endpoint is interference-free, so each user's best
    # boundary rate reaches at least its ZF rate (positive for K > 1).
    assert r1.max() > 0 and r2.max() > 0


def test_mrt_zf_requires_multiple_antennas():
    with pytest.raises(ValueError):
        mrt_zf_boundary_m2(random_scenario(2, 1, rng=np.random.default_rng(0)))
    with pytest.raises(ValueError):
        mrt_zf_boundary_m2(random_scenario(3, 2, rng=np.random.default_rng(0)))


def test_projection_grid_ball_distance():
    p = projection_grid_check(
        np.array([3.0, 4.0]), [Ball(np.array([0, 1]), 2.5)], resolution=1e-3
    )
    d = np.linalg.norm(np.array([3.0, 4.0]) - p)
    assert np.linalg.norm(p) <= 2.5 + 1e-9
    assert abs(d - 2.5) <= 2e-3


def test_projection_grid_affine_is_exact():
    # Curvature-free set: the null-space parameterization centers the search
    # on the true projection, so the position itself is grid-accurate.
    p = projection_grid_check(np.array([1.0, 0.0]), [Affine(np.array([[1.0, 1.0]]))])
    assert np.allclose(p, [0.5, -0.5], atol=2e-3)


def test_projection_grid_ball_halfspace_cap():
    # Projecting (-1, 2) onto {||x|| <= 1, x_0 >= 0.5}: both constraints
    # active, optimum (0.5, sqrt(3)/2).
    half = SocEpigraph(np.zeros((1, 2)), np.array([0.5]), np.array([1.0, 0.0]), 0.0)
    z = np.array([-1.0, 2.0])
    p = projection_grid_check(z, [Ball(np.array([0, 1]), 1.0), half])
    d_star = np.hypot(1.5, 2.0 - np.sqrt(0.75))
    assert abs(np.linalg.norm(z - p) - d_star) <= 2e-3
    assert p[0] >= 0.5 - 1e-9 and np.linalg.norm(p) <= 1.0 + 1e-9


def test_projection_grid_empty_intersection_raises():
    half = SocEpigraph(np.zeros((1, 1)), np.array([3.0]), np.array([1.0]), 0.0)
    with pytest.raises(RuntimeError):
        projection_grid_check(np.array([0.0]), [Ball(np.array([0]), 1.0), half])


def test_projection_grid_rejects_high_dimension():
    with pytest.raises(ValueError):
        projection_grid_check(np.zeros(5), [Ball(np.arange(5), 1.0)])
