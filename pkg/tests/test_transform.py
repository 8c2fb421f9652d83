"""Tests for target construction, complex stacking, and the real lifting.

The load-bearing identity is that the stacked/lifted quadratic forms
reproduce the SINR arithmetic exactly; everything downstream projects onto
sets built here.
"""

import numpy as np
import pytest

from projbeam.model import BeamformerSet, Scenario, compute_sinr, random_scenario
from projbeam.transform import (
    Affine,
    Ball,
    FeasibilityTarget,
    RateProfile,
    SocEpigraph,
    build_lifted,
    build_stacked,
    cell_is_viable,
    embed_beamformers,
    extract_beamformers,
    lift_vector,
    make_betas,
    max_violation,
    stacked_soc_residual,
    unlift_vector,
)


def _two_cell_scenario() -> Scenario:
    ch = np.array(
        [[[2.0 + 0j], [0.5j]], [[1.0 - 1.0j], [1.0 + 1.0j]]], dtype=complex
    )
    return Scenario(ch, powers=np.array([4.0, 1.0]), noise_vars=np.array([1.0, 0.5]))


def test_rate_profile_validation():
    RateProfile(np.array([0.25, 0.75]))
    with pytest.raises(ValueError):
        RateProfile(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        RateProfile(np.array([-0.1, 1.1]))


def test_make_betas_frozen_values():
    a = np.array([0.5, 0.5])
    assert make_betas(a, 2.0) == pytest.approx([1.0, 1.0])  # 2^1 - 1
    assert make_betas(a, 4.0) == pytest.approx([3.0, 3.0])  # 2^2 - 1
    assert make_betas(np.array([1.0, 0.0]), 3.0) == pytest.approx([7.0, 0.0])
    assert make_betas(a, 2.0, log_base="e") == pytest.approx([np.e - 1.0] * 2)
    assert make_betas(a, 0.0) == pytest.approx([0.0, 0.0])
    with pytest.raises(ValueError):
        make_betas(a, -1.0)


def test_stacked_norm_identity():
    # ||A_i x + n_i||^2 must equal sum_j |h_ji^H w_j|^2 + sigma_i^2.
    s = _two_cell_scenario()
    si = build_stacked(s, FeasibilityTarget(np.array([1.0, 2.0])))
    x = np.array([1.5, 0.5 + 0.5j, 0.0])
    assert np.linalg.norm(si.a_mats[0] @ x + si.noise_vecs[0]) ** 2 == pytest.approx(
        9.0 + 1.0 + 1.0, rel=1e-12
    )
    assert np.linalg.norm(si.a_mats[1] @ x + si.noise_vecs[1]) ** 2 == pytest.approx(
        0.5625 + 1.0 + 0.5, rel=1e-12
    )


def test_stacked_norm_identity_random():
    rng = np.random.default_rng(11)
    s = random_scenario(3, 2, rng=rng)
    si = build_stacked(s, FeasibilityTarget(np.zeros(3)))
    w = BeamformerSet((rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))))
    x = np.concatenate([w.omegas.ravel(), [0.0]])
    for i in range(3):
        interf = sum(
            abs(np.vdot(s.channels[j, i], w.omegas[j])) ** 2 for j in range(3)
        )
        lhs = np.linalg.norm(si.a_mats[i] @ x + si.noise_vecs[i]) ** 2
        assert lhs == pytest.approx(interf + s.noise_vars[i], rel=1e-12)


def test_soc_residual_sign_tracks_sinr():
    # Nonpositive residual with the phase aligned <=> SINR_i >= beta_i.
    s = _two_cell_scenario()
    w = BeamformerSet(np.array([[1.5 + 0j], [0.5 + 0.5j]]))  # SINRs 4.5, 0.941
    si = build_stacked(s, FeasibilityTarget(np.array([4.5, 2.0])))
    inst = build_lifted(s, si.target)
    xbar = embed_beamformers(inst, w)
    x = unlift_vector(xbar)
    assert stacked_soc_residual(si, x, 0) <= 1e-12  # exactly at the floor
    assert stacked_soc_residual(si, x, 1) > 0.1  # 0.941 < 2


def test_lifted_residual_matches_stacked():
    rng = np.random.default_rng(5)
    s = random_scenario(2, 3, rng=rng)
    target = FeasibilityTarget(np.array([0.8, 1.7]))
    si = build_stacked(s, target)
    inst = build_lifted(s, target)
    # On phase-aligned points the lifted SOC residual equals the complex one.
    w = BeamformerSet(rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3)))
    xbar = embed_beamformers(inst, w)
    x = unlift_vector(xbar)
    for i in range(2):
        soc = inst.families[i][0]
        lifted = np.linalg.norm(soc.B @ xbar + soc.b) - (soc.c @ xbar + soc.d)
        assert lifted == pytest.approx(stacked_soc_residual(si, x, i), abs=1e-12)


def test_family_layout_and_shapes():
    s = random_scenario(3, 2, rng=np.random.default_rng(2))
    inst = build_lifted(s, FeasibilityTarget(np.array([1.0, 1.0, 1.0])))
    assert inst.n_prime == 7 and inst.dim == 14
    assert len(inst.families) == 3
    for family in inst.families:
        soc, aff = family[0], family[1]
        assert isinstance(soc, SocEpigraph) and isinstance(aff, Affine)
        balls = family[2:]
        assert len(balls) == 3 and all(isinstance(b, Ball) for b in balls)
        covered = np.sort(np.concatenate([b.indices for b in balls]))
        # Power balls cover each beamformer's re/im blocks, never the pad slots.
        assert covered.size == 12
        assert 6 not in covered and 13 not in covered
        assert np.linalg.matrix_rank(aff.E) == aff.E.shape[0]
    for j, ball in enumerate(inst.families[0][2:]):
        assert ball.radius == pytest.approx(np.sqrt(s.powers[j]))


def test_embedded_feasible_point_has_zero_violation():
    # A beamformer set that meets its SINR floors and power budgets embeds
    # into a point lying in every F_i.
    s = _two_cell_scenario()
    w = BeamformerSet(np.array([[1.5 + 0j], [0.5 + 0.5j]]))  # SINRs 4.5, 0.941
    inst = build_lifted(s, FeasibilityTarget(np.array([4.0, 0.9])))
    xbar = embed_beamformers(inst, w)
    assert max_violation(inst, xbar) <= 1e-12
    # Raising a floor above the achieved SINR breaks exactly that family.
    inst_hot = build_lifted(s, FeasibilityTarget(np.array([4.0, 1.1])))
    fam1 = inst_hot.families[1]
    assert max(d.residual(xbar) for d in fam1) > 1e-3
    fam0 = inst_hot.families[0]
    assert max(d.residual(xbar) for d in fam0) <= 1e-12


def test_embed_extract_roundtrip_preserves_sinr():
    rng = np.random.default_rng(17)
    s = random_scenario(3, 4, rng=rng)
    inst = build_lifted(s, FeasibilityTarget(np.ones(3)))
    w = BeamformerSet(rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4)))
    back = extract_beamformers(inst, embed_beamformers(inst, w))
    for i in range(3):
        assert compute_sinr(s, back, i) == pytest.approx(
            compute_sinr(s, w, i), rel=1e-12
        )
        # The rotation lands the direct gain on the nonnegative real axis.
        g = np.vdot(s.channels[i, i], back.omegas[i])
        assert abs(g.imag) <= 1e-12 * max(1.0, abs(g))


def test_lift_unlift_roundtrip():
    rng = np.random.default_rng(8)
    x = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    assert np.allclose(unlift_vector(lift_vector(x)), x)


def test_cell_viability_closed_form():
    # P_i ||h_ii||^2 >= beta_i sigma_i^2 decides emptiness of F_i.
    s = _two_cell_scenario()  # P|h_11|^2 = 16, sigma^2 = 1; P|h_22|^2 = 2, 0.5
    inst = build_lifted(s, FeasibilityTarget(np.array([15.9, 4.0])))
    assert cell_is_viable(inst, 0) and cell_is_viable(inst, 1)
    inst2 = build_lifted(s, FeasibilityTarget(np.array([16.1, 4.1])))
    assert not cell_is_viable(inst2, 0) and not cell_is_viable(inst2, 1)


def test_zero_direct_channel_is_handled():
    # h_ii = 0 kills the phase row; with beta > 0 the cell is not viable.
    ch = np.array([[[0.0 + 0j], [1.0 + 0j]], [[1.0 + 0j], [2.0 + 0j]]])
    s = Scenario(ch, np.ones(2), np.ones(2))
    inst = build_lifted(s, FeasibilityTarget(np.array([0.5, 0.5])))
    assert not cell_is_viable(inst, 0)
    assert cell_is_viable(inst, 1)
    # The degenerate family still evaluates residuals without error.
    assert np.isfinite(max_violation(inst, np.zeros(inst.dim)))
