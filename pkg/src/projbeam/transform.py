"""Rate targets to convex feasibility sets.

Pipeline: per-user SINR targets beta_i are rewritten as second-order cone
constraints on the stacked complex vector x = [w_1; ...; w_M; 0], then the
whole problem is lifted to real coordinates xbar = [Re x; Im x].  Each cell i
ends up with a finite family of convex sets

    F_i = SOC(cell i) n Affine(cell i) n Ball_1 n ... n Ball_M,

described by the small descriptor records below, which is all the projection
engine ever sees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BeamformerSet, Scenario

__all__ = [
    "RateProfile",
    "FeasibilityTarget",
    "make_betas",
    "SocEpigraph",
    "Ball",
    "Affine",
    "StackedInstance",
    "LiftedInstance",
    "build_stacked",
    "lift_real",
    "build_lifted",
    "lift_vector",
    "unlift_vector",
    "extract_beamformers",
    "embed_beamformers",
    "max_violation",
    "cell_is_viable",
    "dump_lifted",
]


@dataclass(frozen=True)
class RateProfile:
    """Rate split alpha: nonnegative, sums to one; R_i >= alpha_i * r_sum."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 1:
            raise ValueError("alpha must be a vector")
        if np.any(a < 0):
            raise ValueError("alpha entries must be nonnegative")
        if abs(a.sum() - 1.0) > 1e-9:
            raise ValueError(f"alpha must sum to 1, got {a.sum()!r}")
        object.__setattr__(self, "alpha", a)


@dataclass(frozen=True)
class FeasibilityTarget:
    """Per-cell SINR floors beta_i >= 0."""

    betas: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        if b.ndim != 1 or np.any(b < 0):
            raise ValueError("betas must be a nonnegative vector")
        object.__setattr__(self, "betas", b)


def make_betas(alpha, r0: float, log_base: str = "two") -> np.ndarray:
    """SINR floors for sum rate r0 split by alpha: beta_i = base^(alpha_i r0) - 1.

    Base 2 matches rates measured in bits; ``log_base="e"`` gives the
    natural-log variant for rates in nats.
    """
    a = RateProfile(alpha).alpha
    if r0 < 0:
        raise ValueError("r0 must be nonnegative")
    if log_base == "two":
        return np.exp2(a * r0) - 1.0
    if log_base == "e":
        return np.exp(a * r0) - 1.0
    raise ValueError(f"log_base must be 'two' or 'e', got {log_base!r}")


# --- convex set descriptors -------------------------------------------------


@dataclass(frozen=True)
class SocEpigraph:
    """{x : ||B x + b|| <= c . x + d}."""

    B: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float

    def residual(self, x: np.ndarray) -> float:
        return float(max(0.0, np.linalg.norm(self.B @ x + self.b) - (self.c @ x + self.d)))


@dataclass(frozen=True)
class Ball:
    """{x : ||x[indices]|| <= radius} — a ball on a coordinate sub-vector."""

    indices: np.ndarray
    radius: float

    def residual(self, x: np.ndarray) -> float:
        return float(max(0.0, np.linalg.norm(x[self.indices]) - self.radius))


@dataclass(frozen=True)
class Affine:
    """{x : E x = 0} with linearly independent rows."""

    E: np.ndarray

    def residual(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.E @ x))


# --- stacked complex form ----------------------------------------------------


@dataclass(frozen=True)
class StackedInstance:
    """Complex SOCP data on x = [w_1; ...; w_M; 0] in C^(MK+1).

    ``a_mats[i]`` is A_i = diag(h_1i^H, ..., h_Mi^H, 0) of shape (M+1, MK+1)
    and ``noise_vecs[i]`` puts sigma_i in the last slot, so that
    ||A_i x + n_i||^2 = sum_j |h_ji^H w_j|^2 + sigma_i^2.
    """

    scenario: Scenario
    target: FeasibilityTarget
    a_mats: np.ndarray
    noise_vecs: np.ndarray

    @property
    def n_prime(self) -> int:
        return self.a_mats.shape[2]


def build_stacked(s: Scenario, target: FeasibilityTarget) -> StackedInstance:
    m, k = s.num_cells, s.num_antennas
    if target.betas.shape != (m,):
        raise ValueError(f"need {m} betas, got {target.betas.shape}")
    n_prime = m * k + 1
    a_mats = np.zeros((m, m + 1, n_prime), dtype=complex)
    noise_vecs = np.zeros((m, m + 1), dtype=complex)
    for i in range(m):
        for j in range(m):
            a_mats[i, j, j * k : (j + 1) * k] = np.conj(s.channels[j, i])
        noise_vecs[i, m] = np.sqrt(s.noise_vars[i])
    return StackedInstance(s, target, a_mats, noise_vecs)


def stacked_soc_residual(si: StackedInstance, x: np.ndarray, i: int) -> float:
    """Complex-side residual of cell i's cone constraint (for checks/tests)."""
    s, beta = si.scenario, si.target.betas[i]
    k = s.num_antennas
    lhs = np.sqrt(beta) * np.linalg.norm(si.a_mats[i] @ x + si.noise_vecs[i])
    direct = np.vdot(s.channels[i, i], x[i * k : (i + 1) * k])
    return float(lhs - np.sqrt(1.0 + beta) * direct.real)


# --- real lifting -------------------------------------------------------------


@dataclass(frozen=True)
class LiftedInstance:
    """Real-lifted per-cell constraint families on xbar in R^(2(MK+1)).

    ``families[i]`` lists cell i's descriptors in the fixed order
    (SocEpigraph, Affine, Ball_1, ..., Ball_M).
    """

    scenario: Scenario
    target: FeasibilityTarget
    n_prime: int
    families: tuple

    @property
    def dim(self) -> int:
        return 2 * self.n_prime

    @property
    def num_cells(self) -> int:
        return self.scenario.num_cells


def _re_block(i: int, k: int) -> np.ndarray:
    return np.arange(i * k, (i + 1) * k)


def _im_block(i: int, k: int, n_prime: int) -> np.ndarray:
    return n_prime + _re_block(i, k)


def lift_real(si: StackedInstance) -> LiftedInstance:
    """Lift the complex SOCP to real coordinates xbar = [Re x; Im x].

    A complex row h^H becomes the pair of real rows [Re h, Im h] (real part)
    and [-Im h, Re h] (imaginary part); norms are preserved.  The phase of
    each direct term is pinned by the affine row Im(h_ii^H w_i) = 0, and two
    unit rows keep the stacked padding coordinate at zero.
    """
    s, t = si.scenario, si.target
    m, k = s.num_cells, s.num_antennas
    n_prime = si.n_prime
    dim = 2 * n_prime

    balls = []
    for j in range(m):
        idx = np.concatenate([_re_block(j, k), _im_block(j, k, n_prime)])
        balls.append(Ball(idx, float(np.sqrt(s.powers[j]))))

    families = []
    for i in range(m):
        beta = t.betas[i]
        a_bar = np.zeros((2 * (m + 1), dim))
        for j in range(m):
            h = s.channels[j, i]
            re_cols, im_cols = _re_block(j, k), _im_block(j, k, n_prime)
            a_bar[j, re_cols] = h.real
            a_bar[j, im_cols] = h.imag
            a_bar[m + 1 + j, re_cols] = -h.imag
            a_bar[m + 1 + j, im_cols] = h.real
        b_bar = np.zeros(2 * (m + 1))
        b_bar[m] = np.sqrt(s.noise_vars[i])

        h_ii = s.channels[i, i]
        c = np.zeros(dim)
        c[_re_block(i, k)] = np.sqrt(1.0 + beta) * h_ii.real
        c[_im_block(i, k, n_prime)] = np.sqrt(1.0 + beta) * h_ii.imag
        soc = SocEpigraph(np.sqrt(beta) * a_bar, np.sqrt(beta) * b_bar, c, 0.0)

        rows = []
        if np.linalg.norm(h_ii) > 0:
            phase_row = np.zeros(dim)
            phase_row[_re_block(i, k)] = -h_ii.imag
            phase_row[_im_block(i, k, n_prime)] = h_ii.real
            rows.append(phase_row)
        pad_re = np.zeros(dim)
        pad_re[n_prime - 1] = 1.0
        pad_im = np.zeros(dim)
        pad_im[dim - 1] = 1.0
        rows.extend([pad_re, pad_im])
        e_mat = np.array(rows)
        if np.linalg.matrix_rank(e_mat) != e_mat.shape[0]:
            raise ValueError(f"affine rows of cell {i} are rank deficient")

        families.append((soc, Affine(e_mat), *balls))
    return LiftedInstance(s, t, n_prime, tuple(families))


def build_lifted(s: Scenario, target: FeasibilityTarget) -> LiftedInstance:
    return lift_real(build_stacked(s, target))


# --- moving between representations -------------------------------------------


def lift_vector(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    return np.concatenate([x.real, x.imag])


def unlift_vector(xbar: np.ndarray) -> np.ndarray:
    n_prime = xbar.shape[0] // 2
    return xbar[:n_prime] + 1j * xbar[n_prime:]


def extract_beamformers(inst: LiftedInstance, xbar: np.ndarray) -> BeamformerSet:
    x = unlift_vector(xbar)
    m, k = inst.scenario.num_cells, inst.scenario.num_antennas
    return BeamformerSet(x[: m * k].reshape(m, k))


def embed_beamformers(inst: LiftedInstance, w: BeamformerSet) -> np.ndarray:
    """Phase-rotated stacking of a beamformer set into lifted coordinates.

    Each w_i is rotated so h_ii^H w_i lands on the nonnegative real axis;
    SINRs and powers are unchanged and the rotated stack satisfies the
    per-cell phase rows by construction.
    """
    s = inst.scenario
    rotated = np.array(w.omegas, dtype=complex)
    for i in range(s.num_cells):
        g = np.vdot(s.channels[i, i], rotated[i])
        if abs(g) > 0:
            rotated[i] = rotated[i] * (np.conj(g) / abs(g))
    x = np.concatenate([rotated.ravel(), [0.0 + 0.0j]])
    return lift_vector(x)


def max_violation(inst: LiftedInstance, xbar: np.ndarray) -> float:
    """Largest residual of xbar over every descriptor of every cell family."""
    return max(
        desc.residual(xbar) for family in inst.families for desc in family
    )


def cell_is_viable(inst: LiftedInstance, i: int) -> bool:
    """Whether cell i's set F_i is nonempty.

    Zeroing the other cells' beamformers minimizes interference, and full
    power along h_ii maximizes the direct term, so F_i is nonempty exactly
    when P_i ||h_ii||^2 >= beta_i sigma_i^2.
    """
    s = inst.scenario
    best = s.powers[i] * np.linalg.norm(s.channels[i, i]) ** 2
    return bool(best >= inst.target.betas[i] * s.noise_vars[i])


def dump_lifted(inst: LiftedInstance) -> str:
    """Human-readable dump of the lifted families (debugging aid)."""
    lines = [
        f"lifted instance: M={inst.scenario.num_cells} K={inst.scenario.num_antennas} "
        f"dim={inst.dim} betas={np.array2string(inst.target.betas, precision=4)}"
    ]
    for i, family in enumerate(inst.families):
        soc, aff = family[0], family[1]
        lines.append(
            f"cell {i}: soc B{soc.B.shape} ||b||={np.linalg.norm(soc.b):.4g} "
            f"||c||={np.linalg.norm(soc.c):.4g} d={soc.d:.4g}; "
            f"affine rows={aff.E.shape[0]}; "
            f"balls r={[round(b.radius, 4) for b in family[2:]]}"
        )
    return "\n".join(lines)
