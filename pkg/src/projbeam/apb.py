"""Feasibility runs by parallel projection and averaging.

Each round projects the current average onto every cell's constraint family
in parallel, then re-averages.  The per-cell projection distances v_i drive
the verdict: a distance that stops moving (within eps) while still large
(above xi) means the families cannot intersect; distances that settle small
for every cell certify feasibility.  The product-space view (stack the M
projections against M copies of the average) makes the round an alternating
projection between two convex sets, so D_n = sqrt(sum_i v_i^2) is
non-increasing -- a useful invariant for tests and traces.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .model import BeamformerSet, compute_sinr
from .projop import IntersectionProjector, ProjectionConfig
from .transform import (
    LiftedInstance,
    cell_is_viable,
    extract_beamformers,
    max_violation,
)

__all__ = [
    "Verdict",
    "DecisionThresholds",
    "RoundRecord",
    "ApbState",
    "Decision",
    "ApbResult",
    "initial_apb_state",
    "apb_round",
    "apb_decide",
    "run_apb",
]


class Verdict(enum.Enum):
    CONTINUE = "continue"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class DecisionThresholds:
    """Stall-detection knobs: eps = "stopped moving", xi = "still far away".

    eps must sit well below xi; a per-cell distance that changes by less
    than eps between checks while its reference value exceeds xi is read as
    a geometric gap (infeasible).  max_rounds bounds the run; hitting it is
    reported as a distinct timeout verdict rather than infeasibility.
    """

    eps: float = 0.002
    xi: float = 0.1
    max_rounds: int = 2000

    def __post_init__(self):
        if not 0.0 < self.eps < self.xi:
            raise ValueError(f"need 0 < eps < xi, got eps={self.eps}, xi={self.xi}")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")


@dataclass(frozen=True)
class RoundRecord:
    """One round of trace: distances, iterate movement, achieved SINRs."""

    round: int
    v: np.ndarray
    x_delta: float
    snrs: np.ndarray | None
    all_converged: bool

    @property
    def d_n(self) -> float:
        return float(np.linalg.norm(self.v))


@dataclass
class ApbState:
    """Mutable run state; ``v_star`` and ``flags`` carry the decision memory."""

    round: int
    x_tilde: np.ndarray
    per_bs: np.ndarray | None
    v: np.ndarray
    v_star: np.ndarray
    flags: np.ndarray
    trace: list[RoundRecord] = field(default_factory=list)


@dataclass(frozen=True)
class Decision:
    verdict: Verdict
    point: np.ndarray | None = None
    residuals: np.ndarray | None = None


@dataclass(frozen=True)
class ApbResult:
    """Terminal verdict plus everything needed to audit the run.

    ``decision_rounds`` counts rounds up to the verdict; ``rounds`` also
    includes the polish rounds appended after a feasible verdict.
    ``warning_rounds`` counts rounds containing a projection that could not
    certify convergence (the best iterate is used and the run continues).
    """

    verdict: Verdict
    rounds: int
    decision_rounds: int
    trace: tuple
    x_final: np.ndarray
    reason: str
    beamformers: BeamformerSet | None = None
    residuals: np.ndarray | None = None
    warning_rounds: int = 0
    final_gap: float | None = None


def _families_of(obj):
    return obj.families if isinstance(obj, LiftedInstance) else tuple(obj)


def initial_apb_state(instance, start: np.ndarray) -> ApbState:
    m = len(_families_of(instance))
    x0 = np.asarray(start, dtype=float).copy()
    return ApbState(
        round=0,
        x_tilde=x0,
        per_bs=None,
        v=np.zeros(m),
        v_star=np.zeros(m),
        flags=np.zeros(m, dtype=bool),
    )


_ROUND_TOL_CAP = 1e-4


def make_projectors(instance, cfg: ProjectionConfig | None = None):
    """One reusable projector per cell; they carry warm state across rounds."""
    return [IntersectionProjector(f, cfg) for f in _families_of(instance)]


def apb_round(
    state: ApbState,
    instance,
    cfg: ProjectionConfig | None = None,
    projectors=None,
) -> ApbState:
    """Advance one round: M independent projections, then a fixed-order mean.

    The projections only read ``state.x_tilde`` and are free of shared
    state, so an executor could run them concurrently; the sequential loop
    here is one valid schedule and keeps traces bit-identical.  Passing the
    same ``projectors`` every round lets each cell warm start from where it
    left off; fresh ones are built (and discarded) otherwise.
    """
    families = _families_of(instance)
    m = len(families)
    if projectors is None:
        projectors = make_projectors(instance, cfg)
    # The round only consumes distances and an average, both of which move
    # by ~x_delta per round, so each projection is solved to a small
    # fraction of the last movement instead of full depth every time.  The
    # engine floors this at its configured inner_tol.
    if state.trace:
        round_tol = min(0.01 * state.trace[-1].x_delta, _ROUND_TOL_CAP)
    else:
        round_tol = _ROUND_TOL_CAP
    points = np.empty((m, state.x_tilde.shape[0]))
    v = np.empty(m)
    all_ok = True
    for i in range(m):
        res = projectors[i].project(state.x_tilde, tol=round_tol)
        points[i] = res.point
        v[i] = res.distance
        all_ok &= res.converged
    x_new = points.mean(axis=0)
    x_delta = float(np.linalg.norm(x_new - state.x_tilde))
    snrs = None
    if isinstance(instance, LiftedInstance):
        w = extract_beamformers(instance, x_new)
        snrs = np.array(
            [compute_sinr(instance.scenario, w, i) for i in range(m)]
        )
    state.round += 1
    state.x_tilde = x_new
    state.per_bs = points
    state.v = v
    state.trace.append(RoundRecord(state.round, v.copy(), x_delta, snrs, all_ok))
    return state


def apb_decide(state: ApbState, th: DecisionThresholds) -> Decision:
    """Apply the eps/xi stall rules to the latest round's distances.

    References v_i* start at zero; a cell whose distance has stopped moving
    is either finished (v_i* <= xi, sticky flag) or evidence of a gap
    (v_i* > xi, infeasible).  Round 1 always continues: every comparison
    against the zero references would be degenerate.
    """
    if state.round < 1:
        raise ValueError("decide requires at least one completed round")
    for i in range(state.v.shape[0]):
        if state.flags[i]:
            continue
        if abs(state.v[i] - state.v_star[i]) < th.eps:
            if state.v_star[i] > th.xi:
                return Decision(Verdict.INFEASIBLE, residuals=state.v.copy())
            state.flags[i] = True
        else:
            state.v_star[i] = state.v[i]
    if state.round >= 2 and state.flags.all():
        return Decision(Verdict.FEASIBLE, point=state.x_tilde.copy())
    return Decision(Verdict.CONTINUE)


def _finalize_beamformers(inst: LiftedInstance, xbar: np.ndarray) -> BeamformerSet:
    """Un-lift and clamp each beamformer to its exact power budget."""
    w = extract_beamformers(inst, xbar).omegas.copy()
    for j in range(inst.scenario.num_cells):
        nj = np.linalg.norm(w[j])
        cap = np.sqrt(inst.scenario.powers[j])
        if nj > cap:
            w[j] *= cap / nj
    return BeamformerSet(w)


def _floors_met(inst: LiftedInstance, xbar: np.ndarray, rel=0.005, bits=0.0025) -> bool:
    """Do the clamped beamformers already meet every floor with margin?

    Polish can stop as soon as this holds: the iterate delivers what a
    caller will check, regardless of how far the lifted average still sits
    from the ideal intersection point.  Two margins are enforced per cell --
    a relative one on the SINR floor and an absolute one in bits -- so that
    neither large nor near-zero floors are judged by a vanishing band.
    """
    w = _finalize_beamformers(inst, xbar)
    for i, beta in enumerate(inst.target.betas):
        need = max(beta * (1.0 - rel), (1.0 + beta) * 2.0 ** (-bits) - 1.0)
        if compute_sinr(inst.scenario, w, i) < need:
            return False
    return True


def _polish(state, instance, cfg, projectors, target_gap, eps_move, budget=150):
    """Extra plain rounds after a feasible verdict to tighten the iterate.

    Stops when the lifted gap is closed, or when the delivered beamformers
    meet every floor with margin and the iterate has stopped moving --
    whichever comes first.  Also bails out once progress turns glacial
    (well under 10% of the gap per thirty rounds): that happens on empty
    intersections inside the xi band, where no budget closes the gap, and
    on near-tangent instances where the iterate in hand is already as good
    as this polish is going to make it.
    """
    check_floors = isinstance(instance, LiftedInstance)
    best = np.inf
    since_gain = 0
    for _ in range(budget):
        gap = state.v.max()
        if gap <= target_gap:
            break
        if (
            check_floors
            and state.trace[-1].x_delta < eps_move
            and _floors_met(instance, state.x_tilde)
        ):
            break
        if gap < 0.90 * best:
            best, since_gain = gap, 0
        else:
            since_gain += 1
            if since_gain >= 30:
                break
        apb_round(state, instance, cfg, projectors)
    return state


def run_apb(
    instance: LiftedInstance,
    start: np.ndarray | None = None,
    th: DecisionThresholds | None = None,
    cfg: ProjectionConfig | None = None,
    polish: bool = True,
) -> ApbResult:
    """Full feasibility run on a lifted instance.

    Cells that cannot meet their floor even interference-free make F_i
    empty, so the run aborts infeasible before projecting anything.  On a
    feasible verdict the average is polished with extra rounds and the
    un-lifted beamformers are returned with powers clamped to their budgets.
    """
    th = th or DecisionThresholds()
    for i in range(instance.num_cells):
        if not cell_is_viable(instance, i):
            x0 = np.zeros(instance.dim) if start is None else np.asarray(start, float)
            return ApbResult(
                verdict=Verdict.INFEASIBLE,
                rounds=0,
                decision_rounds=0,
                trace=(),
                x_final=x0,
                reason=f"cell {i} cannot reach its floor at full power (empty family)",
            )
    state = initial_apb_state(instance, np.zeros(instance.dim) if start is None else start)
    projectors = make_projectors(instance, cfg)
    while True:
        apb_round(state, instance, cfg, projectors)
        decision = apb_decide(state, th)
        if decision.verdict is not Verdict.CONTINUE:
            break
        if state.round >= th.max_rounds:
            decision = Decision(Verdict.TIMEOUT)
            break
    decision_rounds = state.round
    if decision.verdict is Verdict.FEASIBLE:
        if polish:
            _polish(
                state, instance, cfg, projectors,
                target_gap=th.eps / 10.0, eps_move=th.eps,
            )
        gap = float(max(state.v.max(), max_violation(instance, state.x_tilde)))
        return ApbResult(
            verdict=Verdict.FEASIBLE,
            rounds=state.round,
            decision_rounds=decision_rounds,
            trace=tuple(state.trace),
            x_final=state.x_tilde.copy(),
            reason="every cell's distance settled below xi",
            beamformers=_finalize_beamformers(instance, state.x_tilde),
            warning_rounds=sum(1 for rec in state.trace if not rec.all_converged),
            final_gap=gap,
        )
    warnings = sum(1 for rec in state.trace if not rec.all_converged)
    if decision.verdict is Verdict.INFEASIBLE:
        stalled = int(np.argmax(state.v_star))
        reason = (
            f"cell {stalled} stalled at distance {state.v_star[stalled]:.4f} > xi"
        )
    else:
        reason = f"no verdict within {th.max_rounds} rounds"
    return ApbResult(
        verdict=decision.verdict,
        rounds=state.round,
        decision_rounds=decision_rounds,
        trace=tuple(state.trace),
        x_final=state.x_tilde.copy(),
        reason=reason,
        residuals=decision.residuals,
        warning_rounds=warnings,
    )
