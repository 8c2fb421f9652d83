"""Cyclic feasibility runs: one token travels a ring of base stations.

Where the averaged scheme projects every cell from a shared iterate and
meets at a barrier, here a single lifted vector is passed around a ring.
Each station projects the token onto its own constraint family and forwards
the result, so exactly one cell computes at a time and one message per ring
edge is exchanged per round.  Termination uses the same eps/xi stall rules
as the averaged scheme, applied to the per-cell step distances and
evaluated at round boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .apb import (
    _ROUND_TOL_CAP,
    Decision,
    DecisionThresholds,
    RoundRecord,
    Verdict,
    _families_of,
    _finalize_beamformers,
    _floors_met,
    apb_decide,
    make_projectors,
)
from .model import BeamformerSet, compute_sinr
from .projop import IntersectionProjector, ProjectionConfig
from .transform import LiftedInstance, cell_is_viable, extract_beamformers, max_violation

__all__ = [
    "CpbState",
    "CpbResult",
    "initial_cpb_state",
    "cpb_step",
    "run_cpb",
]


@dataclass
class CpbState:
    """Mutable run state; the token is the single vector being refined."""

    round: int
    token: np.ndarray
    last_per_bs: np.ndarray
    v: np.ndarray
    v_star: np.ndarray
    flags: np.ndarray
    order: tuple[int, ...]
    messages: int = 0
    step_ok: bool = True
    trace: list[RoundRecord] = field(default_factory=list)

    # apb_decide reads .x_tilde for the feasible-point payload; for the
    # cyclic scheme that role is played by the token.
    @property
    def x_tilde(self) -> np.ndarray:
        return self.token


@dataclass(frozen=True)
class CpbResult:
    verdict: Verdict
    rounds: int
    decision_rounds: int
    trace: tuple[RoundRecord, ...]
    x_final: np.ndarray
    reason: str
    messages: int = 0
    beamformers: BeamformerSet | None = None
    residuals: np.ndarray | None = None
    warning_rounds: int = 0
    final_gap: float | None = None


def initial_cpb_state(instance, start: np.ndarray, order=None) -> CpbState:
    m = len(_families_of(instance))
    if order is None:
        order = tuple(range(m))
    else:
        order = tuple(int(i) for i in order)
        if sorted(order) != list(range(m)):
            raise ValueError(f"order must be a permutation of 0..{m - 1}, got {order}")
    token = np.asarray(start, dtype=float).copy()
    return CpbState(
        round=0,
        token=token,
        last_per_bs=np.tile(token, (m, 1)),
        v=np.zeros(m),
        v_star=np.zeros(m),
        flags=np.zeros(m, dtype=bool),
        order=order,
    )


def cpb_step(
    state: CpbState,
    i: int,
    instance,
    cfg: ProjectionConfig | None = None,
    projector: IntersectionProjector | None = None,
    tol: float | None = None,
) -> CpbState:
    """BS i projects the incoming token onto its own family and forwards it."""
    if projector is None:
        projector = IntersectionProjector(_families_of(instance)[i], cfg)
    res = projector.project(state.token, tol=tol)
    state.token = res.point
    state.last_per_bs[i] = res.point
    state.v[i] = res.distance
    state.messages += 1
    state.step_ok &= res.converged
    return state


def _cpb_round(state, instance, projectors, tol) -> None:
    token_in = state.token
    state.step_ok = True
    for i in state.order:
        cpb_step(state, i, instance, projector=projectors[i], tol=tol)
    state.round += 1
    x_delta = float(np.linalg.norm(state.token - token_in))
    snrs = None
    if isinstance(instance, LiftedInstance):
        w = extract_beamformers(instance, state.token)
        snrs = np.array(
            [compute_sinr(instance.scenario, w, i) for i in range(len(state.v))]
        )
    state.trace.append(
        RoundRecord(state.round, state.v.copy(), x_delta, snrs, state.step_ok)
    )


def _round_tol(state) -> float:
    if state.trace:
        return min(0.01 * state.trace[-1].x_delta, _ROUND_TOL_CAP)
    return _ROUND_TOL_CAP


def run_cpb(
    instance: LiftedInstance,
    start: np.ndarray | None = None,
    order=None,
    th: DecisionThresholds | None = None,
    cfg: ProjectionConfig | None = None,
    polish: bool = True,
) -> CpbResult:
    """Full token-ring feasibility run on a lifted instance.

    Mirrors the averaged runner: structurally empty families abort before
    any projection, the eps/xi rules decide at round boundaries, and a
    feasible verdict is polished and re-verified before beamformers are
    returned.
    """
    th = th or DecisionThresholds()
    for i in range(instance.num_cells):
        if not cell_is_viable(instance, i):
            x0 = np.zeros(instance.dim) if start is None else np.asarray(start, float)
            return CpbResult(
                verdict=Verdict.INFEASIBLE,
                rounds=0,
                decision_rounds=0,
                trace=(),
                x_final=x0,
                reason=f"cell {i} cannot reach its floor at full power (empty family)",
            )
    state = initial_cpb_state(
        instance, np.zeros(instance.dim) if start is None else start, order
    )
    projectors = make_projectors(instance, cfg)
    while True:
        _cpb_round(state, instance, projectors, _round_tol(state))
        decision = apb_decide(state, th)
        if decision.verdict is not Verdict.CONTINUE:
            break
        if state.round >= th.max_rounds:
            decision = Decision(Verdict.TIMEOUT)
            break
    decision_rounds = state.round
    if decision.verdict is Verdict.FEASIBLE:
        if polish:
            # same exits as the averaged runner's polish: lifted gap closed,
            # floors delivered with margin while the token has stopped
            # moving, or progress too slow to be worth further rounds
            check_floors = isinstance(instance, LiftedInstance)
            best = np.inf
            since_gain = 0
            for _ in range(150):
                gap = state.v.max()
                if gap <= th.eps / 10.0:
                    break
                if (
                    check_floors
                    and state.trace[-1].x_delta < th.eps
                    and _floors_met(instance, state.token)
                ):
                    break
                if gap < 0.90 * best:
                    best, since_gain = gap, 0
                else:
                    since_gain += 1
                    if since_gain >= 30:
                        break
                _cpb_round(state, instance, projectors, _round_tol(state))
        gap = float(max(state.v.max(), max_violation(instance, state.token)))
        return CpbResult(
            verdict=Verdict.FEASIBLE,
            rounds=state.round,
            decision_rounds=decision_rounds,
            trace=tuple(state.trace),
            x_final=state.token.copy(),
            reason="every cell's step distance settled below xi",
            messages=state.messages,
            beamformers=_finalize_beamformers(instance, state.token),
            warning_rounds=sum(1 for rec in state.trace if not rec.all_converged),
            final_gap=gap,
        )
    warnings = sum(1 for rec in state.trace if not rec.all_converged)
    if decision.verdict is Verdict.INFEASIBLE:
        stalled = int(np.argmax(state.v_star))
        reason = f"cell {stalled} stalled at step distance {state.v_star[stalled]:.4f} > xi"
    else:
        reason = f"no verdict within {th.max_rounds} rounds"
    return CpbResult(
        verdict=decision.verdict,
        rounds=state.round,
        decision_rounds=decision_rounds,
        trace=tuple(state.trace),
        x_final=state.token.copy(),
        reason=reason,
        messages=state.messages,
        residuals=decision.residuals,
        warning_rounds=warnings,
    )
