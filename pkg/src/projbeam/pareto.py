"""Boundary probing: bisection on the sum rate along fixed rate-profile rays.

A rate profile alpha fixes the fraction of the sum rate each user gets, so
the region boundary along that ray is the largest feasible r0.  Feasibility
of a given r0 is monotone (lowering r0 only shrinks every SINR floor),
which makes plain bisection sound: feasible midpoints raise the lower
bracket, infeasible ones lower the upper.  Sweeping a grid of profiles
traces the whole boundary.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .apb import DecisionThresholds, Verdict, run_apb
from .cpb import run_cpb
from .model import BeamformerSet, Scenario, compute_rates, is_pareto_dominated
from .projop import ProjectionConfig
from .transform import FeasibilityTarget, RateProfile, build_lifted, make_betas

__all__ = [
    "BisectionConfig",
    "ParetoPoint",
    "single_user_rate_sum",
    "bisect_rsum",
    "sweep_boundary",
    "simplex_grid",
]

_ALGORITHMS = ("apb", "cpb", "oracle")

# Accepting a probe requires its polished beamformers to deliver the ray's
# rates to within this many bits.  Half the advertised reproduction budget
# of ParetoPoint (0.01), so the returned point keeps a margin.
_RATE_SLACK = 0.005

# Probes are judged in the model domain (delivered rates), so their inner
# projections only need enough depth for the eps-scale settle bookkeeping;
# escalated reruns get one extra decade for their tighter threshold.
_PROBE_CFG = ProjectionConfig(inner_tol=1e-4)
_TIGHT_CFG = ProjectionConfig(inner_tol=1e-5)


@dataclass(frozen=True)
class BisectionConfig:
    """Bracket and driver choice for one bisection.

    ``hi=None`` uses the sum of interference-free single-user rates, which
    no operating point can exceed.  ``algorithm="oracle"`` bisects an
    injected feasibility predicate instead of running a projection method
    (used to test the search itself against known answers).
    """

    lo: float = 0.0
    hi: float | None = None
    tol: float = 1e-3
    algorithm: str = "apb"

    def __post_init__(self):
        if self.lo < 0:
            raise ValueError("lo must be nonnegative")
        if self.hi is not None and self.hi <= self.lo:
            raise ValueError(f"need lo < hi, got lo={self.lo}, hi={self.hi}")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.algorithm not in _ALGORITHMS:
            raise ValueError(f"algorithm must be one of {_ALGORITHMS}")


@dataclass(frozen=True)
class ParetoPoint:
    """One boundary probe: the ray, the rate it certified, and the evidence."""

    alpha: RateProfile
    r_sum: float
    rates: np.ndarray
    beamformers: BeamformerSet | None
    dominated: bool = False


def single_user_rate_sum(s: Scenario) -> float:
    """Sum of each cell's interference-free full-power rate (bits)."""
    return float(_single_user_rates(s).sum())


def _single_user_rates(s: Scenario) -> np.ndarray:
    snr = [
        s.powers[i] * np.linalg.norm(s.channels[i, i]) ** 2 / s.noise_vars[i]
        for i in range(s.num_cells)
    ]
    return np.log2(1.0 + np.asarray(snr))


def _ceiling_deliverer(s: Scenario, alpha: np.ndarray) -> BeamformerSet | None:
    """Full-power MRT set iff it attains the default ceiling along alpha.

    The default bracket top is the sum of single-user rates, reachable only
    with every user simultaneously at its own cap: each beamformer is then
    pinned to full-power MRT, the profile must match the caps exactly, and
    those beams must cause no interference anywhere.  All of that is
    checkable in closed form, which spares the search its costliest probe.
    """
    caps = _single_user_rates(s)
    if not np.allclose(alpha * caps.sum(), caps, rtol=0.0, atol=1e-9):
        return None
    w = np.zeros_like(s.channels[:, 0, :])
    for j in range(s.num_cells):
        h = s.channels[j, j]
        n = np.linalg.norm(h)
        if n > 0:
            w[j] = np.sqrt(s.powers[j]) * h / n
    beams = BeamformerSet(w)
    if np.all(compute_rates(s, beams) >= caps - 1e-9):
        return beams
    return None


def _runner(algorithm):
    return run_apb if algorithm == "apb" else run_cpb


def bisect_rsum(
    s: Scenario,
    alpha,
    cfg: BisectionConfig | None = None,
    th: DecisionThresholds | None = None,
    pcfg: ProjectionConfig | None = None,
    feasibility=None,
) -> ParetoPoint:
    """Largest sum rate feasible along the ray ``alpha``, to within cfg.tol.

    With ``algorithm="oracle"`` the ``feasibility(r0) -> bool`` callable is
    the ground truth and no beamformers are produced.  Otherwise each probe
    builds the SINR floors for r0, runs the chosen projection method, and
    warm starts from the last feasible iterate; the returned beamformers
    are that iterate's, never a re-solve at the midpoint.

    A probe only counts as feasible if its polished beamformers actually
    reproduce the ray's rates: the settle rule cannot tell a vanishing gap
    from a small positive one, so near the boundary it errs optimistic, and
    an unchecked bisection would ride that bias upward.
    """
    cfg = cfg or BisectionConfig()
    profile = alpha if isinstance(alpha, RateProfile) else RateProfile(np.asarray(alpha, float))

    best_x = None
    best_w = None

    if cfg.algorithm == "oracle":
        if feasibility is None:
            raise ValueError("algorithm='oracle' needs a feasibility callable")
        probe = lambda r0: bool(feasibility(r0))
    else:
        runner = _runner(cfg.algorithm)
        probe_cfg = _PROBE_CFG if pcfg is None else pcfg
        tight_cfg = _TIGHT_CFG if pcfg is None else pcfg

        def delivers(res, r0):
            if res.verdict is not Verdict.FEASIBLE:
                return False
            achieved = compute_rates(s, res.beamformers)
            return bool(np.all(achieved >= profile.alpha * r0 - _RATE_SLACK))

        def probe(r0):
            nonlocal best_x, best_w
            betas = make_betas(profile.alpha, r0)
            inst = build_lifted(s, FeasibilityTarget(betas))
            res = runner(inst, start=best_x, th=th, cfg=probe_cfg)
            if res.verdict is Verdict.TIMEOUT:
                raise RuntimeError(
                    f"feasibility undecided at r0={r0:.6f} "
                    f"({cfg.algorithm} hit max_rounds); raise max_rounds"
                )
            ok = delivers(res, r0)
            if not ok and res.rounds > 0 and hi - lo > 16.0 * cfg.tol:
                # near the boundary the settle rule can misread a slow
                # transient as a gap (or a small gap as progress), and a
                # wrong rejection here pins the bracket below the truth; a
                # rerun with a stricter settle threshold resolves the band.
                # once the bracket is endgame-narrow a wrong call costs at
                # most that width, so the rerun is no longer worth rounds.
                # structural rejections (rounds == 0) need no second look.
                base = th or DecisionThresholds()
                tight = DecisionThresholds(
                    eps=base.eps / 10.0, xi=base.xi, max_rounds=base.max_rounds
                )
                res = runner(inst, start=best_x, th=tight, cfg=tight_cfg)
                if res.verdict is Verdict.TIMEOUT:
                    raise RuntimeError(
                        f"feasibility undecided at r0={r0:.6f} "
                        f"({cfg.algorithm} hit max_rounds); raise max_rounds"
                    )
                ok = delivers(res, r0)
            if ok:
                best_x, best_w = res.x_final, res.beamformers
            return ok

    lo = cfg.lo
    hi = single_user_rate_sum(s) if cfg.hi is None else cfg.hi
    if lo > 0 and not probe(lo):
        raise ValueError(f"bracket invalid: lo={lo} is not feasible")
    if cfg.hi is None and cfg.algorithm != "oracle":
        # the default ceiling is attainable only when interference costs
        # nothing; that case is closed-form, so no projection run at the
        # bracket top (where the floors are at their most extreme)
        mrt = _ceiling_deliverer(s, profile.alpha)
        if mrt is not None:
            best_w = mrt
            lo = hi
    elif probe(hi):
        if cfg.hi is not None:
            raise ValueError(
                f"bracket invalid: hi={hi} is still feasible; raise hi"
            )
        lo = hi
    while hi - lo >= cfg.tol:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid

    if cfg.algorithm == "oracle":
        return ParetoPoint(profile, lo, profile.alpha * lo, None)
    if best_w is None:
        best_w = BeamformerSet(np.zeros_like(s.channels[:, 0, :]))
    return ParetoPoint(profile, lo, compute_rates(s, best_w), best_w)


def sweep_boundary(
    s: Scenario,
    alphas,
    cfg: BisectionConfig | None = None,
    th: DecisionThresholds | None = None,
    pcfg: ProjectionConfig | None = None,
) -> list[ParetoPoint]:
    """One bisection per profile; points another point beats are flagged.

    A flagged point signals numerical slack (its probe stopped short), not
    an error: an exact boundary has no dominated points.
    """
    points = [bisect_rsum(s, a, cfg, th, pcfg) for a in alphas]
    out = []
    for i, p in enumerate(points):
        dom = any(
            j != i and is_pareto_dominated(p.rates, q.rates)
            for j, q in enumerate(points)
        )
        out.append(replace(p, dominated=dom) if dom else p)
    return out


def simplex_grid(num_users: int, points_per_edge: int) -> list[np.ndarray]:
    """Evenly spaced rate profiles: all compositions of 1 at that resolution.

    For two users and n points this is the usual (t, 1-t) sweep; higher
    user counts get the triangular/simplex generalization.
    """
    if num_users < 1:
        raise ValueError("num_users must be positive")
    if num_users == 1:
        return [np.ones(1)]
    if points_per_edge < 2:
        raise ValueError("need at least two points per edge")
    n = points_per_edge - 1
    grid = []
    for cuts in itertools.combinations_with_replacement(range(n + 1), num_users - 1):
        parts = np.diff((0, *cuts, n))
        grid.append(parts / n)
    return grid
