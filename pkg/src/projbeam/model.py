"""Multicell MISO interference-channel model.

M base stations with K transmit antennas each, one single-antenna user per
cell.  ``channels[j, i]`` holds h_ji, the channel from BS j to the user of
cell i, so the direct channels sit on the diagonal and everything off the
diagonal is interference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Scenario",
    "BeamformerSet",
    "compute_sinr",
    "compute_rates",
    "check_power",
    "is_pareto_dominated",
    "random_scenario",
    "scenario_to_dict",
    "scenario_from_dict",
    "save_scenario",
    "load_scenario",
]


@dataclass(frozen=True)
class Scenario:
    """Immutable problem data: channels, power budgets, noise variances.

    Attributes
    ----------
    channels : complex ndarray, shape (M, M, K)
        ``channels[j, i]`` is h_ji (BS j -> user i).
    powers : float ndarray, shape (M,)
        Per-BS transmit power budgets P_j (positive).
    noise_vars : float ndarray, shape (M,)
        Per-user noise variances sigma_i^2 (positive).
    """

    channels: np.ndarray
    powers: np.ndarray
    noise_vars: np.ndarray

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=complex)
        pw = np.asarray(self.powers, dtype=float)
        nv = np.asarray(self.noise_vars, dtype=float)
        if ch.ndim != 3 or ch.shape[0] != ch.shape[1]:
            raise ValueError(f"channels must have shape (M, M, K), got {ch.shape}")
        m = ch.shape[0]
        if ch.shape[2] < 1 or m < 1:
            raise ValueError(f"need M >= 1 and K >= 1, got shape {ch.shape}")
        if pw.shape != (m,) or nv.shape != (m,):
            raise ValueError(
                f"powers/noise_vars must have shape ({m},), got {pw.shape} and {nv.shape}"
            )
        if np.any(pw <= 0):
            raise ValueError("powers must be positive")
        if np.any(nv <= 0):
            raise ValueError("noise variances must be positive")
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "powers", pw)
        object.__setattr__(self, "noise_vars", nv)

    @property
    def num_cells(self) -> int:
        return self.channels.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.channels.shape[2]


@dataclass(frozen=True)
class BeamformerSet:
    """One beamforming vector per cell, stacked as an (M, K) complex array."""

    omegas: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omegas, dtype=complex)
        if w.ndim != 2:
            raise ValueError(f"omegas must have shape (M, K), got {w.shape}")
        object.__setattr__(self, "omegas", w)

    @property
    def num_cells(self) -> int:
        return self.omegas.shape[0]


def _check_compatible(s: Scenario, w: BeamformerSet):
    if w.omegas.shape != (s.num_cells, s.num_antennas):
        raise ValueError(
            f"beamformers {w.omegas.shape} do not match scenario "
            f"({s.num_cells}, {s.num_antennas})"
        )


def compute_sinr(s: Scenario, w: BeamformerSet, i: int) -> float:
    """SINR of user i: |h_ii^H w_i|^2 / (sum_{j != i} |h_ji^H w_j|^2 + sigma_i^2)."""
    _check_compatible(s, w)
    if not 0 <= i < s.num_cells:
        raise ValueError(f"cell index {i} out of range for M={s.num_cells}")
    signal = np.abs(np.vdot(s.channels[i, i], w.omegas[i])) ** 2
    interference = sum(
        np.abs(np.vdot(s.channels[j, i], w.omegas[j])) ** 2
        for j in range(s.num_cells)
        if j != i
    )
    return float(signal / (interference + s.noise_vars[i]))


def compute_rates(s: Scenario, w: BeamformerSet, log_base: str = "two") -> np.ndarray:
    """Per-user rates log(1 + SINR_i), in bits by default ("e" for nats)."""
    sinrs = np.array([compute_sinr(s, w, i) for i in range(s.num_cells)])
    if log_base == "two":
        return np.log2(1.0 + sinrs)
    if log_base == "e":
        return np.log(1.0 + sinrs)
    raise ValueError(f"log_base must be 'two' or 'e', got {log_base!r}")


def check_power(s: Scenario, w: BeamformerSet, tol: float = 0.0) -> np.ndarray:
    """Boolean array: does each cell respect ||w_j||^2 <= P_j (1 + tol)?"""
    _check_compatible(s, w)
    used = np.sum(np.abs(w.omegas) ** 2, axis=1)
    return used <= s.powers * (1.0 + tol)


def is_pareto_dominated(rates_a: np.ndarray, rates_b: np.ndarray) -> bool:
    """True iff ``rates_b`` weakly dominates ``rates_a`` and differs somewhere."""
    a = np.asarray(rates_a, dtype=float)
    b = np.asarray(rates_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("rate tuples must have equal shape")
    return bool(np.all(b >= a) and np.any(b > a))


def random_scenario(
    m: int,
    k: int,
    powers=None,
    noise_vars=None,
    rng: np.random.Generator | None = None,
) -> Scenario:
    """Draw i.i.d. circularly-symmetric complex Gaussian CN(0, 1) channels."""
    if rng is None:
        rng = np.random.default_rng()
    ch = (rng.standard_normal((m, m, k)) + 1j * rng.standard_normal((m, m, k))) / np.sqrt(2.0)
    if powers is None:
        powers = np.ones(m)
    if noise_vars is None:
        noise_vars = np.ones(m)
    return Scenario(ch, np.asarray(powers, float), np.asarray(noise_vars, float))


# --- scenario (de)serialization -------------------------------------------
#
# JSON schema: {"M", "K", "channels" (M x M x K x 2 nested lists, [re, im]),
# "powers", "noise_vars"}.  Floats round-trip exactly through json.


def scenario_to_dict(s: Scenario) -> dict:
    ch = np.stack([s.channels.real, s.channels.imag], axis=-1)
    return {
        "M": s.num_cells,
        "K": s.num_antennas,
        "channels": ch.tolist(),
        "powers": s.powers.tolist(),
        "noise_vars": s.noise_vars.tolist(),
    }


def scenario_from_dict(d: dict) -> Scenario:
    try:
        m, k = int(d["M"]), int(d["K"])
        ch = np.asarray(d["channels"], dtype=float)
        powers = np.asarray(d["powers"], dtype=float)
        noise = np.asarray(d["noise_vars"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed scenario dict: {exc}") from exc
    if ch.shape != (m, m, k, 2):
        raise ValueError(
            f"channels must have shape ({m}, {m}, {k}, 2), got {ch.shape}"
        )
    return Scenario(ch[..., 0] + 1j * ch[..., 1], powers, noise)


def save_scenario(s: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(s), fh, indent=1)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))
