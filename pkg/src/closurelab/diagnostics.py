"""Observables computed from closure states.

Energy spectrum convention: ``E(k) = 4 pi k^2 Q(k; t, t)``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .closures import ClosureState, EventLog, evaluate_row


@dataclass(frozen=True)
class SpectrumSnapshot:
    t: float
    k: np.ndarray
    E_of_k: np.ndarray
    Q_diag: np.ndarray
    total_energy: float
    dissipation_rate: float
    transfer_sum_residual: float
    negative_spectrum_flags: np.ndarray


@dataclass(frozen=True)
class SweepingParams:
    v0_sq: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.v0_sq) and self.v0_sq >= 0):
            raise ValueError(f"v0_sq must be >= 0, got {self.v0_sq}")


def energy_spectrum(k, Q_diag):
    k = np.asarray(k, dtype=float)
    return 4.0 * np.pi * k * k * np.asarray(Q_diag, dtype=float)


def spectrum(state: ClosureState, m: int) -> SpectrumSnapshot:
    if not 0 <= m <= state.M:
        raise IndexError(f"row {m} not committed")
    g = state.grid
    Qd = state.Q.diagonal()[:, m]
    E = energy_spectrum(g.k_nodes, Qd)
    return SpectrumSnapshot(
        t=float(state.times.t(m)),
        k=g.k_nodes.copy(),
        E_of_k=E,
        Q_diag=Qd,
        total_energy=float(np.sum(E * g.k_weights)),
        dissipation_rate=float(2.0 * state.nu * np.sum(g.k_nodes ** 2 * E * g.k_weights)),
        transfer_sum_residual=transfer_conservation(state, m),
        negative_spectrum_flags=Qd < 0,
    )


def equal_time_transfer(state: ClosureState, m: int) -> np.ndarray:
    """``P(k; t_m, t_m)`` for every k.

    Uses the value the stepper cached while leaving row ``m`` when there is
    one; otherwise evaluates it on a copy of the state whose event log is
    discarded, so the caller's state is never touched.
    """
    if not 0 <= m <= state.M:
        raise IndexError(f"row {m} not committed")
    if m in state.transfer_diag:
        return state.transfer_diag[m].copy()
    if not state.nonlinear:
        return np.zeros(state.grid.n_k)
    scratch = dataclasses.replace(state, events=EventLog())
    S = m + 1
    Qs = state.Q.dense()[:, :S, :S]
    H = state.H.dense()[:, :S, :S] if state.H is not None else None
    G = state.G.dense()[:, :S, :S] if state.G is not None else None
    return 0.5 * evaluate_row(scratch, Qs, H, G, m).equal_time


def conservation_residual(grid, P) -> float:
    """``|sum 4 pi k^2 P w| / sum 4 pi k^2 |P| w``; zero when ``P`` vanishes."""
    terms = 4.0 * np.pi * grid.k_nodes ** 2 * np.asarray(P) * grid.k_weights
    denom = np.sum(np.abs(terms))
    if denom == 0.0:
        return 0.0
    return float(abs(np.sum(terms)) / denom)


def transfer_conservation(state: ClosureState, m: int) -> float:
    return conservation_residual(state.grid, equal_time_transfer(state, m))


def sweeping_factor(params: SweepingParams, k, tau):
    """Random-sweeping decorrelation ``exp(-k^2 v0^2 tau^2 / 2)``."""
    k = np.asarray(k, dtype=float)
    tau = np.asarray(tau, dtype=float)
    return np.exp(-0.5 * k * k * params.v0_sq * tau * tau)


def decorrelation_curve(state: ClosureState, k_index: int, m: int | None = None) -> np.ndarray:
    """``Q(k; t_m, t_n) / Q(k; t_n, t_n)`` for ``n = 0..m`` (default: latest row).

    Division is plain; a zero equal-time value yields ``inf`` or ``nan``.
    """
    m = state.M if m is None else m
    row = np.array(state.Q.row(m)[k_index])
    diag = state.Q.diagonal()[k_index, :m + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        return row / diag


def viscous_decorrelation(nu: float, k: float, tau):
    return np.exp(-nu * k * k * np.asarray(tau, dtype=float))


def total_energy_series(state: ClosureState) -> np.ndarray:
    g = state.grid
    return (energy_spectrum(g.k_nodes[:, None], state.Q.diagonal()) * g.k_weights[:, None]).sum(0)

