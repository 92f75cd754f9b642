"""Right-hand sides of the two-time closures and the time stepper.

All row-level functions work on dense snapshots:

* ``Qs[k, t, s]`` -- symmetric correlation table,
* ``H[k, t, s]`` / ``G[k, t, s]`` -- response tables, meaningful for
  ``t >= s`` and zero above the diagonal,
* ``K[k, p, s]`` -- the angular kernel of row ``a`` (see
  :meth:`~closurelab.kernel.ConvolutionPlan.angular_kernel`), i.e. the
  ``L``-weighted angular sum of ``Q(|k - p|; t_a, t_s)`` with the radial
  weight of ``p`` folded in.

A row function returns the right-hand side for every ``k`` at once.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .history import (CORRELATION, RESPONSE, NumericalBlowup, TimeGrid, TwoTimeField,
                      trapezoid_matrix, trapezoid_weights)
from .kernel import WavenumberGrid

log = logging.getLogger(__name__)

TINY = np.finfo(float).tiny


class ClosureKind(str, Enum):
    DIA = "DIA"
    LET = "LET"
    VLET = "VLET"
    RGET = "RGET"


@dataclass
class EventLog:
    counts: dict = field(default_factory=lambda: {"regularized_division": 0,
                                                  "negative_spectrum": 0})
    samples: list = field(default_factory=list)
    max_samples: int = 20

    def record(self, kind: str, n: int = 1, where=None) -> None:
        self.counts[kind] = self.counts.get(kind, 0) + int(n)
        if where is not None and len(self.samples) < self.max_samples:
            self.samples.append((kind, where))
            log.debug("%s event at %s", kind, where)


def safeguard_divide(numerator, denominator, scale, eps_floor, events=None, where=None):
    """``numerator / denominator`` with ``|denominator|`` floored at ``eps_floor*scale``.

    A floored denominator keeps its sign (zero counts as positive) and
    each floored element is recorded on ``events``.
    """
    num = np.asarray(numerator, dtype=float)
    den = np.asarray(denominator, dtype=float)
    floor = eps_floor * np.asarray(scale, dtype=float)
    small = np.abs(den) < floor
    if small.any():
        den = np.where(small, np.where(den < 0, -floor, floor), den)
        if events is not None:
            first = tuple(int(i) for i in np.argwhere(small)[0]) if small.ndim else ()
            events.record("regularized_division", int(small.sum()),
                          None if where is None else (where, first))
    out = num / den
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# propagators derived from Q


def let_table(Qs, eps_floor, events=None):
    """``H(k; t, s) = Q(k; t, s) / Q(k; s, s)`` on the lower triangle."""
    R = Qs.shape[1]
    idx = np.arange(R)
    Qd = Qs[:, idx, idx]
    scale = np.maximum(Qd.max(axis=0), TINY)[None, None, :]
    den = np.broadcast_to(Qd[:, None, :], Qs.shape)
    H = safeguard_divide(Qs, den, scale, eps_floor, events, "let")
    return np.tril(H)


def vlet_table(Qs, eps_floor, events=None):
    """``H(k; t, s) = Q(k; t, t) / Q(k; t, s)`` on the lower triangle."""
    R = Qs.shape[1]
    idx = np.arange(R)
    Qd = Qs[:, idx, idx]
    scale = np.maximum(Qd.max(axis=0), TINY)[None, :, None]
    lower = np.tril(np.ones((R, R), dtype=bool))
    den = np.where(lower, Qs, 1.0)
    num = np.broadcast_to(Qd[:, :, None], Qs.shape)
    H = safeguard_divide(num, den, np.where(lower, scale, 0.0), eps_floor, events, "vlet")
    return np.where(lower, H, 0.0)


# ---------------------------------------------------------------------------
# row-level right-hand sides


def transfer_row(K, Qs, H, a, cols, dt):
    """Inertial transfer ``P(k; t_a, t_b)`` for every k and each ``b`` in ``cols``.

    ``K`` must cover history indices ``s <= max(a, max(cols))``.
    """
    cols = np.atleast_1d(np.asarray(cols, dtype=int))
    S = K.shape[2]
    Qa = Qs[:, a, :S]
    B1 = np.einsum("kps,ps->ks", K, Qa)
    B2 = np.einsum("kps,ps->ks", K[:, :, :a + 1], H[:, a, :a + 1])
    W1 = trapezoid_matrix(0, cols, S, dt)
    gain = np.einsum("cs,kcs,ks->kc", W1, H[:, cols, :S], B1)
    wa = trapezoid_weights(0, a, a + 1, dt)
    loss = np.einsum("s,kcs,ks->kc", wa, Qs[:, cols, :a + 1], B2)
    return gain - loss


def dia_response_row(K, H, a, dt):
    """Memory term of the DIA response equation for ``H(k; t_a, t_n)``, ``n <= a``."""
    S = a + 1
    D = np.einsum("kps,ps->ks", K[:, :, :S], H[:, a, :S])
    Wn = trapezoid_matrix(np.arange(S), a, S, dt)
    return -np.einsum("ns,ksn,ks->kn", Wn, H[:, :S, :S], D)


def rget_two_time_row(K, Qs, a, cols, dt, eps_floor, events=None):
    """RGET right-hand side for ``Q(k; t_a, t_n)``, ``n`` in ``cols`` (all ``<= a``)."""
    cols = np.atleast_1d(np.asarray(cols, dtype=int))
    S = a + 1
    K = K[:, :, :S]
    idx = np.arange(Qs.shape[1])
    Qd = Qs[:, idx, idx]
    Qa = Qs[:, a, :S]

    # propagator H(p; t, s) = Q(p; t, t') / Q(p; s, t') under the int_0^t integral
    den = Qs[:, :S, :][:, :, cols]
    scale = np.maximum(np.sqrt(np.abs(Qd[:, :S, None] * Qd[:, None, cols])), TINY)
    X = safeguard_divide(np.broadcast_to(Qa[:, None, cols], den.shape), den, scale,
                         eps_floor, events, ("rget_two_time", a))
    C = np.matmul(K.transpose(2, 0, 1), X.transpose(1, 0, 2))   # (s, k, c)
    wa = trapezoid_weights(0, a, S, dt)
    first = -np.einsum("s,kcs,skc->kc", wa, Qs[:, cols, :S], C)

    # propagator H(k; t', s) = Q(k; t, t') / Q(k; t, s) under the int_0^t' integral
    B1 = np.einsum("kps,ps->ks", K, Qa)
    scale_k = np.maximum(np.sqrt(np.abs(Qd[:, a, None] * Qd[:, :S])), TINY)
    ratio = safeguard_divide(B1, Qa, scale_k, eps_floor, events, ("rget_two_time", a))
    Wc = trapezoid_matrix(0, cols, S, dt)
    second = Qa[:, cols] * np.einsum("cs,ks->kc", Wc, ratio)
    return first + second


def rget_equal_time_row(K, Qs, a, dt, eps_floor, events=None):
    """RGET right-hand side of the equal-time equation at ``t_a``."""
    S = a + 1
    K = K[:, :, :S]
    idx = np.arange(Qs.shape[1])
    Qd = Qs[:, idx, idx]
    Qa = Qs[:, a, :S]
    scale = np.maximum(np.sqrt(np.abs(Qd[:, a, None] * Qd[:, :S])), TINY)
    wa = trapezoid_weights(0, a, S, dt)

    X = safeguard_divide(np.broadcast_to(Qd[:, a, None], Qa.shape), Qa, scale,
                         eps_floor, events, ("rget_equal_time", a))
    inner = np.einsum("kps,ps->ks", K, X)
    first = -2.0 * np.einsum("s,ks,ks->k", wa, Qa, inner)

    B1 = np.einsum("kps,ps->ks", K, Qa)
    ratio = safeguard_divide(B1, Qa, scale, eps_floor, events, ("rget_equal_time", a))
    second = 2.0 * Qd[:, a] * (ratio @ wa)
    return first + second


def rget_response_row(K, G, a, dt, eps_floor, events=None):
    """Memory term of the RGET response equation for ``G(k; t_a, t_n)``, ``n <= a``."""
    S = a + 1
    K = K[:, :, :S]
    Gv = G[:, :S, :S]
    valid = np.tril(np.ones((S, S), dtype=bool))          # (s, n) with s >= n
    den = np.where(valid, Gv, 1.0)
    num = np.broadcast_to(G[:, a, None, :S], den.shape)   # G(p; t_a, t_n)
    Y = safeguard_divide(num, den, np.where(valid, 1.0, 0.0), eps_floor, events,
                         ("rget_response", a))
    Y = np.where(valid, Y, 0.0)
    C = np.matmul(K.transpose(2, 0, 1), Y.transpose(1, 0, 2))   # (s, k, n)
    Wn = trapezoid_matrix(np.arange(S), a, S, dt)
    return -np.einsum("ns,ksn,skn->kn", Wn, Gv, C)


# ---------------------------------------------------------------------------
# state and stepping


@dataclass
class ClosureState:
    grid: WavenumberGrid
    times: TimeGrid
    kind: ClosureKind
    nu: float
    Q: TwoTimeField
    H: TwoTimeField | None = None
    G: TwoTimeField | None = None
    eps_floor: float = 1e-8
    nonlinear: bool = True
    diagonal_mode: str = "equal_time"
    events: EventLog = field(default_factory=EventLog)
    transfer_diag: dict = field(default_factory=dict)
    negative_flags: list = field(default_factory=list)

    @property
    def M(self) -> int:
        return self.Q.n_rows - 1

    @property
    def k2(self) -> np.ndarray:
        return self.grid.k_nodes ** 2


def init_state(grid: WavenumberGrid, times: TimeGrid, kind, nu: float, Q0,
               eps_floor: float = 1e-8, nonlinear: bool = True,
               track_response: bool = False, diagonal_mode: str = "equal_time") -> ClosureState:
    """State holding only the ``t = 0`` diagonal ``Q(k; 0, 0) = Q0``."""
    kind = ClosureKind(kind)
    if nu < 0:
        raise ValueError("nu must be non-negative")
    if diagonal_mode not in ("equal_time", "two_time"):
        raise ValueError(f"unknown diagonal_mode {diagonal_mode!r}")
    Q0 = np.asarray(Q0, dtype=float)
    if Q0.shape != (grid.n_k,):
        raise ValueError(f"initial spectrum needs shape ({grid.n_k},)")
    cap = times.n_steps + 1
    Q = TwoTimeField(CORRELATION, grid.n_k, cap)
    Q.append_row(Q0[:, None])
    state = ClosureState(grid, times, kind, float(nu), Q, eps_floor=eps_floor,
                         nonlinear=nonlinear, diagonal_mode=diagonal_mode)
    if kind is ClosureKind.DIA:
        state.H = TwoTimeField(RESPONSE, grid.n_k, cap)
        state.H.append_row(np.ones((grid.n_k, 1)))
    if kind is ClosureKind.RGET and track_response:
        state.G = TwoTimeField(RESPONSE, grid.n_k, cap)
        state.G.append_row(np.ones((grid.n_k, 1)))
    state.negative_flags.append(Q0 < 0)
    return state


def propagator_table(state: ClosureState, Qs, H=None):
    """The propagator the transfer term sees for this closure."""
    if state.kind is ClosureKind.DIA:
        return H
    if state.kind is ClosureKind.LET:
        return let_table(Qs, state.eps_floor, state.events)
    if state.kind is ClosureKind.VLET:
        return vlet_table(Qs, state.eps_floor, state.events)
    raise ValueError("RGET has no explicit propagator")


@dataclass
class RowRHS:
    two_time: np.ndarray          # (n_k, a + 1)
    equal_time: np.ndarray        # (n_k,)
    response: np.ndarray | None = None


def evaluate_row(state: ClosureState, Qs, H, G, a: int) -> RowRHS:
    """Nonlinear right-hand sides at row ``a`` from dense snapshots."""
    n_k = state.grid.n_k
    dt = state.times.dt
    if not state.nonlinear:
        z = np.zeros((n_k, a + 1))
        resp = z.copy() if (H is not None or G is not None) else None
        return RowRHS(z, np.zeros(n_k), resp)
    S = a + 1
    Qv = Qs[:, :S, :S]
    K = state.grid.plan.angular_kernel(Qv[:, a, :])
    cols = np.arange(S)
    if state.kind is ClosureKind.RGET:
        two = rget_two_time_row(K, Qv, a, cols, dt, state.eps_floor, state.events)
        eq = rget_equal_time_row(K, Qv, a, dt, state.eps_floor, state.events)
        resp = None
        if G is not None:
            resp = rget_response_row(K, G[:, :S, :S], a, dt, state.eps_floor, state.events)
        return RowRHS(two, eq, resp)
    Hv = propagator_table(state, Qv, None if H is None else H[:, :S, :S])
    two = transfer_row(K, Qv, Hv, a, cols, dt)
    resp = dia_response_row(K, Hv, a, dt) if state.kind is ClosureKind.DIA else None
    return RowRHS(two, 2.0 * two[:, a], resp)


def advance(state: ClosureState) -> ClosureState:
    """Extend every field from row ``M`` to ``M + 1``.

    Viscous terms go through an integrating factor; the nonlinear terms
    use an explicit predictor and a trapezoidal corrector.  Nothing is
    committed unless every new value is finite.
    """
    M = state.M
    if M >= state.times.n_steps:
        raise IndexError("time grid exhausted")
    dt = state.times.dt
    R = M + 2
    E1 = np.exp(-state.nu * state.k2 * dt)[:, None]
    E2 = np.exp(-2.0 * state.nu * state.k2 * dt)

    Qs = state.Q.dense(R)
    H = state.H.dense(R) if state.H is not None else None
    G = state.G.dense(R) if state.G is not None else None
    Qd_M = Qs[:, M, M].copy()

    f0 = evaluate_row(state, Qs, H, G, M)
    state.transfer_diag[M] = 0.5 * f0.equal_time

    # predictor
    Q_pred = E1 * (Qs[:, M, :M + 1] + dt * f0.two_time)
    Qs[:, M + 1, :M + 1] = Q_pred
    Qs[:, :M + 1, M + 1] = Q_pred
    Qs[:, M + 1, M + 1] = E2 * (Qd_M + dt * f0.equal_time)
    resp_field = H if H is not None else G
    if resp_field is not None:
        resp_field[:, M + 1, :M + 1] = E1 * (resp_field[:, M, :M + 1] + dt * f0.response)
        resp_field[:, M + 1, M + 1] = 1.0

    f1 = evaluate_row(state, Qs, H, G, M + 1)

    # corrector
    Q_row = np.empty((state.grid.n_k, M + 2))
    Q_row[:, :M + 1] = E1 * Qs[:, M, :M + 1] + 0.5 * dt * (E1 * f0.two_time + f1.two_time[:, :M + 1])
    if state.diagonal_mode == "two_time" and state.kind is not ClosureKind.RGET:
        P_mid = _transfer_between(state, Qs, H, M, M + 1)
        Q_row[:, M + 1] = (E1[:, 0] * Q_row[:, M]
                           + 0.5 * dt * (E1[:, 0] * P_mid + f1.two_time[:, M + 1]))
    else:
        Q_row[:, M + 1] = E2 * Qd_M + 0.5 * dt * (E2 * f0.equal_time + f1.equal_time)

    resp_row = None
    if resp_field is not None:
        resp_row = np.empty_like(Q_row)
        resp_row[:, :M + 1] = (E1 * resp_field[:, M, :M + 1]
                               + 0.5 * dt * (E1 * f0.response + f1.response[:, :M + 1]))
        resp_row[:, M + 1] = 1.0

    for name, row in (("Q", Q_row), ("H" if H is not None else "G", resp_row)):
        if row is not None and not np.all(np.isfinite(row)):
            k, n = np.argwhere(~np.isfinite(row))[0]
            raise NumericalBlowup(int(k), M + 1, int(n), name)

    state.Q.append_row(Q_row)
    if state.H is not None:
        state.H.append_row(resp_row)
    elif state.G is not None:
        state.G.append_row(resp_row)
    neg = Q_row[:, M + 1] < 0
    state.negative_flags.append(neg)
    if neg.any():
        state.events.record("negative_spectrum", int(neg.sum()), (M + 1, int(np.argmax(neg))))
    return state


def _transfer_between(state, Qs, H, a, b):
    """``P(k; t_a, t_b)`` for ``b > a`` on a (possibly provisional) snapshot."""
    S = b + 1
    K = state.grid.plan.angular_kernel(Qs[:, a, :S])
    Hv = propagator_table(state, Qs[:, :S, :S], None if H is None else H[:, :S, :S])
    return transfer_row(K, Qs[:, :S, :S], Hv, a, [b], state.times.dt)[:, 0]


def run_steps(state: ClosureState, n: int | None = None, callback=None) -> ClosureState:
    n = state.times.n_steps - state.M if n is None else n
    for _ in range(n):
        advance(state)
        if callback is not None:
            callback(state)
    return state


# ---------------------------------------------------------------------------
# point queries on committed state


def _snapshot(state: ClosureState, top: int):
    S = top + 1
    if top > state.M:
        raise IndexError(f"row {top} not committed")
    Qs = state.Q.dense()[:, :S, :S]
    H = state.H.dense()[:, :S, :S] if state.H is not None else None
    G = state.G.dense()[:, :S, :S] if state.G is not None else None
    return Qs, H, G


def transfer_two_time(state: ClosureState, k_index: int, m: int, n: int) -> float:
    """``P(k; t_m, t_n)`` for DIA, LET or VLET (``m >= n``)."""
    if state.kind is ClosureKind.RGET:
        raise ValueError("transfer_two_time is defined for DIA, LET and VLET")
    if m < n:
        raise ValueError("need m >= n")
    Qs, H, _ = _snapshot(state, m)
    K = state.grid.plan.angular_kernel(Qs[:, m, :])
    Hv = propagator_table(state, Qs, H)
    return float(transfer_row(K, Qs, Hv, m, [n], state.times.dt)[k_index, 0])


def let_propagator(state: ClosureState, k_index: int, m: int, n: int) -> float:
    if m < n:
        raise ValueError("need m >= n")
    if m == n:
        return 1.0
    Qd = state.Q.diagonal()
    scale = max(Qd[:, n].max(), TINY)
    return safeguard_divide(state.Q.query(k_index, m, n), Qd[k_index, n], scale,
                            state.eps_floor, state.events, ("let", k_index, m, n))


def vlet_propagator(state: ClosureState, k_index: int, m: int, n: int) -> float:
    if m < n:
        raise ValueError("need m >= n")
    if m == n:
        return 1.0
    Qd = state.Q.diagonal()
    scale = max(Qd[:, m].max(), TINY)
    return safeguard_divide(Qd[k_index, m], state.Q.query(k_index, m, n), scale,
                            state.eps_floor, state.events, ("vlet", k_index, m, n))


def dia_response_rhs(state: ClosureState, k_index: int, m: int, n: int) -> float:
    if state.kind is not ClosureKind.DIA:
        raise ValueError("DIA closure required")
    if m < n:
        raise ValueError("need m >= n")
    Qs, H, _ = _snapshot(state, m)
    K = state.grid.plan.angular_kernel(Qs[:, m, :])
    return float(dia_response_row(K, H, m, state.times.dt)[k_index, n])


def rget_rhs_two_time(state: ClosureState, k_index: int, m: int, n: int) -> float:
    if m < n:
        raise ValueError("need m >= n")
    Qs, _, _ = _snapshot(state, m)
    K = state.grid.plan.angular_kernel(Qs[:, m, :])
    return float(rget_two_time_row(K, Qs, m, [n], state.times.dt, state.eps_floor,
                                   state.events)[k_index, 0])


def rget_rhs_equal_time(state: ClosureState, k_index: int, m: int) -> float:
    Qs, _, _ = _snapshot(state, m)
    K = state.grid.plan.angular_kernel(Qs[:, m, :])
    return float(rget_equal_time_row(K, Qs, m, state.times.dt, state.eps_floor,
                                     state.events)[k_index])


def rget_response_rhs(state: ClosureState, k_index: int, m: int, n: int) -> float:
    if state.G is None:
        raise ValueError("response tracking is not enabled")
    if m < n:
        raise ValueError("need m >= n")
    Qs, _, G = _snapshot(state, m)
    K = state.grid.plan.angular_kernel(Qs[:, m, :])
    return float(rget_response_row(K, G, m, state.times.dt, state.eps_floor,
                                   state.events)[k_index, n])


# ---------------------------------------------------------------------------
# initial spectra


def peaked_spectrum(k, amplitude: float = 1.0, k_peak: float = 1.0):
    """``Q(k; 0, 0) = A k^4 exp(-2 k^2 / k_p^2)``."""
    k = np.asarray(k, dtype=float)
    return amplitude * k ** 4 * np.exp(-2.0 * k ** 2 / k_peak ** 2)


def power_exp_spectrum(k, c: float = 1.0, exponent: float = 2.0, cutoff: float = 1.0):
    """``Q(k; 0, 0) = c k^a exp(-k / k_c)``."""
    k = np.asarray(k, dtype=float)
    return c * k ** exponent * np.exp(-k / cutoff)
