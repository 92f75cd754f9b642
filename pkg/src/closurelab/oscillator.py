"""Random-oscillator testbed: ``(d/dt + nu + i b) q = 0`` with Gaussian ``b``.

Provides the closed-form ensemble statistics, the constraint-substituted
closure (whose reduced equations are linear ODEs), the self-consistent
DIA closure, and a Monte-Carlo ensemble estimate.

Two-time arrays are dense ``(N+1, N+1)`` tables indexed ``[m, n]`` for
``(t_m, t_n)``; correlations are stored symmetric, responses lower
triangular with a unit diagonal.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .history import NumericalBlowup, TimeGrid


@dataclass(frozen=True)
class OscillatorParams:
    nu: float
    b_var: float
    q0_sq: float = 1.0

    def __post_init__(self):
        for name in ("nu", "b_var", "q0_sq"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.nu < 0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if self.b_var < 0:
            raise ValueError(f"b_var must be >= 0, got {self.b_var}")
        if self.q0_sq <= 0:
            raise ValueError(f"q0_sq must be > 0, got {self.q0_sq}")


@dataclass
class OscillatorState:
    times: TimeGrid
    Q: np.ndarray
    Qd: np.ndarray
    G: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return self.times.times


def exact_two_time(params: OscillatorParams, t, tp):
    s = np.asarray(t, dtype=float) + np.asarray(tp, dtype=float)
    return params.q0_sq * np.exp(-params.nu * s - 0.5 * params.b_var * s * s)


def exact_equal_time(params: OscillatorParams, t):
    t = np.asarray(t, dtype=float)
    return params.q0_sq * np.exp(-2.0 * params.nu * t - 2.0 * params.b_var * t * t)


def exact_response(params: OscillatorParams, t, tp):
    tau = np.asarray(t, dtype=float) - np.asarray(tp, dtype=float)
    return np.exp(-params.nu * tau - 0.5 * params.b_var * tau * tau)


def exact_state(params: OscillatorParams, times: TimeGrid) -> OscillatorState:
    t = times.times
    T, Tp = np.meshgrid(t, t, indexing="ij")
    G = np.where(T >= Tp, exact_response(params, T, Tp), 0.0)
    return OscillatorState(times, exact_two_time(params, T, Tp), exact_equal_time(params, t), G)


def _rk4_factor(damping, slope, t, h):
    """One-step amplification for ``y' = -(damping + slope t) y``.

    The constant part goes through the exact factor ``exp(-damping h)``;
    classical RK4 integrates the remaining ``z' = -slope t z``.
    """
    l1 = -slope * t
    l2 = -slope * (t + 0.5 * h)
    l3 = -slope * (t + h)
    k1 = l1
    k2 = l2 * (1 + 0.5 * h * k1)
    k3 = l2 * (1 + 0.5 * h * k2)
    k4 = l3 * (1 + h * k3)
    return np.exp(-damping * h) * (1 + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


def rget_solve(params: OscillatorParams, times: TimeGrid) -> OscillatorState:
    """Integrate the constraint-reduced closure with integrating-factor RK4.

    The reduced equations are linear, so one RK4 step multiplies the
    solution by an amplification factor.  For the two-time correlation the
    factor of the step leaving ``t_j`` in column ``t_n`` depends only on
    ``j + n``, and for the response only on ``j - n``; each table is
    therefore a gather from a 1D running product.  Column ``n`` starts on
    the diagonal (``Qd[n]`` for the correlation, 1 for the response).
    """
    nu, bv, h = params.nu, params.b_var, times.dt
    N = times.n_steps
    fd = _rk4_factor(2 * nu, 4 * bv, times.t(np.arange(N)), h)
    fq = _rk4_factor(nu, bv, times.t(np.arange(2 * N)), h)
    fg = _rk4_factor(nu, bv, times.t(np.arange(N)), h)
    if min(fd.min(), fq.min(), fg.min()) <= 0:
        raise NumericalBlowup(0, 0, 0, "oscillator step factor")
    Qd = params.q0_sq * np.concatenate(([1.0], np.cumprod(fd)))
    logq = np.concatenate(([0.0], np.cumsum(np.log(fq))))
    g = np.concatenate(([1.0], np.cumprod(fg)))

    # hankel[m, n] = logq[m + n]; toeplitz[m, n] = g[m - n], zero above the diagonal
    hankel = sliding_window_view(logq, N + 1)
    Q = np.tril(Qd * np.exp(hankel - logq[::2]))
    Q = Q + np.tril(Q, -1).T
    G = sliding_window_view(np.concatenate((np.zeros(N), g)), N + 1)[:, ::-1].copy()
    if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(Qd))):
        raise NumericalBlowup(0, N, 0, "oscillator")
    return OscillatorState(times, Q, Qd, G)


def unreduced_rhs(state: OscillatorState, params: OscillatorParams, stride: int = 1):
    """Memory-integral right-hand sides with constraint-derived propagators.

    Each propagator is formed as the ratio of solver-table values that the
    corresponding constraint prescribes, and the history integral is done
    with the trapezoid rule.  Returns ``(two_time, equal_time, response)``
    arrays over the strided node subset, next to the reduced forms
    ``-b_var (t + t') Q``, ``-4 b_var t Qd`` and ``-b_var (t - t') G``.
    """
    Q, Qd, G = state.Q, state.Qd, state.G
    dt, bv = state.times.dt, params.b_var
    idx = np.arange(0, Q.shape[0], stride)
    t = state.t

    def trap(v):
        return dt * (v.sum() - 0.5 * (v[0] + v[-1])) if v.size > 1 else 0.0

    two = np.zeros((idx.size, idx.size))
    two_ref = np.zeros_like(two)
    resp = np.zeros_like(two)
    resp_ref = np.zeros_like(two)
    eq = np.zeros(idx.size)
    for a, m in enumerate(idx):
        s = np.arange(m + 1)
        eq[a] = -4 * bv * trap(Qd[m] / Q[m, s] * Q[m, s])
        for b, n in enumerate(idx[:a + 1]):
            sm, sn = np.arange(m + 1), np.arange(n + 1)
            first = trap(Q[m, n] / Q[n, sm] * Q[n, sm])
            second = trap(Q[m, n] / Q[m, sn] * Q[m, sn])
            two[a, b] = -bv * (first + second)
            two_ref[a, b] = -bv * (t[m] + t[n]) * Q[m, n]
            sr = np.arange(n, m + 1)
            resp[a, b] = -bv * trap(G[m, n] / G[sr, n] * G[sr, n])
            resp_ref[a, b] = -bv * (t[m] - t[n]) * G[m, n]
    return {
        "two_time": (two, two_ref),
        "equal_time": (eq, -4 * bv * t[idx] * Qd[idx]),
        "response": (resp, resp_ref),
    }


def _prefix_extremes(r):
    """Running max and min of each row of ``r`` along its second axis."""
    return np.maximum.accumulate(r, axis=1), np.minimum.accumulate(r, axis=1)


def constraint_residuals(state: OscillatorState, params: OscillatorParams) -> dict:
    """Largest relative violation of each propagator constraint over all node triples.

    The propagator in each relation is the closed-form ratio, and the
    relation is tested on the solver tables, e.g.
    ``H(t, s) Q(t', s) = Q(t, t')`` for every ``s <= min(t, t')``.  With
    ``r = Q_solver / Q_exact`` the residual of a triple is
    ``r(t', s) / r(t, t') - 1``, so running extremes of ``r`` along ``s``
    give the exact maximum over all triples without enumerating them.
    """
    ex = exact_state(params, state.times)
    r = state.Q / ex.Q
    rd = state.Qd / ex.Qd
    N = r.shape[0]
    hi, lo = _prefix_extremes(r)
    lower = np.tril(np.ones((N, N), dtype=bool))
    # H(t,s) Q(t',s) = Q(t,t'), s <= t' <= t: r(t', s) over s <= t'
    first = np.maximum(np.abs(np.diag(hi)[None, :] / r - 1), np.abs(np.diag(lo)[None, :] / r - 1))
    # H(t',s) Q(t,s) = Q(t,t'), s <= t' <= t: r(t, s) over s <= t'
    second = np.maximum(np.abs(hi / r - 1), np.abs(lo / r - 1))
    # Q(t,t) = H(t,s) Q(t,s), s <= t
    equal = np.maximum(np.abs(np.diag(hi) / rd - 1), np.abs(np.diag(lo) / rd - 1))
    # G(t,t') = H(t,s) G(s,t'), t' <= s <= t: rG(s, t') over s in [t', t]
    with np.errstate(invalid="ignore", divide="ignore"):
        rg = np.where(lower, state.G / np.where(lower, ex.G, 1.0), np.nan)
    ghi = np.fmax.accumulate(rg, axis=0)
    glo = np.fmin.accumulate(rg, axis=0)
    # response columns start on the diagonal where rg = 1 exactly, so the
    # running extremes from row 0 cover s in [t', t]
    resp = np.maximum(np.abs(ghi / rg - 1), np.abs(glo / rg - 1))
    return {
        "two_time_first": float(first[lower].max()),
        "two_time_second": float(second[lower].max()),
        "equal_time": float(equal.max()),
        "response": float(np.nanmax(resp[lower])),
    }


def dia_response(params: OscillatorParams, times: TimeGrid) -> np.ndarray:
    """Stationary DIA mean response ``g(tau)`` on the grid ``tau = t_m``.

    Solves ``g' = -nu g - b_var int_0^tau g(tau - s) g(s) ds``.  Writing
    ``g = exp(-nu tau) u`` removes ``nu`` from the memory term, so ``u``
    solves the undamped problem; it is stepped with the trapezoid rule in
    both the ODE and the memory integral.  The unknown enters linearly at
    each step so the scheme is implicit without iteration.
    """
    bv, h = params.b_var, times.dt
    N = times.n_steps
    u = np.zeros(N + 1)
    u[0] = 1.0
    f_prev = 0.0
    for m in range(N):
        j = np.arange(1, m + 1)
        inner = h * np.dot(u[j], u[m + 1 - j])
        # f_{m+1} = -bv (inner + h u0 u), u0 = 1
        a = -bv * h
        u[m + 1] = (u[m] + 0.5 * h * (f_prev - bv * inner)) / (1 - 0.5 * h * a)
        f_prev = a * u[m + 1] - bv * inner
        if not np.isfinite(u[m + 1]):
            raise NumericalBlowup(0, m + 1, 0, "dia response")
    return np.exp(-params.nu * times.times) * u


def dia_solve(params: OscillatorParams, times: TimeGrid) -> OscillatorState:
    """Self-consistent DIA closure with the propagator identified as ``G``.

    ``G(t, t')`` depends only on ``t - t'`` (see :func:`dia_response`).
    The correlation rows are marched with a trapezoid predictor-corrector,
    damping handled by exact integrating factors;
    each row costs two matrix-vector products of the current size, so the
    whole solve is cubic in the number of steps.
    """
    nu, bv, h = params.nu, params.b_var, times.dt
    N = times.n_steps
    g = dia_response(params, times)
    lag = np.subtract.outer(np.arange(N + 1), np.arange(N + 1))
    G = np.where(lag >= 0, g[np.clip(lag, 0, N)], 0.0)
    # W[n, s]: trapezoid weight on [0, t_n] times g(t_n - s)
    W = G * h
    W[:, 0] *= 0.5
    W[np.arange(N + 1), np.arange(N + 1)] *= 0.5
    W[0, 0] = 0.0

    Q = np.zeros((N + 1, N + 1))
    Q[0, 0] = params.q0_sq

    def rhs(m):
        # rows/cols 0..m of Q are filled (symmetric); returns column RHS for
        # n <= m of dQ(t_m, t_n)/dt and the equal-time RHS
        Qm = Q[:m + 1, :m + 1]
        A = Qm @ W[m, :m + 1]
        B = W[:m + 1, :m + 1] @ Qm[m]
        return -bv * (A + B), -4 * bv * A[m]

    e1, e2 = np.exp(-nu * h), np.exp(-2 * nu * h)
    for m in range(N):
        two, diag = rhs(m)
        Q[m + 1, :m + 1] = Q[:m + 1, m + 1] = e1 * (Q[m, :m + 1] + h * two)
        Q[m + 1, m + 1] = e2 * (Q[m, m] + h * diag)
        two_p, diag_p = rhs(m + 1)
        new = e1 * Q[m, :m + 1] + 0.5 * h * (e1 * two + two_p[:m + 1])
        Q[m + 1, :m + 1] = Q[:m + 1, m + 1] = new
        Q[m + 1, m + 1] = e2 * Q[m, m] + 0.5 * h * (e2 * diag + diag_p)
        if not np.all(np.isfinite(Q[m + 1, :m + 2])):
            raise NumericalBlowup(0, m + 1, 0, "dia correlation")
    return OscillatorState(times, Q, np.diag(Q).copy(), G)


@dataclass
class MonteCarloEstimate:
    """Ensemble means and standard errors at the sample times.

    ``Q[i, j]`` estimates ``<q(t_i) q(t_j)>`` and ``G[i, j]`` estimates the
    mean response for ``t_i >= t_j`` (zero above the diagonal).  The
    ``*_se`` arrays are complex with the standard error of the real part
    in ``.real`` and of the imaginary part in ``.imag``.
    """
    times: np.ndarray
    n_samples: int
    Q: np.ndarray
    Q_se: np.ndarray
    G: np.ndarray
    G_se: np.ndarray

    @property
    def Qd(self) -> np.ndarray:
        return np.diag(self.Q).copy()

    @property
    def Qd_se(self) -> np.ndarray:
        return np.diag(self.Q_se).copy()


def _block_moments(params, times, n, seed_seq):
    b = np.random.default_rng(seed_seq).normal(0.0, np.sqrt(params.b_var), n)
    z = np.exp(np.outer(b, -1j * times) - params.nu * times)
    q = params.q0_sq * z[:, :, None] * z[:, None, :]
    resp = z[:, :, None] / z[:, None, :]
    out = []
    for x in (q, resp):
        out.append((x.real.sum(0), (x.real ** 2).sum(0), x.imag.sum(0), (x.imag ** 2).sum(0)))
    return out


def monte_carlo_oracle(params: OscillatorParams, n_samples: int, times, seed: int,
                       threads: int = 1, block_size: int | None = None) -> MonteCarloEstimate:
    """Sample ``b ~ N(0, b_var)`` and average ``q(t) q(t')`` and ``e^{-(nu + i b)(t - t')}``.

    Samples are drawn in fixed-size blocks, each with its own generator
    spawned from ``seed``; block sums are reduced in block order, so the
    result does not depend on ``threads``.  The default block size keeps
    the per-block pair tables near 32 MB.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    times = np.asarray(times, dtype=float)
    if block_size is None:
        block_size = int(np.clip((1 << 21) // times.size ** 2, 1024, 1 << 16))
    sizes = [block_size] * (n_samples // block_size)
    if n_samples % block_size:
        sizes.append(n_samples % block_size)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    work = lambda i: _block_moments(params, times, sizes[i], seeds[i])
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            blocks = list(pool.map(work, range(len(sizes))))
    else:
        blocks = [work(i) for i in range(len(sizes))]

    def reduce(which):
        sums = [sum(blk[which][c] for blk in blocks) for c in range(4)]
        n = n_samples
        mean_re, mean_im = sums[0] / n, sums[2] / n
        var_re = np.maximum(sums[1] / n - mean_re ** 2, 0.0) * n / (n - 1)
        var_im = np.maximum(sums[3] / n - mean_im ** 2, 0.0) * n / (n - 1)
        se = np.sqrt(var_re / n) + 1j * np.sqrt(var_im / n)
        return mean_re + 1j * mean_im, se

    Q, Q_se = reduce(0)
    G, G_se = reduce(1)
    lower = np.tril(np.ones(G.shape, dtype=bool))
    return MonteCarloEstimate(times, n_samples, Q, Q_se,
                              np.where(lower, G, 0), np.where(lower, G_se, 0))
