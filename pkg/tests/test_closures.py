import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from closurelab import closures as cl
from closurelab import reference as ref
from closurelab.acceptance import brute_force_deviations, random_tables
from closurelab.history import NumericalBlowup, TimeGrid
from closurelab.kernel import build_grid, grid_from_bounds

KINDS = list(cl.ClosureKind)


def small_state(kind, n_steps=6, nu=0.3, dt=0.02, n_k=8, n_mu=4, **kw):
    grid = build_grid(0.2, 3.0, n_k, n_mu, kernel_sign=-1.0)
    Q0 = cl.power_exp_spectrum(grid.k_nodes, 0.1, 2.0, 1.0)
    return cl.init_state(grid, TimeGrid(dt, n_steps), kind, nu, Q0, **kw)


# safeguard_divide


def test_safeguard_plain_division():
    ev = cl.EventLog()
    assert cl.safeguard_divide(1.0, 2.0, 1.0, 1e-8, ev) == 0.5
    assert ev.counts["regularized_division"] == 0


def test_safeguard_zero_denominator_floors_positive():
    ev = cl.EventLog()
    assert cl.safeguard_divide(1.0, 0.0, 1.0, 1e-8, ev) == pytest.approx(1e8, rel=1e-15)
    assert ev.counts["regularized_division"] == 1


def test_safeguard_zero_over_zero():
    ev = cl.EventLog()
    assert cl.safeguard_divide(0.0, 0.0, 1.0, 1e-8, ev) == 0.0
    assert ev.counts["regularized_division"] == 1


def test_safeguard_keeps_negative_sign():
    assert cl.safeguard_divide(1.0, -1e-12, 1.0, 1e-8) == pytest.approx(-1e8, rel=1e-15)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(1e-3, 1e3))
def test_safeguard_matches_division_above_floor(num, den, scale):
    out = cl.safeguard_divide(num, den, scale, 1e-8)
    if abs(den) >= 1e-8 * scale:
        assert out == num / den
    else:
        assert abs(out) == pytest.approx(abs(num) / (1e-8 * scale), rel=1e-12)


# LET / VLET propagators


def committed_state(kind=cl.ClosureKind.LET, steps=4):
    s = small_state(kind, n_steps=steps)
    return cl.run_steps(s)


@pytest.mark.parametrize("fn", [cl.let_propagator, cl.vlet_propagator])
def test_propagator_unit_diagonal(fn):
    s = committed_state()
    for m in range(s.M + 1):
        assert fn(s, 3, m, m) == 1.0


def test_let_propagator_exponential_identity():
    # Q(k; t, t') = exp(-a (t - t')) Q(k; t', t') on a hand-built table
    s = small_state(cl.ClosureKind.LET, n_steps=4)
    a, dt = 0.7, s.times.dt
    Qd0 = s.Q.diagonal()[:, 0]
    for m in range(1, 5):
        row = np.array([Qd0 * (1 + 0.1 * n) * np.exp(-a * (m - n) * dt) for n in range(m)]).T
        s.Q.append_row(np.column_stack([row, Qd0 * (1 + 0.1 * m)]))
    for m in range(5):
        for n in range(m + 1):
            assert cl.let_propagator(s, 2, m, n) == pytest.approx(np.exp(-a * (m - n) * dt), rel=1e-14)


def test_propagators_invert_their_ratios():
    s = committed_state(steps=5)
    Q, Qd = s.Q, s.Q.diagonal()
    for k in range(s.grid.n_k):
        for m in range(s.M + 1):
            for n in range(m + 1):
                q = Q.query(k, m, n)
                assert cl.let_propagator(s, k, m, n) * Qd[k, n] == pytest.approx(q, rel=1e-15)
                assert cl.vlet_propagator(s, k, m, n) * q == pytest.approx(Qd[k, m], rel=1e-15)


def test_let_floor_logs_event():
    s = small_state(cl.ClosureKind.LET, n_steps=2)
    diag = np.ones(s.grid.n_k)
    diag[0] = 0.0
    s.Q.append_row(np.column_stack([np.full(s.grid.n_k, 0.5), diag]))
    s.Q.append_row(np.ones((s.grid.n_k, 3)))
    before = s.events.counts["regularized_division"]
    assert cl.let_propagator(s, 0, 2, 1) == pytest.approx(1e8, rel=1e-12)
    assert s.events.counts["regularized_division"] == before + 1


# shared structure and trivial limits


def test_dia_let_vlet_share_transfer(monkeypatch):
    rng = np.random.default_rng(3)
    R = 5
    Qs, H, _ = random_tables(rng, 8, R)
    out = []
    monkeypatch.setattr(cl, "propagator_table", lambda state, Qs, H=None: H_fixed)
    H_fixed = H
    for kind in (cl.ClosureKind.DIA, cl.ClosureKind.LET, cl.ClosureKind.VLET):
        s = small_state(kind)
        out.append(cl.evaluate_row(s, Qs, H, None, R - 1).two_time)
    assert np.array_equal(out[0], out[1]) and np.array_equal(out[1], out[2])


@pytest.mark.parametrize("kind", KINDS)
def test_rhs_vanishes_at_origin(kind):
    s = small_state(kind, track_response=kind is cl.ClosureKind.RGET)
    if kind is cl.ClosureKind.RGET:
        assert cl.rget_rhs_two_time(s, 3, 0, 0) == 0.0
        assert cl.rget_rhs_equal_time(s, 3, 0) == 0.0
        assert cl.rget_response_rhs(s, 3, 0, 0) == 0.0
    else:
        assert cl.transfer_two_time(s, 3, 0, 0) == 0.0


def test_zero_field_gives_zero_transfer():
    grid = build_grid(0.2, 3.0, 8, 4)
    s = cl.init_state(grid, TimeGrid(0.02, 3), "LET", 0.3, np.zeros(8))
    cl.run_steps(s)
    assert np.all(s.Q.dense() == 0)
    assert cl.transfer_two_time(s, 2, 3, 1) == 0.0


@pytest.mark.parametrize("kind", [cl.ClosureKind.DIA, cl.ClosureKind.RGET])
def test_response_equal_time_terms_vanish(kind):
    s = cl.run_steps(small_state(kind, n_steps=3, track_response=kind is cl.ClosureKind.RGET))
    rhs = cl.dia_response_rhs if kind is cl.ClosureKind.DIA else cl.rget_response_rhs
    for m in range(s.M + 1):
        assert rhs(s, 4, m, m) == 0.0


@pytest.mark.parametrize("kind", KINDS)
def test_response_diagonal_is_one(kind):
    s = cl.run_steps(small_state(kind, track_response=kind is cl.ClosureKind.RGET))
    resp = s.H if s.H is not None else s.G
    if resp is not None:
        assert np.all(resp.diagonal() == 1.0)


# brute force and consistency


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_brute_force_rhs(seed, sign):
    dev = brute_force_deviations(seed, R=6, kernel_sign=sign)
    assert max(dev.values()) <= 1e-12, dev


def test_single_shell_toy_state_matches_naive_sum():
    grid = grid_from_bounds(0.5, 3.0, 4, 4)
    R = 4
    Qs = np.zeros((4, R, R))
    Qs[1] = 1.0 + 0.1 * np.add.outer(np.arange(R), np.arange(R))
    H = np.tril(np.ones((4, R, R)))
    a = R - 1
    K = grid.plan.angular_kernel(Qs[:, a, :])
    fast = cl.transfer_row(K, Qs, H, a, np.arange(R), 0.1)
    ng = ref.NaiveGrid(grid)
    slow = np.array([[ref.transfer(ng, Qs, H, i, a, b, 0.1) for b in range(R)] for i in range(4)])
    assert np.max(np.abs(fast - slow)) <= 1e-12 * max(np.max(np.abs(slow)), 1e-300)


@pytest.mark.parametrize("seed", range(4))
def test_rget_equal_time_is_twice_two_time_diagonal(seed):
    rng = np.random.default_rng(seed)
    grid = grid_from_bounds(0.5, 3.0, 4, 4)
    for R in (1, 3, 5):
        Qs, _, _ = random_tables(rng, 4, R)
        a = R - 1
        K = grid.plan.angular_kernel(Qs[:, a, :])
        eq = cl.rget_equal_time_row(K, Qs, a, 0.1, 1e-8)
        two = cl.rget_two_time_row(K, Qs, a, [a], 0.1, 1e-8)[:, 0]
        assert np.allclose(eq, 2 * two, rtol=1e-12, atol=1e-12 * np.max(np.abs(eq)) + 1e-300)


def test_point_queries_match_rows():
    s = cl.run_steps(small_state(cl.ClosureKind.RGET, n_steps=4))
    Qs = s.Q.dense()
    K = s.grid.plan.angular_kernel(Qs[:, 4, :])
    row = cl.rget_two_time_row(K, Qs, 4, np.arange(5), s.times.dt, s.eps_floor)
    for n in range(5):
        assert cl.rget_rhs_two_time(s, 2, 4, n) == row[2, n]


# stepping


@pytest.mark.parametrize("kind", KINDS)
def test_linear_limit_exact(kind):
    s = small_state(kind, n_steps=40, nonlinear=False, track_response=kind is cl.ClosureKind.RGET)
    Q0 = s.Q.diagonal()[:, 0].copy()
    cl.run_steps(s)
    t = s.times.times
    exact = Q0[:, None] * np.exp(-2 * s.nu * s.k2[:, None] * t)
    assert np.allclose(s.Q.diagonal(), exact, rtol=1e-12, atol=0)
    Qs = s.Q.dense()
    tau = t[-1] - t
    assert np.allclose(Qs[:, -1, :], Qs.diagonal(axis1=1, axis2=2) * np.exp(-s.nu * s.k2[:, None] * tau),
                       rtol=1e-12, atol=0)


@pytest.mark.parametrize("kind", KINDS)
def test_self_convergence_second_order(kind):
    energies = []
    for dt in (0.04, 0.02, 0.01):
        s = small_state(kind, n_steps=round(0.4 / dt), dt=dt, n_k=12, n_mu=6)
        cl.run_steps(s)
        w = s.grid.k_weights * 4 * np.pi * s.k2
        energies.append(float(w @ s.Q.diagonal()[:, -1]))
    order = np.log2(abs(energies[0] - energies[1]) / abs(energies[1] - energies[2]))
    assert order >= 1.8, (energies, order)


def test_two_time_diagonal_mode_close_to_equal_time():
    diags = []
    for mode in ("equal_time", "two_time"):
        s = cl.run_steps(small_state("LET", n_steps=20, diagonal_mode=mode))
        diags.append(s.Q.diagonal())
    assert np.max(np.abs(diags[0] / diags[1] - 1)) <= 1e-3


def test_negative_spectrum_is_flagged_not_fatal():
    grid = build_grid(0.2, 3.0, 8, 4)
    Q0 = cl.power_exp_spectrum(grid.k_nodes, 0.1, 2.0, 1.0)
    Q0[3] = -1e-3
    s = cl.init_state(grid, TimeGrid(0.02, 2), "DIA", 0.3, Q0)
    cl.run_steps(s)
    assert s.negative_flags[0][3]
    assert s.events.counts["negative_spectrum"] >= 1
    assert s.M == 2


def test_blowup_leaves_state_uncommitted():
    grid = build_grid(0.2, 3.0, 8, 4)
    Q0 = np.full(8, 1e200)
    s = cl.init_state(grid, TimeGrid(0.02, 3), "DIA", 0.3, Q0)
    with pytest.raises(NumericalBlowup) as info:
        cl.advance(s)
    assert info.value.m == 1
    assert s.M == 0 and s.H.n_rows == 1


def test_advance_past_grid_raises():
    s = cl.run_steps(small_state("VLET", n_steps=2))
    with pytest.raises(IndexError):
        cl.advance(s)


def test_init_state_rejects_bad_input():
    grid = build_grid(0.2, 3.0, 8, 4)
    with pytest.raises(ValueError):
        cl.init_state(grid, TimeGrid(0.1, 2), "DIA", -1.0, np.ones(8))
    with pytest.raises(ValueError):
        cl.init_state(grid, TimeGrid(0.1, 2), "DIA", 0.1, np.ones(7))
    with pytest.raises(ValueError):
        cl.init_state(grid, TimeGrid(0.1, 2), "XYZ", 0.1, np.ones(8))


@pytest.mark.parametrize("kind", KINDS)
def test_zero_kernel_gives_viscous_decay(kind):
    grid = build_grid(0.2, 3.0, 8, 4, kernel_sign=0.0)
    Q0 = cl.power_exp_spectrum(grid.k_nodes, 0.1, 2.0, 1.0)
    s = cl.run_steps(cl.init_state(grid, TimeGrid(0.02, 20), kind, 0.3, Q0))
    exact = Q0[:, None] * np.exp(-0.6 * grid.k_nodes[:, None] ** 2 * s.times.times)
    assert np.allclose(s.Q.diagonal(), exact, rtol=1e-12, atol=0)
