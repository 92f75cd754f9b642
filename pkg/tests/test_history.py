import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from closurelab.history import (CORRELATION, RESPONSE, ContractViolation, NumericalBlowup,
                                TimeGrid, TwoTimeField, query, time_integral,
                                trapezoid_matrix, trapezoid_weights)


def filled(kind, n_k=3, rows=6, seed=0):
    rng = np.random.default_rng(seed)
    f = TwoTimeField(kind, n_k, rows)
    for m in range(rows):
        row = rng.normal(size=(n_k, m + 1))
        if kind == RESPONSE:
            row[:, m] = 1.0
        f.append_row(row)
    return f


def test_time_grid():
    tg = TimeGrid(0.25, 4)
    assert np.array_equal(tg.times, [0, 0.25, 0.5, 0.75, 1.0])
    for bad in ((0.0, 4), (-1.0, 4), (0.1, 0), (float("nan"), 3)):
        with pytest.raises(ValueError):
            TimeGrid(*bad)


def test_correlation_symmetry_and_response_domain():
    c = filled(CORRELATION)
    assert query(c, 1, 3, 5) == query(c, 1, 5, 3)
    r = filled(RESPONSE)
    assert query(r, 2, 4, 4) == 1.0
    with pytest.raises(ContractViolation):
        query(r, 0, 2, 5)
    with pytest.raises(ContractViolation):
        query(c, 0, 6, 0)


def test_storage_growth_and_immutability():
    f = TwoTimeField(CORRELATION, 4, 10)
    for M in range(1, 8):
        f.append_row(np.ones((4, M)))
        assert f.cells_written == 4 * M * (M + 1) // 2
    view = f.row(3)
    with pytest.raises(ValueError):
        view[0, 0] = 2.0


def test_append_rejects_bad_rows():
    f = TwoTimeField(CORRELATION, 2, 3)
    with pytest.raises(ValueError):
        f.append_row(np.ones((2, 2)))
    bad = np.ones((2, 1))
    bad[1, 0] = np.inf
    with pytest.raises(NumericalBlowup) as err:
        f.append_row(bad)
    assert (err.value.k_index, err.value.m, err.value.n) == (1, 0, 0)
    assert f.n_rows == 0
    r = TwoTimeField(RESPONSE, 2, 3)
    with pytest.raises(ContractViolation):
        r.append_row(np.full((2, 1), 0.5))
    f.append_row(np.ones((2, 1)))
    f.append_row(np.ones((2, 2)))
    f.append_row(np.ones((2, 3)))
    with pytest.raises(ContractViolation):
        f.append_row(np.ones((2, 4)))


@given(st.integers(0, 10_000))
def test_dense_correlation_is_bit_symmetric(seed):
    d = filled(CORRELATION, rows=5, seed=seed).dense()
    assert np.array_equal(d, np.swapaxes(d, 1, 2))


def test_dense_response_is_lower_triangular():
    d = filled(RESPONSE).dense(8)
    assert np.all(np.triu(d[:, :6, :6], 1) == 0)
    assert np.all(d[:, 6:, :] == 0)


def test_time_integral_examples():
    assert time_integral(lambda s: 7.0, 3, 3, 0.1) == 0.0
    assert time_integral(lambda s: 2.0, 0, 8, 0.25) == pytest.approx(4.0, rel=1e-15)
    assert time_integral(lambda s: 0.25 * s, 0, 4, 0.25) == 0.5
    with pytest.raises(ValueError):
        time_integral(lambda s: 1.0, 3, 1, 0.1)


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 20), st.integers(1, 30),
       st.floats(0.01, 1.0))
def test_time_integral_exact_on_linear(a, b, start, length, dt):
    stop = start + length
    val = time_integral(lambda s: a + b * s * dt, start, stop, dt)
    t0, t1 = start * dt, stop * dt
    exact = a * (t1 - t0) + 0.5 * b * (t1 * t1 - t0 * t0)
    assert val == pytest.approx(exact, rel=1e-10, abs=1e-10)


def test_time_integral_second_order_on_quadratic():
    errs = []
    for n in (10, 20, 40):
        dt = 1.0 / n
        errs.append(abs(time_integral(lambda s: (s * dt) ** 2, 0, n, dt) - 1 / 3))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.95)


def test_trapezoid_helpers_agree():
    W = trapezoid_matrix([0, 2, 3], [4, 4, 3], 6, 0.5)
    for row, (a, b) in zip(W, [(0, 4), (2, 4), (3, 3)]):
        assert np.array_equal(row, trapezoid_weights(a, b, 6, 0.5))
