"""One test per run-level acceptance criterion.

Each test records its ``[PASS]``/``[FAIL]`` line, which the terminal
summary prints in criterion order.
"""
import pytest

from closurelab import acceptance as acc

from conftest import ACCEPTANCE_LINES


def check(fn):
    res = fn()
    ACCEPTANCE_LINES.append(res.line())
    print(res.line())
    assert res.passed, res.detail


def test_oscillator_exactness():
    check(acc.criterion_oscillator_exactness)


def test_propagator_constraints():
    check(acc.criterion_constraints)


def test_dia_oscillator_failure():
    check(acc.criterion_dia_failure)


def test_monte_carlo_oracle():
    check(acc.criterion_monte_carlo)


def test_linear_limit():
    check(acc.criterion_linear_limit)


@pytest.mark.slow
def test_transfer_conservation():
    check(acc.criterion_conservation)


def test_brute_force_equivalence():
    check(acc.criterion_brute_force)


@pytest.mark.slow
def test_diagonal_consistency():
    check(acc.criterion_diagonal)


@pytest.mark.slow
def test_low_reynolds_stability():
    check(acc.criterion_stability)
