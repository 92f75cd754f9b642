import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from closurelab.kernel import (ConfigurationError, DegenerateGeometryError, build_grid,
                               convolve, eval_L, interp_at)

wavenumber = st.floats(0.01, 100.0)
cosine = st.floats(-0.999, 0.999)


def test_kernel_hand_value():
    assert eval_L(1.0, 1.0, 0.0) == pytest.approx(-0.5, rel=1e-15)


def test_kernel_vanishes_at_unit_cosine_limit():
    mu = 1 - np.logspace(-2, -8, 7)
    vals = np.abs(eval_L(1.0, 1.0, -mu))
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] < 1e-7


def test_kernel_exchange_example():
    assert eval_L(2.0, 1.0, 0.5) == eval_L(1.0, 2.0, 0.5)


@given(wavenumber, wavenumber, cosine)
def test_kernel_symmetric(k, p, mu):
    assert eval_L(k, p, mu) == pytest.approx(eval_L(p, k, mu), rel=1e-14, abs=1e-300)


@given(wavenumber, wavenumber, cosine)
def test_kernel_bounded_by_angular_factor(k, p, mu):
    # |L| / (1 - mu^2) stays bounded by a geometry-only constant
    if abs(k - p) < 1e-6 * k:
        return
    bound = (k * k + p * p + 3 * k * p) * k * p / (k - p) ** 2
    assert abs(eval_L(k, p, mu)) <= bound * (1 - mu * mu) * (1 + 1e-12)


def test_kernel_vectorised_matches_scalar():
    k, p, mu = np.meshgrid([0.3, 1.0], [0.5, 2.0], [-0.7, 0.2], indexing="ij")
    vec = eval_L(k, p, mu)
    for idx in np.ndindex(k.shape):
        assert vec[idx] == eval_L(k[idx], p[idx], mu[idx])


def test_kernel_rejects_degenerate_triple():
    with pytest.raises(DegenerateGeometryError):
        eval_L(1.0, 1.0, 1.0)


def test_grid_endpoints_and_spacing():
    g = build_grid(0.1, 10.0, 8, 4)
    assert g.k_nodes[0] == 0.1 and g.k_nodes[7] == 10.0
    ratios = g.k_nodes[1:] / g.k_nodes[:-1]
    assert np.allclose(ratios, ratios[0], rtol=1e-12)


@pytest.mark.parametrize("args", [(1, 1, 8, 4), (2, 1, 8, 4), (0, 1, 8, 4), (0.1, 10, 7, 4),
                                  (0.1, 10, 8, 3), (0.1, 10, 8.5, 4)])
def test_grid_rejects_bad_requests(args):
    with pytest.raises(ConfigurationError):
        build_grid(*args)


def test_grid_invariants():
    g = build_grid(0.1, 10.0, 64, 32)
    assert abs(g.mu_weights.sum() - 2.0) <= 2e-12
    assert np.all(np.diff(g.k_nodes) > 0) and np.all(g.k_nodes > 0)
    assert np.all(np.abs(g.mu_nodes) < 1) and np.all(np.diff(g.mu_nodes) > 0)
    assert not g.k_nodes.flags.writeable


def test_radial_rule_accuracy():
    # int_{0.1}^{10} k^2 e^{-k} dk in closed form
    g = build_grid(0.1, 10.0, 64, 32)
    F = lambda k: -np.exp(-k) * (k * k + 2 * k + 2)
    exact = F(10.0) - F(0.1)
    approx = np.sum(g.k_weights * g.k_nodes ** 2 * np.exp(-g.k_nodes))
    assert abs(approx / exact - 1) <= 1e-6 or pytest.fail(f"{approx} vs {exact}")


def test_interp_reproduces_nodes_and_band_edges():
    g = build_grid(0.1, 10.0, 16, 4)
    vals = np.sin(np.arange(16.0))
    for i, k in enumerate(g.k_nodes):
        assert interp_at(vals, g, k) == vals[i]
    assert interp_at(vals, g, 20.0) == 0.0
    assert interp_at(vals, g, 0.05) == 0.0


@given(st.floats(-4, 4), st.integers(0, 14), st.floats(0.0, 1.0), st.floats(0.1, 10))
def test_interp_exact_on_power_laws(exponent, i, frac, c):
    g = build_grid(0.1, 10.0, 16, 4)
    k = g.k_nodes
    q = np.exp((1 - frac) * np.log(k[i]) + frac * np.log(k[i + 1]))
    q = min(max(q, k[0]), k[-1])
    assert interp_at(c * k ** exponent, g, q) == pytest.approx(c * q ** exponent, rel=1e-12)


def test_interp_linear_when_sign_changes():
    g = build_grid(1.0, 2.0, 8, 4)
    vals = g.k_nodes - 1.5
    q = 0.5 * (g.k_nodes[3] + g.k_nodes[4])
    assert interp_at(vals, g, q) == pytest.approx(q - 1.5, abs=1e-14)


def test_convolve_zero_and_shell_volume():
    g = build_grid(0.1, 10.0, 64, 32)
    assert convolve(g, 5, lambda p, q, L: np.zeros_like(p)) == 0.0
    total = convolve(g, 5, lambda p, q, L: np.ones_like(p))
    assert total == pytest.approx(4 * np.pi * (10.0 ** 3 - 0.1 ** 3) / 3, rel=1e-3)


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 15))
def test_convolve_linear(a, b, k_index):
    g = build_grid(0.2, 5.0, 16, 8)
    F = lambda p, q, L: L * np.exp(-q)
    G = lambda p, q, L: p * q
    lhs = convolve(g, k_index, lambda p, q, L: a * F(p, q, L) + b * G(p, q, L))
    rhs = a * convolve(g, k_index, F) + b * convolve(g, k_index, G)
    scale = abs(a) * abs(convolve(g, k_index, lambda p, q, L: np.abs(F(p, q, L)))) \
        + abs(b) * convolve(g, k_index, G)
    assert abs(lhs - rhs) <= 1e-12 * max(scale, 1e-300)


def test_plan_kernel_matches_pointwise_interpolation():
    g = build_grid(0.2, 5.0, 12, 6)
    rng = np.random.default_rng(3)
    Q = rng.uniform(0.1, 1.0, (12, 2))
    Q[4, 1] = -0.2      # forces the linear branch in one bracket
    K = g.plan.angular_kernel(Q)
    for i in (0, 5, 11):
        for s in range(2):
            direct = convolve(g, i, lambda p, q, L: L * np.vectorize(
                lambda x: interp_at(Q[:, s], g, x))(q))
            assert K[i].sum(axis=0)[s] == pytest.approx(direct, rel=1e-12, abs=1e-14)


def test_kernel_sign_multiplies_plan():
    a = build_grid(0.2, 5.0, 8, 4)
    b = build_grid(0.2, 5.0, 8, 4, kernel_sign=-1.0)
    assert np.array_equal(a.plan.coef, -b.plan.coef)
