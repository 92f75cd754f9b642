"""Naive loop implementations of every closure right-hand side.

These share no code with the vectorised path: the kernel formula, the
interpolation bracket search and the trapezoid rule are all written out
again with plain Python loops.  They are slow and meant for grids of a
handful of nodes, where they serve as an independent oracle.

Tables are indexed ``T[j][t][s]`` (lists or arrays); correlation tables
must already be symmetric, response tables are read only for ``t >= s``.
No division is regularised, so test states must keep denominators away
from zero.
"""
import math


def kernel_value(k, p, mu):
    return ((mu * (k * k + p * p) - k * p * (1 + 2 * mu * mu)) * (1 - mu * mu) * k * p
            / (k * k + p * p - 2 * k * p * mu))


def interpolate(nodes, values, q):
    n = len(nodes)
    if q < nodes[0] or q > nodes[n - 1]:
        return 0.0
    for i in range(n):
        if nodes[i] == q:
            return float(values[i])
    a = 0
    while a < n - 2 and nodes[a + 1] <= q:
        a += 1
    ka, kb = nodes[a], nodes[a + 1]
    va, vb = values[a], values[a + 1]
    if va > 0 and vb > 0:
        t = math.log(q / ka) / math.log(kb / ka)
        return math.exp((1 - t) * math.log(va) + t * math.log(vb))
    t = (q - ka) / (kb - ka)
    return (1 - t) * va + t * vb


def trapezoid(values, dt):
    if len(values) < 2:
        return 0.0
    total = 0.0
    for i in range(len(values) - 1):
        total += 0.5 * dt * (values[i] + values[i + 1])
    return total


class NaiveGrid:
    """Plain-list copy of a grid's nodes and weights."""

    def __init__(self, grid):
        self.k = [float(x) for x in grid.k_nodes]
        self.w = [float(x) for x in grid.k_weights]
        self.mu = [float(x) for x in grid.mu_nodes]
        self.v = [float(x) for x in grid.mu_weights]
        self.sign = float(grid.kernel_sign)

    def triads(self, i):
        """Yield ``(j, weight * L, q)`` for every (p, mu) node pair at ``k_i``."""
        k = self.k[i]
        for j, p in enumerate(self.k):
            for l, mu in enumerate(self.mu):
                q = math.sqrt(k * k + p * p - 2 * k * p * mu)
                weight = 2 * math.pi * self.w[j] * p * p * self.v[l]
                yield j, weight * self.sign * kernel_value(k, p, mu), q


def _q_at(ng, Q, t, s, q):
    return interpolate(ng.k, [Q[j][t][s] for j in range(len(ng.k))], q)


def transfer(ng, Q, H, i, t, tp, dt):
    """``P(k_i; t, t')``."""
    total = 0.0
    for j, wl, q in ng.triads(i):
        gain = [H[i][tp][s] * Q[j][t][s] * _q_at(ng, Q, t, s, q) for s in range(tp + 1)]
        loss = [H[j][t][s] * Q[i][tp][s] * _q_at(ng, Q, t, s, q) for s in range(t + 1)]
        total += wl * (trapezoid(gain, dt) - trapezoid(loss, dt))
    return total


def dia_response(ng, Q, H, i, t, tp, dt):
    total = 0.0
    for j, wl, q in ng.triads(i):
        vals = [H[i][s][tp] * H[j][t][s] * _q_at(ng, Q, t, s, q) for s in range(tp, t + 1)]
        total -= wl * trapezoid(vals, dt)
    return total


def rget_two_time(ng, Q, i, t, tp, dt):
    total = 0.0
    for j, wl, q in ng.triads(i):
        a = [Q[i][tp][s] * _q_at(ng, Q, t, s, q) / Q[j][s][tp] for s in range(t + 1)]
        b = [Q[j][t][s] * _q_at(ng, Q, t, s, q) / Q[i][t][s] for s in range(tp + 1)]
        total += wl * (-Q[j][t][tp] * trapezoid(a, dt) + Q[i][t][tp] * trapezoid(b, dt))
    return total


def rget_equal_time(ng, Q, i, t, dt):
    total = 0.0
    for j, wl, q in ng.triads(i):
        a = [Q[i][t][s] / Q[j][t][s] * _q_at(ng, Q, t, s, q) for s in range(t + 1)]
        b = [Q[j][t][s] / Q[i][t][s] * _q_at(ng, Q, t, s, q) for s in range(t + 1)]
        total += wl * (-2 * Q[j][t][t] * trapezoid(a, dt) + 2 * Q[i][t][t] * trapezoid(b, dt))
    return total


def rget_response(ng, Q, G, i, t, tp, dt):
    total = 0.0
    for j, wl, q in ng.triads(i):
        vals = [G[i][s][tp] / G[j][s][tp] * _q_at(ng, Q, t, s, q) for s in range(tp, t + 1)]
        total -= wl * G[j][t][tp] * trapezoid(vals, dt)
    return total
