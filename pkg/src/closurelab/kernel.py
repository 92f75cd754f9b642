"""Geometric transfer kernel and wavenumber-space quadrature.

Isotropy reduces the convolution integral over ``d^3p`` to a double sum
over radial nodes ``p_i`` and angular nodes ``mu_j`` (cosine of the angle
between ``k`` and ``p``)::

    int d^3p F  ~  2 pi  sum_i sum_j  w_i  v_j  p_i^2  F(p_i, q_ij)

with ``q_ij = sqrt(k^2 + p_i^2 - 2 k p_i mu_j)``.  Radial nodes are
log-spaced and carry Gregory (end-corrected trapezoid) weights in
``ln k``; angular nodes are Gauss-Legendre abscissae, which never touch
``mu = +-1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numba
import numpy as np


class ConfigurationError(ValueError):
    """Invalid grid bounds or counts."""


class DegenerateGeometryError(ArithmeticError):
    """Kernel evaluated at a (k, p, mu) triple with vanishing |k - p|."""


def eval_L(k, p, mu):
    """Transfer kernel ``L(k, p)`` for wavenumbers ``k, p`` and cosine ``mu``.

    Accepts scalars or broadcastable arrays.  Symmetric under ``k <-> p``
    and proportional to ``1 - mu**2``.
    """
    k = np.asarray(k, dtype=float)
    p = np.asarray(p, dtype=float)
    mu = np.asarray(mu, dtype=float)
    den = k * k + p * p - 2.0 * k * p * mu
    if np.any(den < 1e-30 * k * k):
        raise DegenerateGeometryError("|k - p| vanishes for the requested triple")
    num = (mu * (k * k + p * p) - k * p * (1.0 + 2.0 * mu * mu)) * (1.0 - mu * mu) * k * p
    out = num / den
    if not np.all(np.isfinite(out)):
        raise DegenerateGeometryError("non-finite kernel value")
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class WavenumberGrid:
    k_nodes: np.ndarray
    k_weights: np.ndarray
    mu_nodes: np.ndarray
    mu_weights: np.ndarray
    kernel_sign: float = field(default=1.0)

    @property
    def n_k(self) -> int:
        return self.k_nodes.size

    @property
    def n_mu(self) -> int:
        return self.mu_nodes.size

    @property
    def k_min(self) -> float:
        return float(self.k_nodes[0])

    @property
    def k_max(self) -> float:
        return float(self.k_nodes[-1])

    @cached_property
    def plan(self) -> "ConvolutionPlan":
        return ConvolutionPlan.from_grid(self)


def build_grid(k_min: float, k_max: float, n_k: int, n_mu: int,
               kernel_sign: float = 1.0) -> WavenumberGrid:
    """Log-spaced radial grid with Gauss-Legendre angular nodes.

    ``kernel_sign`` multiplies every kernel value used by the closures
    (``+1`` reproduces the kernel exactly as written, ``-1`` flips it).
    """
    if not (np.isfinite(k_min) and np.isfinite(k_max)) or not 0 < k_min < k_max:
        raise ConfigurationError(f"need 0 < k_min < k_max, got ({k_min}, {k_max})")
    if int(n_k) != n_k or n_k < 8:
        raise ConfigurationError(f"n_k must be an integer >= 8, got {n_k}")
    if int(n_mu) != n_mu or n_mu < 4:
        raise ConfigurationError(f"n_mu must be an integer >= 4, got {n_mu}")
    if kernel_sign not in (1.0, -1.0, 0.0):
        raise ConfigurationError(f"kernel_sign must be -1, 0 or 1, got {kernel_sign}")
    return grid_from_bounds(k_min, k_max, int(n_k), int(n_mu), kernel_sign)


_GREGORY_ENDS = {
    3: np.array([3 / 8, 7 / 6, 23 / 24]),
    5: np.array([95 / 288, 317 / 240, 23 / 30, 793 / 720, 157 / 160]),
}


def grid_from_bounds(k_min: float, k_max: float, n_k: int, n_mu: int,
                     kernel_sign: float = 1.0) -> WavenumberGrid:
    """Same construction as :func:`build_grid` without the resolution minimums.

    Meant for tiny brute-force comparison grids.  The radial end
    corrections shrink with the node count: five-point (sixth order) from
    ten nodes, three-point (fourth order) from six, plain trapezoid below.
    """
    if not 0 < k_min < k_max or n_k < 2 or n_mu < 1:
        raise ConfigurationError("degenerate grid request")
    k = np.geomspace(k_min, k_max, n_k)
    k[0], k[-1] = k_min, k_max
    h = np.log(k_max / k_min) / (n_k - 1)
    w = h * k
    if n_k >= 6:
        ends = _GREGORY_ENDS[5 if n_k >= 10 else 3]
        w[:ends.size] *= ends
        w[-ends.size:] *= ends[::-1]
    else:
        w[0] *= 0.5
        w[-1] *= 0.5
    mu, v = np.polynomial.legendre.leggauss(n_mu)
    for arr in (k, w, mu, v):
        arr.setflags(write=False)
    return WavenumberGrid(k, w, mu, v, float(kernel_sign))


def _bracket(k_nodes: np.ndarray, q):
    """Left bracket index and (log, linear) weights for ``q`` in the band."""
    q = np.asarray(q, dtype=float)
    n = k_nodes.size
    a = np.clip(np.searchsorted(k_nodes, q, side="right") - 1, 0, n - 2)
    ka, kb = k_nodes[a], k_nodes[a + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        w_log = np.log(q / ka) / np.log(kb / ka)
    w_lin = (q - ka) / (kb - ka)
    inband = (q >= k_nodes[0]) & (q <= k_nodes[-1])
    return a, np.where(inband, w_log, 0.0), np.where(inband, w_lin, 0.0), inband


def interp_at(values, grid: WavenumberGrid, q: float) -> float:
    """Interpolate a per-node array at wavenumber ``q``.

    Log-log linear where both bracketing values are positive, linear in
    ``q`` otherwise.  Zero outside ``[k_min, k_max]``.
    """
    values = np.asarray(values, dtype=float)
    k = grid.k_nodes
    if q < k[0] or q > k[-1]:
        return 0.0
    i = int(np.searchsorted(k, q))
    if i < k.size and k[i] == q:
        return float(values[i])
    a, w_log, w_lin, _ = _bracket(k, q)
    a = int(a)
    va, vb = values[a], values[a + 1]
    if va > 0 and vb > 0:
        return float(np.exp((1.0 - w_log) * np.log(va) + w_log * np.log(vb)))
    return float((1.0 - w_lin) * va + w_lin * vb)


def convolve(grid: WavenumberGrid, k_index: int, integrand) -> float:
    """Quadrature of ``int d^3p F(p, |k - p|, L)`` at ``k = k_nodes[k_index]``.

    ``integrand(p, q, L)`` is called once with arrays of shape
    ``(n_k, n_mu)`` and must return an array of the same shape; it is
    responsible for any factor of ``L`` it wants.
    """
    k = grid.k_nodes[k_index]
    p = grid.k_nodes[:, None]
    mu = grid.mu_nodes[None, :]
    q = np.sqrt(np.maximum(k * k + p * p - 2.0 * k * p * mu, 0.0))
    L = eval_L(k, p, mu)
    vals = np.asarray(integrand(p * np.ones_like(mu), q, L), dtype=float)
    weights = 2.0 * np.pi * (grid.k_weights * grid.k_nodes ** 2)[:, None] * grid.mu_weights[None, :]
    return float(np.sum(weights * vals))


@dataclass(frozen=True, eq=False)
class ConvolutionPlan:
    """Precomputed bracket tables for every (k, p, mu) node triple.

    ``coef[i, j, l]`` folds the radial weight, ``p^2``, the angular weight,
    ``2 pi`` and ``L(k_i, p_j, mu_l)`` (times the grid's kernel sign).
    """
    bracket: np.ndarray
    w_log: np.ndarray
    w_lin: np.ndarray
    inband: np.ndarray
    coef: np.ndarray

    @classmethod
    def from_grid(cls, grid: WavenumberGrid) -> "ConvolutionPlan":
        k = grid.k_nodes[:, None, None]
        p = grid.k_nodes[None, :, None]
        mu = grid.mu_nodes[None, None, :]
        q = np.sqrt(k * k + p * p - 2.0 * k * p * mu)
        a, w_log, w_lin, inband = _bracket(grid.k_nodes, q)
        L = eval_L(k, p, mu) * grid.kernel_sign
        coef = (2.0 * np.pi * (grid.k_weights * grid.k_nodes ** 2)[None, :, None]
                * grid.mu_weights[None, None, :] * L)
        return cls(np.ascontiguousarray(a, dtype=np.int64), w_log, w_lin, inband,
                   np.ascontiguousarray(coef))

    def angular_kernel(self, Qrow: np.ndarray) -> np.ndarray:
        """``K[k, p, s] = sum_mu coef * Q(|k - p|; s)`` for a table ``Qrow[j, s]``.

        ``Qrow`` holds correlation values at the radial nodes for each
        history index ``s``; the off-grid ``|k - p|`` is interpolated
        exactly as :func:`interp_at` does.
        """
        Qrow = np.ascontiguousarray(Qrow, dtype=float)
        pos = Qrow > 0
        logQ = np.log(np.where(pos, Qrow, 1.0))
        n = self.coef.shape[0]
        out = np.empty((n, n, Qrow.shape[1]))
        _angular_kernel(self.bracket, self.w_log, self.w_lin, self.inband, self.coef,
                        Qrow, logQ, pos, out)
        return out


@numba.njit(cache=True)
def _angular_kernel(bracket, w_log, w_lin, inband, coef, Q, logQ, pos, out):
    nk, np_, nmu = bracket.shape
    ns = Q.shape[1]
    for i in range(nk):
        for j in range(np_):
            for s in range(ns):
                out[i, j, s] = 0.0
            for l in range(nmu):
                if not inband[i, j, l]:
                    continue
                a = bracket[i, j, l]
                c = coef[i, j, l]
                wg = w_log[i, j, l]
                wl = w_lin[i, j, l]
                for s in range(ns):
                    if pos[a, s] and pos[a + 1, s]:
                        v = np.exp((1.0 - wg) * logQ[a, s] + wg * logQ[a + 1, s])
                    else:
                        v = (1.0 - wl) * Q[a, s] + wl * Q[a + 1, s]
                    out[i, j, s] += c * v
