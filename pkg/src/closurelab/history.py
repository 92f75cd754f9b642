"""Two-time fields on a uniform time grid and their history quadratures."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CORRELATION = "correlation"
RESPONSE = "response"


class NumericalBlowup(FloatingPointError):
    """A non-finite value reached committed storage."""

    def __init__(self, k_index: int, m: int, n: int, field: str = ""):
        self.k_index, self.m, self.n, self.field = k_index, m, n, field
        super().__init__(f"non-finite {field or 'value'} at k_index={k_index}, m={m}, n={n}")


class ContractViolation(IndexError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")

    def t(self, m):
        return np.asarray(m) * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


class TwoTimeField:
    """Lower-triangular store of ``V(k; t_m, t_n)``, ``n <= m``, for every k.

    A correlation field reads ``(m, n)`` and ``(n, m)`` from the same cell.
    A response field is defined only forward in time and has a unit
    diagonal.  Rows are appended whole (all k at once) and never rewritten.
    """

    def __init__(self, kind: str, n_k: int, capacity: int):
        if kind not in (CORRELATION, RESPONSE):
            raise ValueError(f"unknown field kind {kind!r}")
        self.kind = kind
        self.n_k = n_k
        self.capacity = capacity
        self._data = np.zeros((n_k, capacity, capacity))
        self.n_rows = 0

    @property
    def cells_written(self) -> int:
        return self.n_k * self.n_rows * (self.n_rows + 1) // 2

    def append_row(self, values) -> None:
        """Commit row ``M = n_rows`` holding ``V(k; t_M, t_n)`` for ``n <= M``."""
        M = self.n_rows
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_k, M + 1):
            raise ValueError(f"row {M} needs shape {(self.n_k, M + 1)}, got {values.shape}")
        if M >= self.capacity:
            raise ContractViolation(f"field capacity {self.capacity} exhausted")
        bad = ~np.isfinite(values)
        if bad.any():
            k, n = np.argwhere(bad)[0]
            raise NumericalBlowup(int(k), M, int(n), self.kind)
        if self.kind == RESPONSE and not np.all(values[:, M] == 1.0):
            raise ContractViolation("response diagonal must be exactly 1")
        self._data[:, M, :M + 1] = values
        self.n_rows = M + 1

    def query(self, k_index: int, m: int, n: int) -> float:
        top = max(m, n)
        if min(m, n) < 0 or top >= self.n_rows:
            raise ContractViolation(f"({m}, {n}) outside committed rows 0..{self.n_rows - 1}")
        if self.kind == RESPONSE:
            if m < n:
                raise ContractViolation(f"response queried backward in time ({m} < {n})")
            return float(self._data[k_index, m, n])
        return float(self._data[k_index, top, min(m, n)])

    def row(self, m: int) -> np.ndarray:
        """Stored row ``m`` as a read-only view of shape ``(n_k, m + 1)``."""
        if not 0 <= m < self.n_rows:
            raise ContractViolation(f"row {m} not committed")
        view = self._data[:, m, :m + 1]
        view.flags.writeable = False
        return view

    def diagonal(self) -> np.ndarray:
        """Equal-time values, shape ``(n_k, n_rows)``."""
        idx = np.arange(self.n_rows)
        return self._data[:, idx, idx].copy()

    def dense(self, size: int | None = None) -> np.ndarray:
        """Dense copy of the committed rows padded to ``size`` with zeros.

        Correlation fields come back symmetrised; response fields keep
        zeros above the diagonal.
        """
        R = self.n_rows
        size = R if size is None else size
        out = np.zeros((self.n_k, size, size))
        lower = self._data[:, :R, :R]
        out[:, :R, :R] = lower
        if self.kind == CORRELATION:
            out[:, :R, :R] += np.swapaxes(lower, 1, 2)
            idx = np.arange(R)
            out[:, idx, idx] = lower[:, idx, idx]
        return out


def query(field: TwoTimeField, k_index: int, m: int, n: int) -> float:
    return field.query(k_index, m, n)


def trapezoid_weights(start: int, stop: int, size: int, dt: float) -> np.ndarray:
    """Trapezoid weights on nodes ``start..stop`` embedded in a length-``size`` vector."""
    w = np.zeros(size)
    if stop > start:
        w[start:stop + 1] = dt
        w[start] = w[stop] = 0.5 * dt
    return w


def trapezoid_matrix(starts, stops, size: int, dt: float) -> np.ndarray:
    """Stack of :func:`trapezoid_weights` rows, one per (start, stop) pair."""
    starts = np.broadcast_to(np.asarray(starts), np.broadcast(starts, stops).shape)
    stops = np.broadcast_to(np.asarray(stops), starts.shape)
    s = np.arange(size)
    inside = (s >= starts[:, None]) & (s <= stops[:, None]) & (stops > starts)[:, None]
    W = np.where(inside, dt, 0.0)
    edge = (s == starts[:, None]) | (s == stops[:, None])
    return np.where(inside & edge, 0.5 * dt, W)


def time_integral(integrand, start: int, stop: int, dt: float) -> float:
    """Trapezoid rule over s-indices ``start..stop``.

    ``integrand`` is a callable of the s-index or a sequence indexed by it.
    """
    if stop < start:
        raise ValueError("start must not exceed stop")
    if stop == start:
        return 0.0
    if callable(integrand):
        vals = np.array([integrand(s) for s in range(start, stop + 1)], dtype=float)
    else:
        vals = np.asarray(integrand, dtype=float)[start:stop + 1]
    return float(dt * (vals.sum() - 0.5 * (vals[0] + vals[-1])))
