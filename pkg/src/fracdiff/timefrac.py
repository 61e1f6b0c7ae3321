"""Uniform time mesh and the L1 discretisation of Caputo / Riemann-Liouville derivatives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import special

from fracdiff.errors import DomainError, InsufficientHistoryError

__all__ = [
    "TimeMesh",
    "L1Coefficients",
    "l1_coefficients",
    "memory_sum",
    "caputo_l1",
    "riemann_liouville_l1",
]


@dataclass(frozen=True)
class TimeMesh:
    """Uniform grid ``t_n = n * tau`` for ``n = 0..steps``."""

    tau: float
    steps: int

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise DomainError(f"time step must be positive, got {self.tau}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise DomainError(f"number of steps must be an integer >= 1, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))

    @classmethod
    def from_horizon(cls, horizon: float, tau: float) -> TimeMesh:
        steps = round(horizon / tau)
        if abs(steps * tau - horizon) > 1e-9 * max(1.0, horizon):
            raise DomainError(f"horizon {horizon} is not a multiple of tau={tau}")
        return cls(tau=tau, steps=steps)

    @property
    def horizon(self) -> float:
        return self.steps * self.tau

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.tau

    def t(self, n: int) -> float:
        return n * self.tau


def _b_coefficients(beta: float, count: int) -> np.ndarray:
    i = np.arange(count, dtype=float)
    b = np.empty(count)
    b[0] = 1.0
    ii = i[1:]
    # (i+1)^beta - i^beta without cancellation
    b[1:] = ii**beta * np.expm1(beta * np.log1p(1.0 / ii))
    return b


def _b_differences(beta: float, b: np.ndarray) -> np.ndarray:
    """``b_i - b_{i+1}`` for ``i = 0..len(b)-2``.

    This is minus a centred second difference of ``m^beta`` at ``m = i + 1``,
    which loses all digits for large ``m``; there the even binomial series
    ``(1+x)^beta + (1-x)^beta - 2 = 2 sum_j C(beta, 2j) x^(2j)``, ``x = 1/m``
    is summed instead.
    """
    n = len(b) - 1
    d = b[:-1] - b[1:]
    m = np.arange(1, n + 1, dtype=float)
    big = m >= 8
    if np.any(big):
        x2 = 1.0 / m[big] ** 2
        acc = np.zeros_like(x2)
        # x <= 1/8 so 12 terms reach far below double rounding
        for j in range(12, 0, -1):
            acc = acc * x2 + special.binom(beta, 2 * j)
        acc *= x2
        d[big] = -2.0 * m[big] ** beta * acc
    return d


@dataclass(frozen=True)
class L1Coefficients:
    """Convolution weights of the L1 scheme on a uniform mesh.

    Attributes
    ----------
    alpha : float
        Derivative order in (0, 1).
    tau : float
        Time step.
    b : ndarray
        ``b_i = (i+1)^(1-alpha) - i^(1-alpha)`` for ``i = 0..N``. One entry
        beyond ``N - 1`` is kept because the Riemann-Liouville form at step
        ``N`` uses ``b_N``.
    diffs : ndarray
        ``b_i - b_{i+1}`` for ``i = 0..N-1``; all strictly positive.
    scale : float
        ``tau^(-alpha) / Gamma(2 - alpha)``.
    """

    alpha: float
    tau: float
    b: np.ndarray = field(repr=False)
    diffs: np.ndarray = field(repr=False)
    scale: float

    @property
    def steps(self) -> int:
        return len(self.b) - 1


def l1_coefficients(alpha: float, mesh: TimeMesh) -> L1Coefficients:
    """Build the L1 weights for ``alpha`` on ``mesh``."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"L1 scheme needs 0 < alpha < 1, got {alpha}")
    beta = 1.0 - alpha
    b = _b_coefficients(beta, mesh.steps + 1)
    d = _b_differences(beta, b)
    b.setflags(write=False)
    d.setflags(write=False)
    scale = mesh.tau ** (-alpha) / math.gamma(2.0 - alpha)
    return L1Coefficients(alpha=alpha, tau=mesh.tau, b=b, diffs=d, scale=scale)


_BLOCK = 64


@numba.njit(parallel=True, cache=True)
def _weighted_rows(frames, c, n):
    # out[j] = sum_k c[k] * frames[k, j], k < n, Neumaier-compensated. Each
    # column is reduced in a fixed order, so results do not depend on the
    # thread count.
    m = frames.shape[1]
    out = np.empty(m)
    nblocks = (m + _BLOCK - 1) // _BLOCK
    for blk in numba.prange(nblocks):
        j0 = blk * _BLOCK
        j1 = min(j0 + _BLOCK, m)
        s = np.zeros(j1 - j0)
        comp = np.zeros(j1 - j0)
        for k in range(n):
            ck = c[k]
            for jj in range(j1 - j0):
                v = ck * frames[k, j0 + jj]
                t = s[jj] + v
                if abs(s[jj]) >= abs(v):
                    comp[jj] += (s[jj] - t) + v
                else:
                    comp[jj] += (v - t) + s[jj]
                s[jj] = t
        for jj in range(j1 - j0):
            out[j0 + jj] = s[jj] + comp[jj]
    return out


def _history_weights(coeffs: L1Coefficients, n: int, flavor: str) -> np.ndarray:
    if n > coeffs.steps:
        raise DomainError(f"step {n} exceeds the {coeffs.steps} steps the coefficients were built for")
    c = coeffs.diffs[:n][::-1].copy()
    if flavor == "caputo":
        c[0] = coeffs.b[n - 1]
    elif flavor != "rl":
        raise ValueError(f"unknown flavor {flavor!r}")
    return c


def memory_sum(frames: np.ndarray, coeffs: L1Coefficients, n: int, flavor: str = "caputo") -> np.ndarray:
    """History part of the L1 formula at step ``n``.

    Caputo: ``b_{n-1} y^0 + sum_{k=1}^{n-1} (b_{n-k-1} - b_{n-k}) y^k``.
    Riemann-Liouville: ``sum_{k=0}^{n-1} (b_{n-k-1} - b_{n-k}) y^k``.

    ``frames`` has the time index first; rows ``0..n-1`` are used. A 1-D
    input is treated as a single grid point.
    """
    if n < 1:
        raise InsufficientHistoryError("the L1 derivative needs at least two time levels")
    arr = np.asarray(frames, dtype=float)
    scalar = arr.ndim == 1
    if scalar:
        arr = arr[:, None]
    if arr.shape[0] < n:
        raise InsufficientHistoryError(f"history has {arr.shape[0]} levels, step {n} needs {n}")
    c = _history_weights(coeffs, n, flavor)
    rows = np.ascontiguousarray(arr[:n])
    out = _weighted_rows(rows, c, n)
    return out[0] if scalar else out


def _l1_apply(history, coeffs: L1Coefficients, flavor: str):
    arr = np.asarray(history, dtype=float)
    n = arr.shape[0] - 1
    if n < 1:
        raise InsufficientHistoryError("the L1 derivative needs at least two time levels")
    mem = memory_sum(arr, coeffs, n, flavor)
    return coeffs.scale * (arr[n] - mem)


def caputo_l1(history, coeffs: L1Coefficients):
    """L1 Caputo derivative at the last level of ``history``.

    Parameters
    ----------
    history : array_like, shape (n+1,) or (n+1, M)
        Values ``y^0..y^n``; a second axis is treated as independent grid
        points.
    coeffs : L1Coefficients

    Returns
    -------
    float or ndarray
    """
    return _l1_apply(history, coeffs, "caputo")


def riemann_liouville_l1(history, coeffs: L1Coefficients):
    """Discrete (L1) Riemann-Liouville derivative at the last level of ``history``.

    Same as :func:`caputo_l1` except that ``y^0`` enters through the
    ordinary weight ``b_{n-1} - b_n`` rather than ``b_{n-1}``.
    """
    return _l1_apply(history, coeffs, "rl")
