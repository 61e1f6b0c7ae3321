"""Spatial grids, symmetric weight kernels and the nonlocal operator built from them.

The operator acting on a grid function is

    (L_h u)_j = sum_{k >= 1} w_k (u_{j+k} + u_{j-k} - 2 u_j),

with nonnegative weights ``w_k``. Values outside the computational window
are supplied by an extension policy:

``"frozen"``
    Exterior values are the initial data ``u0(x)``; the diagonal uses the
    infinite weight sum. Beyond the stored exterior band ``u0`` is continued
    by its outermost sampled value, which keeps constants in the kernel.
``"zero-increment"``
    Pairs reaching outside the window are dropped (the weight sum is
    truncated).
``"periodic"``
    The window is one period; weights are folded onto it, with the infinite
    tail summed through Hurwitz zeta functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np
from scipy import linalg, sparse, special

from fracdiff.errors import AccuracyError, AssumptionError, DomainError
from fracdiff.specfun import QuadratureRule, bernoulli_poly, gauss_legendre, log_gamma_ratio

__all__ = [
    "EXTENSIONS",
    "SpatialGrid",
    "WeightKernel",
    "OperatorMatrix",
    "fractional_laplacian_kernel",
    "fractional_laplacian_kernel_fourier",
    "discrete_laplacian_kernel",
    "default_k_max",
    "fractional_symbol",
    "apply",
    "assemble_matrix",
]

EXTENSIONS = ("frozen", "zero-increment", "periodic")

# Gamma ratios switch to their large-k expansion here
_ASYMPTOTIC_SWITCH = 128


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform nodes ``x_j = -X + j h``, ``j = 0..M``, with ``h = 2X / M``.

    For a periodic grid node ``M`` coincides with node ``0`` and only the
    first ``M`` nodes are unknowns.
    """

    half_width: float
    cells: int
    periodic: bool = False

    def __post_init__(self):
        if not self.half_width > 0:
            raise DomainError("half_width must be positive")
        if int(self.cells) != self.cells or self.cells < 2:
            raise DomainError("need at least two cells")
        object.__setattr__(self, "cells", int(self.cells))

    @classmethod
    def from_spacing(cls, half_width: float, h: float, periodic: bool = False, adjust: bool = False) -> SpatialGrid:
        """Grid with spacing ``h``.

        With ``adjust=True`` the cell count is rounded and ``h`` is changed
        slightly so that it divides ``2X`` (needed when ``X`` is a multiple
        of pi and ``h`` a power of two).
        """
        cells = round(2 * half_width / h)
        if not adjust and abs(cells * h - 2 * half_width) > 1e-12 * half_width:
            raise DomainError(f"h={h} does not divide the window [-{half_width}, {half_width}]")
        return cls(half_width, cells, periodic)

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.cells

    @property
    def nodes(self) -> np.ndarray:
        return -self.half_width + np.arange(self.cells + 1) * self.h

    @property
    def unknowns(self) -> int:
        return self.cells if self.periodic else self.cells + 1

    def coarsen(self) -> SpatialGrid:
        if self.cells % 2:
            raise DomainError("cannot coarsen a grid with an odd cell count")
        return SpatialGrid(self.half_width, self.cells // 2, self.periodic)

    def refine(self) -> SpatialGrid:
        return SpatialGrid(self.half_width, 2 * self.cells, self.periodic)


def default_k_max(grid: SpatialGrid) -> int:
    """``ceil(4X / h)``: every node sees the whole window plus an exterior band."""
    return math.ceil(4 * grid.half_width / grid.h - 1e-9)


# {{{ fractional-Laplacian weights


def _frac_constant(s: float) -> float:
    # 2^{2s} Gamma(1/2+s) / (sqrt(pi) |Gamma(-s)|)
    return math.exp(
        2 * s * math.log(2.0) + math.lgamma(0.5 + s) - 0.5 * math.log(math.pi) - math.lgamma(-s)
    )


def _frac_total(s: float) -> float:
    # sum_{k>=1} of the h=1 weights
    return math.exp((2 * s - 1) * math.log(2.0) + math.lgamma(0.5 + s) - 0.5 * math.log(math.pi) - math.lgamma(1 + s))


def _frac_weights_unit(s: float, k) -> np.ndarray:
    """Weights for ``h = 1`` at integer offsets ``k >= 1``."""
    k = np.asarray(k, dtype=float)
    out = np.empty_like(k)
    small = k < _ASYMPTOTIC_SWITCH
    # no overflow below the switch, so plain Gamma values keep full accuracy
    out[small] = special.gamma(k[small] - s) / special.gamma(k[small] + 1 + s)
    if np.any(~small):
        out[~small] = np.exp(log_gamma_ratio(k[~small], -s, 1 + s, switch=_ASYMPTOTIC_SWITCH))
    return _frac_constant(s) * out


def _frac_tail_coefficients(s: float) -> tuple[float, ...]:
    """``e_2, e_4, e_6`` with ``Gamma(k-s)/Gamma(k+1+s) = k^(-1-2s) (1 + e_2/k^2 + e_4/k^4 + ...)``."""
    a, b = -s, 1 + s
    c = {}
    for n in (2, 4, 6):
        c[n] = (-1) ** (n + 1) * (bernoulli_poly(n + 1, a) - bernoulli_poly(n + 1, b)) / (n * (n + 1))
    e2 = c[2]
    e4 = c[4] + c[2] ** 2 / 2
    e6 = c[6] + c[2] * c[4] + c[2] ** 3 / 6
    return (e2, e4, e6)


def _frac_shifted_tail(s: float, period: int, start: int, r) -> np.ndarray:
    """``sum_{q >= start} w(q * period + r)`` for unit spacing, ``r`` array, via Hurwitz zeta."""
    if start * period < _ASYMPTOTIC_SWITCH:
        raise ValueError("tail expansion needs offsets beyond the asymptotic switch")
    r = np.asarray(r, dtype=float)
    p = 1.0 + 2.0 * s
    acc = special.zeta(p, start + r / period) * period ** (-p)
    for j, e in enumerate(_frac_tail_coefficients(s), start=1):
        acc = acc + e * special.zeta(p + 2 * j, start + r / period) * period ** (-p - 2 * j)
    return _frac_constant(s) * acc


# }}}


@dataclass(frozen=True)
class WeightKernel:
    """Symmetric nonnegative weights ``w_1..w_K`` of the operator ``L_h``.

    Attributes
    ----------
    weights : ndarray
        ``w_k`` for ``k = 1..K`` (``weights[0]`` is ``w_1``).
    spacing : float
        Grid spacing ``h`` the weights belong to.
    order_r : float
        Operator order ``r`` in [0, 2] used in the moment condition.
    total : float
        ``sum_{k >= 1} w_k`` over all ``k`` (not just the stored ones).
    family : str
        ``"fractional"``, ``"discrete"`` or ``"custom"``. Fractional kernels
        can generate weights past ``K``; the others vanish there.
    s : float or None
        Fractional order for the fractional family.
    moment_const : float
        ``sum_k min((k h)^r, 1) w_k`` with ``r = order_r``.
    """

    weights: np.ndarray = field(repr=False)
    spacing: float
    order_r: float
    total: float
    family: str = "custom"
    s: float | None = None
    moment_const: float = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        self.check_assumptions()
        object.__setattr__(self, "moment_const", self.moment(self.order_r))

    @classmethod
    def from_weights(cls, weights, spacing: float, order_r: float = 2.0) -> WeightKernel:
        """Finitely supported kernel from explicit weights."""
        w = np.asarray(weights, dtype=float)
        return cls(w, spacing, order_r, float(math.fsum(w)), "custom")

    @property
    def k_max(self) -> int:
        return len(self.weights)

    def check_assumptions(self) -> None:
        """Positivity and summability of the weights.

        Raises
        ------
        AssumptionError
        """
        w = self.weights
        if w.ndim != 1 or len(w) == 0:
            raise AssumptionError("weights must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(w)):
            raise AssumptionError("weights must be finite")
        if np.any(w < 0):
            k = int(np.argmax(w < 0)) + 1
            raise AssumptionError(f"negative weight at k={k}: {w[k - 1]}")
        if not (math.isfinite(self.total) and self.total >= 0):
            raise AssumptionError("total weight must be finite")
        partial = math.fsum(w)
        if partial > self.total * (1 + 1e-12) + 1e-300:
            raise AssumptionError("stored weights exceed the declared total")
        if not 0.0 <= self.order_r <= 2.0:
            raise AssumptionError("operator order r must lie in [0, 2]")

    def weights_upto(self, k_max: int) -> np.ndarray:
        """``w_1..w_{k_max}``, generating or zero-filling past the stored range."""
        k_stored = len(self.weights)
        if k_max <= k_stored:
            return self.weights[:k_max]
        extra = np.arange(k_stored + 1, k_max + 1)
        if self.family == "fractional":
            more = _frac_weights_unit(self.s, extra) * self.spacing ** (-2 * self.s)
        else:
            more = np.zeros(len(extra))
        return np.concatenate([self.weights, more])

    def tail_mass(self, k_max: int) -> float:
        """``sum_{k > k_max} w_k``."""
        if self.family == "fractional" and k_max >= _ASYMPTOTIC_SWITCH:
            return float(_frac_shifted_tail(self.s, 1, k_max + 1, 0.0)) * self.spacing ** (-2 * self.s)
        partial = math.fsum(self.weights_upto(k_max))
        return max(self.total - partial, 0.0)

    def residue_sums(self, period: int) -> np.ndarray:
        """``G[r] = sum_{k >= 1, k = r mod period} w_k`` for ``r = 0..period-1``."""
        if self.family == "fractional":
            q = max(2, math.ceil(2 * _ASYMPTOTIC_SWITCH / period))
            k = np.arange(1, q * period + 1)
            w = self.weights_upto(q * period)
            g = np.bincount(k % period, weights=w, minlength=period)
            hs = self.spacing ** (-2 * self.s)
            tails = _frac_shifted_tail(self.s, period, q, np.arange(period)) * hs
            # k = q*period itself is explicit, so residue 0 resumes one period later
            tails[0] = float(_frac_shifted_tail(self.s, period, q, period)) * hs
            return g + tails
        k = np.arange(1, len(self.weights) + 1)
        return np.bincount(k % period, weights=self.weights, minlength=period)

    def moment(self, r: float) -> float:
        """``sum_{k >= 1} min((k h)^r, 1) w_k`` including the untruncated tail."""
        h = self.spacing
        k_in = int(math.floor(1.0 / h + 1e-12))
        if k_in < 1:
            return float(self.total)
        w = self.weights_upto(k_in)
        k = np.arange(1, k_in + 1)
        near = math.fsum((k * h) ** r * w)
        return near + self.tail_mass(k_in)


def fractional_laplacian_kernel(s: float, h: float, k_max: int) -> WeightKernel:
    """Weights of the fractional power ``-(-Delta_h)^s`` of the discrete Laplacian.

    ``w_k = h^(-2s) 2^(2s) Gamma(1/2+s) Gamma(k-s) / (sqrt(pi) |Gamma(-s)| Gamma(k+1+s))``.
    Gamma ratios are evaluated directly below ``k = 128`` and through their
    large-``k`` expansion above.

    Parameters
    ----------
    s : float
        Order in (0, 1).
    h : float
        Grid spacing.
    k_max : int
        Number of stored weights.
    """
    s = float(s)
    if not 0.0 < s < 1.0:
        raise DomainError(f"fractional order must lie in (0, 1), got {s}")
    if k_max < 1:
        raise DomainError("k_max must be >= 1")
    if not h > 0:
        raise DomainError("spacing must be positive")
    k = np.arange(1, int(k_max) + 1)
    w = _frac_weights_unit(s, k) * h ** (-2 * s)
    total = _frac_total(s) * h ** (-2 * s)
    return WeightKernel(w, float(h), min(2 * s + 0.1, 2.0), total, "fractional", s)


_PI_LD = np.longdouble("3.14159265358979323846264338327950288")


def _fourier_weights(s: float, k: np.ndarray, rule: QuadratureRule, levels: int, density: int):
    """Unit-spacing Fourier weights for offsets ``k`` and their total.

    ``[0, pi]`` is cut into ``P`` uniform panels of width ``pi / P``; the
    first is refined geometrically towards ``y = 0``. On panel ``p`` the
    phase ``k y`` is split as ``pi k p / P + k t`` with ``(k p) mod 2P``
    reduced in integers, so the large part of the phase carries no rounding.
    Integrand and sums use extended precision: the weights at k ~ 100 are
    ~1e-8 of the integrand scale.
    """
    ld = np.longdouble
    k_top = int(k.max())
    n_panels = max(4, math.ceil(k_top / 2) * density)
    width = _PI_LD / n_panels
    p2s = ld(2 * s)
    kl = k.astype(ld)

    # graded panels inside [0, width]
    edges = width * ld(0.5) ** np.arange(levels, -1, -1)
    ga = np.concatenate([[ld(0)], edges[:-1]])
    gb = edges
    half = (gb - ga) / 2
    yg = ((ga + gb) / 2)[:, None] + half[:, None] * rule.nodes.astype(ld)
    wg = half[:, None] * rule.weights.astype(ld)
    yg, wg = yg.ravel(), wg.ravel()
    fg = wg * (2 * np.sin(yg / 2)) ** p2s
    near = -(np.cos(np.outer(kl, yg)) @ fg)

    # uniform panels p = 1..P-1 share local nodes t in [0, width]
    t = (width / 2) * (1 + rule.nodes.astype(ld))
    wt = (width / 2) * rule.weights.astype(ld)
    p_idx = np.arange(1, n_panels)
    y = p_idx[:, None].astype(ld) * width + t[None, :]
    f = wt[None, :] * (2 * np.sin(y / 2)) ** p2s
    ki = k.astype(np.int64)
    out = np.empty(len(k), dtype=ld)
    chunk = max(1, 2_000_000 // (len(p_idx) * len(t) + 1))
    for i in range(0, len(k), chunk):
        kk = ki[i : i + chunk]
        kt = np.outer(kk.astype(ld), t)
        fc = np.cos(kt) @ f.T
        fs = np.sin(kt) @ f.T
        ang = _PI_LD * (np.outer(kk, p_idx) % (2 * n_panels)).astype(ld) / n_panels
        out[i : i + chunk] = near[i : i + chunk] - np.sum(np.cos(ang) * fc - np.sin(ang) * fs, axis=1)
    total = (np.sum(fg) + np.sum(f)) / (2 * _PI_LD)
    return (out / _PI_LD).astype(float), float(total)


def fractional_laplacian_kernel_fourier(
    s: float, h: float, k_max: int, rule: QuadratureRule | None = None
) -> WeightKernel:
    """Fractional-Laplacian weights from the Fourier integral of the symbol.

    ``w_k = -(1 / (pi h^(2s))) int_0^pi (2 sin(y/2))^(2s) cos(k y) dy``,
    integrated with ``rule`` on geometrically graded panels at ``y = 0``
    (where the integrand behaves like ``y^(2s)``) and uniform panels
    resolving the oscillation elsewhere. The integral is repeated with all
    panels halved; disagreement beyond 1e-12 of the largest weight raises.

    Raises
    ------
    AccuracyError
        If the quadrature rule is too coarse for the requested weights.
    """
    s = float(s)
    if not 0.0 < s < 1.0:
        raise DomainError(f"fractional order must lie in (0, 1), got {s}")
    if k_max < 1:
        raise DomainError("k_max must be >= 1")
    rule = gauss_legendre(24) if rule is None else rule
    k = np.arange(1, int(k_max) + 1, dtype=float)
    # innermost panel [0, delta] contributes ~ delta^(1+2s): push it below 1e-17
    levels = math.ceil(17 * math.log2(10) / (1 + 2 * s)) + 2
    w1, t1 = _fourier_weights(s, k, rule, levels, 1)
    w2, t2 = _fourier_weights(s, k, rule, levels + 4, 2)
    scale = float(np.max(np.abs(w2)))
    if np.max(np.abs(w1 - w2)) > 1e-12 * scale or abs(t1 - t2) > 1e-12 * t2:
        raise AccuracyError(
            f"quadrature rule of order {rule.order} does not resolve the Fourier weights up to k={k_max}"
        )
    hs = h ** (-2 * s)
    return WeightKernel(w2 * hs, float(h), min(2 * s + 0.1, 2.0), t2 * hs, "fractional", s)


def discrete_laplacian_kernel(h: float, shift: float | None = None) -> WeightKernel:
    """Second difference with step ``shift`` on a grid of spacing ``h``.

    ``(L u)(x) = (u(x + shift) + u(x - shift) - 2 u(x)) / shift^2``. The
    default ``shift = h`` is the standard three-point Laplacian with
    ``w_1 = 1 / h^2``; ``shift`` must be a multiple of ``h``.
    """
    if not h > 0:
        raise DomainError("spacing must be positive")
    shift = float(h if shift is None else shift)
    idx = round(shift / h)
    if idx < 1 or abs(idx * h - shift) > 1e-9 * shift:
        raise DomainError(f"shift {shift} is not a positive multiple of h={h}")
    w = np.zeros(idx)
    w[-1] = 1.0 / shift**2
    return WeightKernel(w, float(h), 2.0, float(w[-1]), "discrete")


def fractional_symbol(s: float, h: float, xi):
    """Symbol of the fractional kernel: ``-(4 sin^2(xi h / 2) / h^2)^s``."""
    xi = np.asarray(xi, dtype=float)
    return -((4.0 * np.sin(0.5 * xi * h) ** 2 / h**2) ** s)


# {{{ application


def _exterior_values(grid: SpatialGrid, exterior: Callable | None, band: int):
    h = grid.h
    left = -grid.half_width - h * np.arange(band, 0, -1)
    right = grid.half_width + h * np.arange(1, band + 1)
    if exterior is None:
        return np.zeros(band), np.zeros(band)
    return np.asarray(exterior(left), dtype=float) * np.ones(band), np.asarray(exterior(right), dtype=float) * np.ones(band)


def _frozen_band(kernel: WeightKernel, grid: SpatialGrid) -> int:
    return max(kernel.k_max, grid.cells)


@numba.njit(parallel=True, cache=True)
def _circular_apply(u, wf):
    # out_j = sum_m wf[m] (u[(j+m) % P] - u[j]), m = 1..P-1
    p = u.shape[0]
    out = np.empty(p)
    for j in numba.prange(p):
        acc = 0.0
        for m in range(1, p):
            jm = j + m
            if jm >= p:
                jm -= p
            acc += wf[m] * (u[jm] - u[j])
        out[j] = acc
    return out


def _folded_weights(kernel: WeightKernel, period: int) -> np.ndarray:
    g = kernel.residue_sums(period)
    wf = g + g[(-np.arange(period)) % period]
    wf[0] = 0.0
    return wf


def apply(
    kernel: WeightKernel,
    field,
    grid: SpatialGrid,
    extension: str = "frozen",
    exterior: Callable | None = None,
) -> np.ndarray:
    """Evaluate ``L_h u`` on all grid nodes.

    Parameters
    ----------
    kernel : WeightKernel
    field : array_like, shape (M+1,)
        Values on ``grid.nodes``. For a periodic grid the last value is the
        copy of the first; an array of length ``M`` is also accepted.
    grid : SpatialGrid
    extension : {"frozen", "zero-increment", "periodic"}
    exterior : callable, optional
        ``u0(x)`` for the frozen policy (zero if omitted).
    """
    u = np.asarray(field, dtype=float)
    m = grid.cells
    if extension == "periodic":
        if not grid.periodic:
            raise DomainError("periodic extension needs a periodic grid")
        if len(u) not in (m, m + 1):
            raise DomainError("field does not match the grid")
        wf = _folded_weights(kernel, m)
        out = _circular_apply(np.ascontiguousarray(u[:m]), wf)
        return np.append(out, out[0]) if len(u) == m + 1 else out
    if len(u) != m + 1:
        raise DomainError("field does not match the grid")
    if extension == "frozen":
        band = _frozen_band(kernel, grid)
        w = kernel.weights_upto(band)
        left, right = _exterior_values(grid, exterior, band)
        ext = np.concatenate([left, u, right])
        wsym = np.concatenate([w[::-1], [0.0], w])
        nb = np.convolve(ext, wsym, mode="valid")
        tail = kernel.tail_mass(band) * (ext[0] + ext[-1])
        return nb + tail - 2.0 * kernel.total * u
    if extension == "zero-increment":
        w = kernel.weights_upto(m)
        wsym = np.concatenate([w[::-1], [0.0], w])
        padded = np.concatenate([np.zeros(m), u, np.zeros(m)])
        nb = np.convolve(padded, wsym, mode="valid")
        cw = np.concatenate([[0.0], np.cumsum(w)])
        j = np.arange(m + 1)
        reach = cw[m - j] + cw[j]
        return nb - reach * u
    raise DomainError(f"unknown extension policy {extension!r}; expected one of {EXTENSIONS}")


# }}}


# {{{ assembly


class OperatorMatrix:
    """``L_h u = N u - diag * u + affine`` on the unknowns of a grid.

    ``N`` (``neighbor``) has a zero diagonal and nonnegative entries. It is
    dense or sparse (banded kernels narrower than the window); for periodic
    grids a circulant first column is kept as well and products go through
    the FFT.
    """

    def __init__(self, neighbor, diag, affine, extension, circulant=None, tail_mass=0.0):
        self._neighbor = neighbor
        self.diag = diag
        self.affine = affine
        self.extension = extension
        self.circulant = circulant
        self.tail_mass = tail_mass
        self._eig = None

    @property
    def size(self) -> int:
        return len(self.diag)

    @property
    def neighbor(self):
        if self._neighbor is None:
            col = self.circulant.copy()
            col[0] = 0.0
            self._neighbor = linalg.circulant(col)
        return self._neighbor

    @property
    def is_sparse(self) -> bool:
        return sparse.issparse(self._neighbor)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the full circulant operator (periodic only), FFT ordering."""
        if self.circulant is None:
            raise DomainError("eigenvalues are only available for periodic operators")
        if self._eig is None:
            self._eig = np.fft.rfft(self.circulant).real
        return self._eig

    def neighbor_matvec(self, u: np.ndarray) -> np.ndarray:
        if self.circulant is not None and self._neighbor is None:
            col = self.circulant.copy()
            col[0] = 0.0
            return np.fft.irfft(np.fft.rfft(col) * np.fft.rfft(u), n=len(u))
        return self._neighbor @ u

    def matvec(self, u: np.ndarray) -> np.ndarray:
        return self.neighbor_matvec(u) - self.diag * u + self.affine

    def dense(self) -> np.ndarray:
        n = self.neighbor
        n = n.toarray() if sparse.issparse(n) else np.array(n)
        return n - np.diag(self.diag)


def assemble_matrix(
    kernel: WeightKernel,
    grid: SpatialGrid,
    extension: str = "frozen",
    exterior: Callable | None = None,
) -> OperatorMatrix:
    """Matrix form of :func:`apply` on the grid unknowns.

    Rows are independent: the neighbour part is Toeplitz (circulant when
    periodic), the diagonal holds the weight mass each node loses, and the
    frozen exterior enters through the affine term.
    """
    m = grid.cells
    if extension == "periodic":
        if not grid.periodic:
            raise DomainError("periodic extension needs a periodic grid")
        wf = _folded_weights(kernel, m)
        col = wf.copy()
        col[0] = -math.fsum(wf)
        diag = np.full(m, -col[0])
        nz = np.nonzero(wf)[0]
        if len(nz) * 4 < m:
            return OperatorMatrix(_sparse_circulant(wf, m), diag, np.zeros(m), extension, circulant=col)
        return OperatorMatrix(None, diag, np.zeros(m), extension, circulant=col)

    n = m + 1
    if extension == "frozen":
        band = _frozen_band(kernel, grid)
        w = kernel.weights_upto(band)
        left, right = _exterior_values(grid, exterior, band)
        # affine_j = sum_k w_k (ext_{j+k} + ext_{j-k}) over exterior nodes
        ext = np.concatenate([left, np.zeros(n), right])
        wsym = np.concatenate([w[::-1], [0.0], w])
        tm = kernel.tail_mass(band)
        affine = np.convolve(ext, wsym, mode="valid") + tm * (left[0] + right[-1])
        diag = np.full(n, 2.0 * kernel.total)
        neighbor = _toeplitz(kernel.weights_upto(m), n)
        return OperatorMatrix(neighbor, diag, affine, extension, tail_mass=tm)
    if extension == "zero-increment":
        w = kernel.weights_upto(m)
        cw = np.concatenate([[0.0], np.cumsum(w)])
        j = np.arange(n)
        diag = cw[m - j] + cw[j]
        neighbor = _toeplitz(w, n)
        return OperatorMatrix(neighbor, diag, np.zeros(n), extension)
    raise DomainError(f"unknown extension policy {extension!r}; expected one of {EXTENSIONS}")


def _sparse_circulant(wf: np.ndarray, p: int):
    # C[i, j] = wf[(i - j) mod p]; entry wf[m] sits on offsets -m and p - m
    offsets, diags = [], []
    for mm in np.nonzero(wf)[0]:
        for o in (-mm, p - mm):
            offsets.append(o)
            diags.append(np.full(p - abs(o), wf[mm]))
    return sparse.diags(diags, offsets, shape=(p, p), format="csr")


def _toeplitz(w: np.ndarray, n: int):
    """Symmetric Toeplitz matrix with zero diagonal and off-diagonals ``w``."""
    w = w[: n - 1]
    nz = np.nonzero(w)[0]
    if len(nz) == 0:
        return sparse.csr_matrix((n, n))
    support = nz.max() + 1
    if support < n - 1 and len(nz) * 4 < n:
        offsets = np.concatenate([-(nz + 1), nz + 1])
        diags = [np.full(n - abs(o), w[abs(o) - 1]) for o in offsets]
        return sparse.diags(diags, offsets, shape=(n, n), format="csr")
    col = np.concatenate([[0.0], w, np.zeros(n - 1 - len(w))])
    return linalg.toeplitz(col)


# }}}
