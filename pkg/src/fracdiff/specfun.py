"""Special functions used by the weight kernels and the reference solutions.

Gamma and log-Gamma wrap the C library (``math``) and ``scipy.special``; the
two-parameter Mittag-Leffler function, the large-argument expansion of Gamma
ratios and the Gauss-Legendre rules are implemented here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from fracdiff.errors import AccuracyError, DomainError

__all__ = [
    "QuadratureRule",
    "gamma",
    "log_gamma",
    "rgamma",
    "log_gamma_ratio",
    "bernoulli_poly",
    "mittag_leffler",
    "gauss_legendre",
]


def _is_pole(x: float) -> bool:
    return x <= 0.0 and float(x).is_integer()


def gamma(x: float) -> float:
    """Gamma function of a real argument.

    Raises
    ------
    DomainError
        If ``x`` is zero or a negative integer.
    """
    x = float(x)
    if _is_pole(x):
        raise DomainError(f"Gamma has a pole at x={x}")
    if x > 171.6:
        return math.inf
    return math.gamma(x)


def log_gamma(x: float) -> float:
    """``log|Gamma(x)|``; finite for large arguments where Gamma overflows."""
    x = float(x)
    if _is_pole(x):
        raise DomainError(f"Gamma has a pole at x={x}")
    return math.lgamma(x)


def rgamma(x):
    """Reciprocal Gamma ``1/Gamma(x)``, zero at the poles. Vectorised."""
    return special.rgamma(x)


@lru_cache(maxsize=None)
def _bernoulli_numbers(n: int) -> tuple[float, ...]:
    return tuple(float(b) for b in special.bernoulli(n))


def bernoulli_poly(n: int, x: float) -> float:
    """Bernoulli polynomial ``B_n(x)``."""
    bn = _bernoulli_numbers(max(n, 1))
    return math.fsum(math.comb(n, k) * bn[k] * x ** (n - k) for k in range(n + 1))


def log_gamma_ratio(z, a: float, b: float, *, switch: float = 128.0, terms: int = 10):
    """``log(Gamma(z + a) / Gamma(z + b))`` for positive ``z + a`` and ``z + b``.

    Below ``switch`` this is a difference of log-Gamma values. Above it the
    large-``z`` expansion

        (a - b) log z + sum_n (-1)^(n+1) [B_{n+1}(a) - B_{n+1}(b)] / (n (n+1) z^n)

    is summed, which keeps full relative accuracy where the two log-Gamma
    values are individually large.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < switch
    if np.any(small):
        out[small] = special.gammaln(z[small] + a) - special.gammaln(z[small] + b)
    if np.any(~small):
        zl = z[~small]
        acc = (a - b) * np.log(zl)
        for n in range(1, terms + 1):
            c = (-1) ** (n + 1) * (bernoulli_poly(n + 1, a) - bernoulli_poly(n + 1, b)) / (n * (n + 1))
            acc = acc + c / zl**n
        out[~small] = acc
    return out if out.ndim else float(out)


# {{{ Gauss-Legendre


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre nodes and weights on ``[-1, 1]``."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def scaled(self, a, b):
        """Nodes and weights mapped to ``[a, b]``; ``a`` and ``b`` may be arrays of panels."""
        a = np.asarray(a, dtype=float)[..., None]
        b = np.asarray(b, dtype=float)[..., None]
        half = 0.5 * (b - a)
        x = 0.5 * (a + b) + half * self.nodes
        w = half * self.weights
        return x, w

    def integrate(self, f, a: float, b: float) -> float:
        x, w = self.scaled(a, b)
        return float(np.sum(w * f(x)))


@lru_cache(maxsize=64)
def gauss_legendre(order: int) -> QuadratureRule:
    """Gauss-Legendre rule with ``order`` nodes.

    Nodes are found by Newton iteration on the Legendre polynomial, started
    from the Tricomi approximation and stopped once every update is below
    1e-15.
    """
    n = int(order)
    if n < 1:
        raise DomainError("quadrature order must be >= 1")
    if n == 1:
        nodes, weights = np.array([0.0]), np.array([2.0])
    else:
        i = np.arange(1, n + 1)
        x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
        for _ in range(100):
            p0 = np.ones_like(x)
            p1 = x.copy()
            for k in range(2, n + 1):
                p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
            dp = n * (x * p1 - p0) / (x * x - 1.0)
            dx = p1 / dp
            x = x - dx
            if np.max(np.abs(dx)) < 1e-15:
                break
        p0 = np.ones_like(x)
        p1 = x.copy()
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        weights = 2.0 / ((1.0 - x * x) * dp * dp)
        order_idx = np.argsort(x)
        nodes, weights = x[order_idx], weights[order_idx]
        # exact antisymmetry of the nodes
        nodes = 0.5 * (nodes - nodes[::-1])
        weights = 0.5 * (weights + weights[::-1])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes=nodes, weights=weights, order=n)


# }}}


# {{{ Mittag-Leffler

# alternating series are accepted while sum |terms| stays below this, which
# bounds the cancellation error by roughly 1e3 * eps
_SERIES_ABS_BUDGET = 1.0e3
_SERIES_MAX_TERMS = 20000


def _ml_series(alpha: float, beta: float, z: float):
    """Taylor series; returns ``(value, sum_of_abs_terms)`` or ``None``."""
    if z == 0.0:
        return float(rgamma(beta)), abs(float(rgamma(beta)))
    logz = math.log(abs(z))
    negative = z < 0
    terms = []
    abs_sum = 0.0
    prev = math.inf
    for k in range(_SERIES_MAX_TERMS):
        arg = alpha * k + beta
        if arg < 170.0 and k * logz < 690.0:
            t = z**k * float(rgamma(arg))
        else:
            lt = k * logz - math.lgamma(arg)
            if lt > 700.0:
                return None
            t = math.exp(lt)
            if negative and k % 2:
                t = -t
        at = abs(t)
        if negative and at > _SERIES_ABS_BUDGET:
            return None
        terms.append(t)
        abs_sum += at
        if at <= 1e-18 * abs_sum and at <= prev and k > 2:
            break
        prev = at
    else:
        return None
    return math.fsum(terms), abs_sum


def _ml_asymptotic(alpha: float, beta: float, z: float):
    """Algebraic expansion for large negative ``z`` (0 < alpha < 1)."""
    # terms near poles of Gamma vanish by accident, so truncation is judged
    # on the envelope |1/Gamma(x)| <= Gamma(1 - x)/pi (x < 0)
    terms = []
    best = math.inf
    logz = math.log(-z)
    for k in range(1, 400):
        x = beta - alpha * k
        t = -(z ** (-k)) * float(rgamma(x))
        if x <= 0.0:
            env = math.exp(math.lgamma(1.0 - x) - k * logz) / math.pi
        else:
            env = abs(t)
        if env > best and x < 0.0:
            break
        best = min(best, env)
        terms.append(t)
        if env < 1e-18 * abs(math.fsum(terms)):
            break
    if best > 1e-15:
        return None
    return math.fsum(terms)


def _ml_integral(alpha: float, beta: float, z: float) -> float:
    """Real-line integral representation for 0 < alpha < 1, z < 0 and beta <= 1."""
    p = (1.0 - beta) / alpha
    s1 = math.sin(math.pi * (1.0 - beta))
    s2 = math.sin(math.pi * (1.0 - beta + alpha))
    ca = math.cos(alpha * math.pi)
    chi_max = 60.0**alpha

    def rational(chi):
        return math.exp(-(chi ** (1.0 / alpha))) * (chi * s1 - z * s2) / (chi * chi - 2.0 * z * chi * ca + z * z)

    opts = dict(epsabs=1e-15, epsrel=1e-13, limit=400)
    points = [abs(z)] if abs(z) < chi_max else None
    total, _ = integrate.quad(lambda c: c**p * rational(c), 0.0, chi_max, points=points, **opts)
    return total / (alpha * math.pi)


def _ml_scalar(alpha: float, beta: float, z: float) -> float:
    if z == 0.0:
        return float(rgamma(beta))
    if alpha == 1.0 and beta == 1.0:
        return math.exp(z)
    res = _ml_series(alpha, beta, z)
    if res is not None:
        return res[0]
    if z > 0.0:
        if alpha < 1.0 and beta > 1.0:
            return (_ml_scalar(alpha, beta - alpha, z) - float(rgamma(beta - alpha))) / z
        if alpha < 1.0:
            # pole contribution dominates; add the real-line integral
            lead = z ** (1.0 / alpha)
            if lead > 709.0:
                return math.inf
            pole = z ** ((1.0 - beta) / alpha) * math.exp(lead) / alpha
            return pole + _ml_integral_positive(alpha, beta, z)
        raise AccuracyError(f"Mittag-Leffler E_({alpha},{beta})({z}): series overflow")
    if not alpha < 1.0:
        raise AccuracyError(
            f"Mittag-Leffler E_({alpha},{beta})({z}): accuracy not guaranteed for alpha >= 1 and large negative z"
        )
    if beta > 1.0:
        # keeps the integral kernel free of the chi^((1-beta)/alpha) singularity
        return (_ml_scalar(alpha, beta - alpha, z) - float(rgamma(beta - alpha))) / z
    asym = _ml_asymptotic(alpha, beta, z)
    if asym is not None:
        return asym
    return _ml_integral(alpha, beta, z)


def _ml_integral_positive(alpha: float, beta: float, z: float) -> float:
    p = (1.0 - beta) / alpha
    s1 = math.sin(math.pi * (1.0 - beta))
    s2 = math.sin(math.pi * (1.0 - beta + alpha))
    ca = math.cos(alpha * math.pi)

    def f(chi):
        return chi**p * math.exp(-(chi ** (1.0 / alpha))) * (chi * s1 - z * s2) / (chi * chi - 2.0 * z * chi * ca + z * z)

    val, _ = integrate.quad(f, 0.0, 60.0**alpha, epsabs=1e-15, epsrel=1e-13, limit=400)
    return val / (alpha * math.pi)


def mittag_leffler(alpha: float, beta: float, z):
    """Two-parameter Mittag-Leffler function ``E_{alpha,beta}(z)`` for real ``z``.

    Parameters
    ----------
    alpha, beta : float
        Positive parameters.
    z : float or array_like
        Real argument(s).

    Notes
    -----
    The Taylor series (summed with ``math.fsum``) is used whenever its
    terms stay small enough for the cancellation error to be negligible.
    Beyond that, for ``0 < alpha < 1`` and negative ``z``, the algebraic
    large-argument expansion is used when its smallest term is below 1e-14,
    and the real-line integral representation otherwise. ``beta > 1`` is
    first reduced with ``E_{a,b}(z) = (E_{a,b-a}(z) - 1/Gamma(b-a)) / z``.

    Raises
    ------
    DomainError
        For non-positive ``alpha`` or ``beta``.
    AccuracyError
        Where none of the branches can guarantee accuracy (``alpha >= 1``
        with large negative arguments, other than ``alpha = beta = 1``).
    """
    alpha = float(alpha)
    beta = float(beta)
    if not (alpha > 0.0 and beta > 0.0):
        raise DomainError("Mittag-Leffler requires alpha > 0 and beta > 0")
    zarr = np.asarray(z, dtype=float)
    if zarr.ndim == 0:
        return _ml_scalar(alpha, beta, float(zarr))
    flat = zarr.ravel()
    out = np.empty_like(flat)
    # repeated arguments are common (E(-t^alpha) on a time grid); evaluate once
    uniq, inv = np.unique(flat, return_inverse=True)
    vals = np.array([_ml_scalar(alpha, beta, float(v)) for v in uniq])
    out[:] = vals[inv]
    return out.reshape(zarr.shape)


# }}}
