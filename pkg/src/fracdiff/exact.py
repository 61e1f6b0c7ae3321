"""Reference solutions of ``d_t^alpha u + D (-Delta)^s u = 0`` in one dimension.

The Green's function of the constant-coefficient problem is

    G(x, t) = 1 / (pi t^(alpha/2s)) * int_0^inf E_alpha(-xi^(2s)) cos(xi y) dxi,
    y = x t^(-alpha/2s),

evaluated here by Gauss-Legendre panels on a finite range plus an analytic
treatment of the slowly decaying tail (for ``alpha < 1`` the integrand
decays only like ``xi^(-2s)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special

from fracdiff.errors import AccuracyError, DomainError
from fracdiff.specfun import QuadratureRule, gauss_legendre, mittag_leffler

__all__ = [
    "ReferenceSolution",
    "green_function",
    "green_generator",
    "green_selfsimilar_solution",
    "sine_solution",
    "compact_support_solution",
]


@dataclass(frozen=True)
class ReferenceSolution:
    """Exact solution ``u(x, t)`` of one experiment.

    Attributes
    ----------
    evaluator : callable
        ``(x, t) -> u``, vectorised and broadcasting in both arguments.
    description : str
        Experiment id.
    validity : dict
        Parameter values the formula was derived for.
    """

    evaluator: Callable = field(repr=False)
    description: str
    validity: dict = field(default_factory=dict)

    def __call__(self, x, t):
        return self.evaluator(np.asarray(x, dtype=float), np.asarray(t, dtype=float))

    def initial(self, x):
        return self(x, 0.0)


# {{{ Green's function


@lru_cache(maxsize=64)
def _asymptotic_setup(alpha: float, s: float) -> tuple[float, np.ndarray]:
    """Switch point ``xi_a`` and coefficients of ``E_alpha(-z) ~ sum_k a_k z^-k``.

    For ``z = xi^(2s) >= xi_a^(2s)`` the truncated expansion is accurate to
    ~1e-16 absolutely. ``|1/Gamma(1 - alpha k)| <= Gamma(alpha k) / pi`` bounds
    the terms.
    """
    k = np.arange(1, 401)
    a = (-1.0) ** (k + 1) * special.rgamma(1.0 - alpha * k)
    log_env = np.where(alpha * k > 1, special.gammaln(alpha * k) - math.log(math.pi), 0.0)
    for z in np.geomspace(4.0, 400.0, 120):
        env = log_env - k * math.log(z)
        kmin = int(np.argmin(env))
        if env[kmin] < math.log(1e-16):
            return float(z) ** (1.0 / (2 * s)), a[:kmin].copy()
    raise AccuracyError(f"no usable large-argument expansion for alpha={alpha}")


def _f_asym(zeta, s: float, a: np.ndarray):
    # sum_k a_k zeta^(-2 s k), zeta real or complex with Re zeta > 0
    w = np.asarray(zeta) ** (-2.0 * s)
    acc = np.zeros_like(w)
    for ak in a[::-1]:
        acc = (acc + ak) * w
    return acc


def _laguerre(n=48):
    return np.polynomial.laguerre.laggauss(n)


def _tail_rotated(y: float, cutoff: float, s: float, a: np.ndarray) -> float:
    """``int_cutoff^inf f_asym(xi) cos(xi y) dxi`` via the contour ``xi = cutoff + i u / y``."""
    u, w = _laguerre()
    vals = _f_asym(cutoff + 1j * u / y, s, a)
    integral = (1j / y) * np.exp(1j * cutoff * y) * np.sum(w * vals)
    return float(integral.real)


def _panel_nodes(lo: float, hi: float, width: float, rule: QuadratureRule, graded: int = 0):
    """Nodes and weights on ``[lo, hi]``: uniform panels, optionally graded towards ``lo``."""
    if hi <= lo:
        return np.empty(0), np.empty(0)
    n_uniform = max(1, math.ceil((hi - lo) / width))
    edges = np.linspace(lo, hi, n_uniform + 1)
    if graded:
        first = edges[1]
        inner = lo + (first - lo) * 0.5 ** np.arange(graded, -1, -1)
        edges = np.concatenate([[lo], inner, edges[2:]])
    x, w = rule.scaled(edges[:-1], edges[1:])
    return x.ravel(), w.ravel()


def _stretched_nodes(lo: float, hi: float, width: float, rule: QuadratureRule):
    """Panels growing geometrically from ``lo`` (power-law scale), capped at ``width``."""
    edges = [lo]
    while edges[-1] < hi:
        e = edges[-1]
        edges.append(min(hi, e + min(0.5 * e, width)))
    edges = np.asarray(edges)
    x, w = rule.scaled(edges[:-1], edges[1:])
    return x.ravel(), w.ravel()


def _head_integrals(y: np.ndarray, f: Callable, upper: float, width: float, rule, levels: int) -> np.ndarray:
    x, w = _panel_nodes(0.0, upper, width, rule, graded=levels)
    fw = w * f(x)
    out = np.empty(len(y))
    # chunks keep the cosine matrix small
    step = max(1, 4_000_000 // max(1, len(x)))
    for i in range(0, len(y), step):
        out[i : i + step] = np.cos(np.outer(y[i : i + step], x)) @ fw
    return out


def _fourier_cosine(y, alpha: float, s: float, rule: QuadratureRule, cutoff, weight_power: float = 0.0):
    """``int_0^inf xi^p E_alpha(-xi^(2s)) cos(xi y) dxi`` for each ``y >= 0`` (``p = weight_power``)."""
    y = np.abs(np.asarray(y, dtype=float))
    levels = math.ceil(17 * math.log2(10) / (1 + 2 * s)) + 2
    ymax = float(np.max(y)) if y.size else 0.0
    width = min(1.0, math.pi / ymax) if ymax > 0 else 1.0

    if alpha == 1.0:
        span = 40.0 ** (1.0 / (2 * s))
        if cutoff is not None:
            bound = math.exp(-(cutoff ** (2 * s))) * cutoff**weight_power * max(1.0, cutoff ** (1 - 2 * s) / (2 * s))
            if bound > 1e-10:
                raise AccuracyError(f"cutoff {cutoff} leaves an integrand tail above 1e-10")
            span = min(span, cutoff)

        def f(x):
            return x**weight_power * np.exp(-(x ** (2 * s)))

        results = []
        for dens in (1, 2):
            results.append(_head_integrals(y, f, span, width / dens, rule, levels + 4 * (dens - 1)))
        _check_agreement(*results)
        return results[1]

    xi_a, coef = _asymptotic_setup(alpha, s)
    if weight_power:
        raise DomainError("weighted transforms are only provided for alpha = 1")
    if cutoff is not None and cutoff < xi_a:
        raise AccuracyError(
            f"cutoff {cutoff} is below {xi_a:.4g}, where the tail expansion reaches 1e-16 accuracy"
        )
    xi_a = xi_a if cutoff is None else float(cutoff)

    def f(x):
        return mittag_leffler(alpha, 1.0, -(x ** (2 * s)))

    results = []
    for dens in (1, 2):
        head = _head_integrals(y, f, xi_a, width / dens, rule, levels + 4 * (dens - 1))
        total = np.empty(len(y))
        for i, yi in enumerate(y):
            if yi == 0.0:
                if 2 * s <= 1:
                    raise DomainError("G(0, t) is infinite for alpha < 1 and s <= 1/2")
                kk = np.arange(1, len(coef) + 1)
                tail = float(np.sum(coef * xi_a ** (1 - 2 * s * kk) / (2 * s * kk - 1)))
                total[i] = head[i] + tail
                continue
            # stretch the range until the rotated tail integrand is smooth
            upper = max(xi_a, 30.0 / yi)
            mid = 0.0
            if upper > xi_a:
                xm, wm = _stretched_nodes(xi_a, upper, math.pi / yi / dens, rule)
                mid = float(np.sum(wm * _f_asym(xm, s, coef) * np.cos(xm * yi)))
            total[i] = head[i] + mid + _tail_rotated(yi, upper, s, coef)
        results.append(total)
    _check_agreement(*results)
    return results[1]


def _check_agreement(coarse, fine, tol=1e-9):
    scale = max(1.0, float(np.max(np.abs(fine))) if fine.size else 1.0)
    if fine.size and np.max(np.abs(coarse - fine)) > tol * scale:
        raise AccuracyError(
            f"Green's function quadrature did not settle: panel halving changed it by "
            f"{np.max(np.abs(coarse - fine)):.2e}"
        )


def green_function(x, t, alpha: float, s: float, rule: QuadratureRule | None = None, cutoff: float | None = None):
    """Fundamental solution of ``d_t^alpha u + (-Delta)^s u = 0`` on the line.

    Parameters
    ----------
    x : array_like
        Positions.
    t : float
        Time, positive.
    alpha : float
        Time order in (0, 1].
    s : float
        Space order in (0, 1].
    rule : QuadratureRule, optional
        Panel rule (32-point Gauss-Legendre by default).
    cutoff : float, optional
        Where the panel quadrature stops. For ``alpha = 1`` the discarded
        tail must be below 1e-10; for ``alpha < 1`` the large-argument
        expansion of ``E_alpha`` must already be accurate there.

    Returns
    -------
    ndarray or float

    Raises
    ------
    AccuracyError
        If the cutoff is too small or the panel refinement does not settle.
    """
    if not t > 0:
        raise DomainError("the Green's function needs t > 0")
    if not 0 < alpha <= 1 or not 0 < s <= 1:
        raise DomainError("need 0 < alpha <= 1 and 0 < s <= 1")
    rule = gauss_legendre(32) if rule is None else rule
    xa = np.asarray(x, dtype=float)
    scale = t ** (-alpha / (2 * s))
    y = np.abs(xa.ravel()) * scale
    # evaluate each distinct |x| once; symmetric inputs share values
    uy, inv = np.unique(y, return_inverse=True)
    vals = _fourier_cosine(uy, float(alpha), float(s), rule, cutoff)[inv]
    out = (scale / math.pi) * vals.reshape(xa.shape)
    return float(out) if out.ndim == 0 else out


def green_generator(x, t, s: float, rule: QuadratureRule | None = None):
    """``-(-Delta)^s G(., t)`` for ``alpha = 1``, equal to ``d_t G``.

    Used for operator-only checks of the spatial discretisation against the
    alpha = 1 self-similar solution.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    rule = gauss_legendre(32) if rule is None else rule
    xa = np.asarray(x, dtype=float)
    scale = t ** (-1.0 / (2 * s))
    y = np.abs(xa.ravel()) * scale
    uy, inv = np.unique(y, return_inverse=True)
    vals = _fourier_cosine(uy, 1.0, float(s), rule, None, weight_power=2 * s)[inv]
    out = -(scale ** (1 + 2 * s) / math.pi) * vals.reshape(xa.shape)
    return float(out) if out.ndim == 0 else out


# }}}


def green_selfsimilar_solution(s: float, alpha: float = 1.0) -> ReferenceSolution:
    """``u(x, t) = G(x, t + 1)`` with ``u0 = G(., 1)``; exact only for ``alpha = 1``."""
    if alpha != 1.0:
        raise DomainError("the self-similar Green's solution is exact only for alpha = 1")

    def ev(x, t):
        x, t = np.broadcast_arrays(x, t)
        out = np.empty(x.shape)
        for tv in np.unique(t):
            sel = t == tv
            out[sel] = green_function(x[sel], float(tv) + 1.0, 1.0, s)
        return out

    return ReferenceSolution(ev, "green-alpha1", {"alpha": 1.0, "s": s})


def sine_solution(alpha: float, s: float) -> ReferenceSolution:
    """``u(x, t) = E_alpha(-t^alpha) sin x``; ``sin`` is an eigenfunction of ``(-Delta)^s`` with eigenvalue 1."""
    if not 0 < alpha <= 1 or not 0 <= s <= 1:
        raise DomainError("sine solution needs 0 < alpha <= 1, 0 <= s <= 1")

    def ev(x, t):
        return mittag_leffler(alpha, 1.0, -(t**alpha)) * np.sin(x)

    return ReferenceSolution(ev, "sine-eigen", {"alpha": alpha, "s": s})


def _bump(x, s: float):
    # (1 - x^2)_+^s / Gamma(1 + 2s); 1 - x^2 formed as (1 - x)(1 + x) and raised in log space
    x = np.asarray(x, dtype=float)
    q = (1.0 - x) * (1.0 + x)
    out = np.zeros(q.shape)
    pos = q > 0
    out[pos] = np.exp(s * np.log(q[pos]) - special.gammaln(1.0 + 2.0 * s))
    return out


def compact_support_solution(alpha: float, s: float):
    """Exact solution with diffusivity supported in ``[-1, 1]``.

    Returns
    -------
    reference : ReferenceSolution
        ``u(x, t) = E_alpha(-t^alpha) (1 - x^2)_+^s / Gamma(1 + 2s)``.
    diffusivity : callable
        ``D(x, t) = (1 - x^2)_+^s / Gamma(1 + 2s)``.
    initial : callable
        ``u0 = u(., 0)``.
    """
    if not 0 < alpha < 1 or not 0 < s < 1:
        raise DomainError("compact-support solution needs alpha, s in (0, 1)")

    def ev(x, t):
        return mittag_leffler(alpha, 1.0, -(t**alpha)) * _bump(x, s)

    def diffusivity(x, t=0.0):
        return _bump(x, s) + 0.0 * np.asarray(t)

    def initial(x):
        return _bump(x, s)

    ref = ReferenceSolution(ev, "compact-support", {"alpha": alpha, "s": s})
    return ref, diffusivity, initial
