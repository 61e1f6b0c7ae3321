"""Error norms, convergence-order estimates and executable inequality checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from fracdiff.errors import DegenerateEstimateError, DomainError
from fracdiff.specfun import mittag_leffler
from fracdiff.timefrac import TimeMesh, l1_coefficients, memory_sum

__all__ = [
    "ErrorReport",
    "OrderEstimate",
    "GronwallInstance",
    "ValidationResult",
    "TruncationTable",
    "sup_error",
    "aitken_order",
    "difference_norm",
    "order_from_runs",
    "slope_fit",
    "l1_derivatives",
    "gronwall_validate",
    "gronwall_simple_validate",
    "equality_sequence",
    "truncation_probe",
    "tech_inequality_check",
]

PASS, FAIL, NOT_APPLICABLE = "PASS", "FAIL", "NOT_APPLICABLE"


# {{{ errors and orders


@dataclass
class ErrorReport:
    """Sup-norm errors of one run against a reference.

    ``sup_space_time`` is the maximum over every node and every time level
    ``t_1 .. t_N``; ``sup_at_T`` the maximum over the nodes at ``t_N``.
    """

    sup_space_time: float
    sup_at_T: float
    per_step: np.ndarray = field(repr=False)
    alpha: float = float("nan")
    s: float | None = None
    h: float = float("nan")
    tau: float = float("nan")
    X: float = float("nan")
    T: float = float("nan")


def sup_error(history, reference, s: float | None = None, region: Callable | None = None) -> ErrorReport:
    """Compare a :class:`~fracdiff.solver.SolutionHistory` with a reference.

    Parameters
    ----------
    history : SolutionHistory
    reference : ReferenceSolution, callable or ndarray
        ``u(x, t)`` evaluated on the run's nodes and times, or an array of
        frames of the same shape as ``history.frames``.
    s : float, optional
        Recorded in the report.
    region : callable, optional
        Boolean mask ``region(x)`` restricting the nodes compared.
    """
    n = history.filled
    frames = history.frames[:n]
    x = history.grid.nodes
    t = history.mesh.times[:n]
    if isinstance(reference, np.ndarray):
        exact = reference[:n]
    else:
        exact = np.asarray(reference(x[None, :], t[:, None]), dtype=float)
        exact = np.broadcast_to(exact, frames.shape)
    diff = np.abs(frames - exact)
    if region is not None:
        diff = diff[:, np.asarray(region(x), dtype=bool)]
    per_step = diff.max(axis=1)
    return ErrorReport(
        sup_space_time=float(per_step[1:].max()) if n > 1 else float(per_step[0]),
        sup_at_T=float(per_step[-1]),
        per_step=per_step,
        alpha=history.spec.alpha,
        s=s,
        h=history.grid.h,
        tau=history.mesh.tau,
        X=history.grid.half_width,
        T=float(t[-1]),
    )


@dataclass(frozen=True)
class OrderEstimate:
    """Aitken estimate ``p = log2(d_1 / d_2)`` from successive differences."""

    parameter: str
    differences: tuple
    estimated_p: float


def aitken_order(values: Sequence[float], parameter: str = "tau", kind: str = "differences") -> OrderEstimate:
    """Order from a halving sequence.

    Parameters
    ----------
    values : sequence of float
        With ``kind="differences"``: the norms ``||U_e - U_e/2||`` and
        ``||U_e/2 - U_e/4||`` (two values). With ``kind="errors"``: three or
        more errors ``e(eps), e(eps/2), e(eps/4)``; their successive
        differences are used, which removes any error floor common to the
        whole sequence (for instance a fixed time error during a study in
        ``h``). Only the last three errors enter.

    Raises
    ------
    DegenerateEstimateError
        If a difference vanishes.
    """
    v = [float(a) for a in values]
    if kind == "errors":
        if len(v) < 3:
            raise ValueError("need three errors")
        e1, e2, e3 = v[-3:]
        d = (abs(e1 - e2), abs(e2 - e3))
    elif kind == "differences":
        if len(v) != 2:
            raise ValueError("need exactly two difference norms")
        d = (abs(v[0]), abs(v[1]))
    else:
        raise ValueError(f"unknown kind {kind!r}")
    if d[1] == 0.0 or d[0] == 0.0 or not all(math.isfinite(q) for q in d):
        raise DegenerateEstimateError(f"cannot estimate an order from differences {d}")
    return OrderEstimate(parameter, d, math.log2(d[0] / d[1]))


def _restrict(frames: np.ndarray, parameter: str, factor: int) -> np.ndarray:
    if parameter == "tau":
        return frames[::factor]
    if parameter == "h":
        return frames[:, ::factor]
    raise ValueError(f"unknown parameter {parameter!r}")


def _check_refinement(coarse: np.ndarray, fine: np.ndarray, parameter: str, factor: int):
    axis = 0 if parameter == "tau" else 1
    other = 1 - axis
    if (fine.shape[axis] - 1) != factor * (coarse.shape[axis] - 1) or fine.shape[other] != coarse.shape[other]:
        raise DomainError(f"runs are not a {factor}x refinement in {parameter}")


def difference_norm(coarse, fine, parameter: str, factor: int = 2) -> float:
    """``max |U_coarse - U_fine|`` over the coarse space-time grid.

    ``coarse`` and ``fine`` are SolutionHistory objects (or frame arrays);
    ``fine`` is refined by ``factor`` in ``parameter``. Fine values are
    sampled at every ``factor``-th time level (``"tau"``) or node (``"h"``);
    no interpolation is done. The initial level is excluded.
    """
    a = getattr(coarse, "frames", coarse)
    b = getattr(fine, "frames", fine)
    if parameter not in ("tau", "h"):
        raise ValueError(f"unknown parameter {parameter!r}")
    _check_refinement(a, b, parameter, factor)
    return float(np.max(np.abs(a[1:] - _restrict(b, parameter, factor)[1:])))


def order_from_runs(runs: Sequence, parameter: str) -> OrderEstimate:
    """Aitken order from three runs at ``eps``, ``eps/2``, ``eps/4``.

    Both differences are measured on the grid of the coarsest run (every
    second and fourth level or node of the finer runs), over all of
    ``(0, T]``.
    """
    if len(runs) != 3:
        raise ValueError("need three runs")
    a, b, c = (getattr(r, "frames", r) for r in runs)
    _check_refinement(a, b, parameter, 2)
    _check_refinement(b, c, parameter, 2)
    b = _restrict(b, parameter, 2)
    c = _restrict(c, parameter, 4)
    d1 = float(np.max(np.abs(a[1:] - b[1:])))
    d2 = float(np.max(np.abs(b[1:] - c[1:])))
    return aitken_order((d1, d2), parameter)


def slope_fit(params, errors) -> float:
    """Least-squares slope of ``log(errors)`` against ``log(params)``."""
    p = np.log(np.asarray(params, dtype=float))
    e = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(p, e, 1)[0])


# }}}


# {{{ Gronwall inequalities


def l1_derivatives(y, alpha: float, tau: float, flavor: str = "caputo") -> np.ndarray:
    """Discrete derivatives at ``n = 1 .. N`` of a scalar sequence ``y^0 .. y^N``."""
    y = np.asarray(y, dtype=float)
    n_steps = len(y) - 1
    c = l1_coefficients(alpha, TimeMesh(tau, n_steps))
    out = np.empty(n_steps)
    for n in range(1, n_steps + 1):
        out[n - 1] = c.scale * (y[n] - memory_sum(y, c, n, flavor))
    return out


def _fractional_integral(F, alpha: float, tau: float) -> np.ndarray:
    # I_n = tau^alpha / Gamma(alpha) sum_{k=0}^{n-1} (n-k)^(alpha-1) F^{k+1},  n = 1..N
    F = np.asarray(F, dtype=float)
    n_steps = len(F) - 1
    kern = np.arange(1, n_steps + 1, dtype=float) ** (alpha - 1)
    conv = np.convolve(kern, F[1:])[:n_steps]
    return tau**alpha / math.gamma(alpha) * conv


@dataclass
class GronwallInstance:
    """Data of the discrete fractional Gronwall inequality (differential form).

    Attributes
    ----------
    alpha, tau : float
    lambda0, lambda1 : float
        Nonnegative coefficients of ``y^n`` and ``y^{n-1}``.
    F : ndarray
        Forcing ``F^0 .. F^N`` (``F^0`` unused).
    F1, F2 : float, optional
        Constants with ``I_n <= F1 + t_n^(alpha-1) F2`` for the discrete
        fractional integral ``I_n`` of ``F``. Default: ``F2 = 0`` and
        ``F1 = max_n I_n``.
    flavor : {"caputo", "rl"}
    tau0 : float, optional
        Step bound entering the constant ``M``; defaults to ``tau``. Must
        satisfy ``tau <= tau0 < (lambda0 Gamma(2-alpha))^(-1/alpha)``.
    """

    alpha: float
    tau: float
    lambda0: float
    lambda1: float
    F: np.ndarray
    F1: float | None = None
    F2: float = 0.0
    flavor: str = "caputo"
    tau0: float | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if self.lambda0 < 0 or self.lambda1 < 0:
            raise DomainError("lambda0, lambda1 must be nonnegative")
        if self.flavor not in ("caputo", "rl"):
            raise DomainError(f"unknown flavor {self.flavor!r}")
        self.F = np.asarray(self.F, dtype=float)
        if self.tau0 is None:
            self.tau0 = self.tau
        if self.tau > self.tau0:
            raise DomainError("tau must not exceed tau0")
        if self.lambda0 > 0 and self.tau0 >= self.tau_max:
            raise DomainError(f"tau0={self.tau0} violates tau0 < {self.tau_max}")
        if self.F1 is None:
            self.F1 = float(max(0.0, _fractional_integral(self.F, self.alpha, self.tau).max(initial=0.0)))

    @property
    def steps(self) -> int:
        return len(self.F) - 1

    @property
    def tau_max(self) -> float:
        """``(lambda0 Gamma(2 - alpha))^(-1/alpha)`` (infinite for ``lambda0 = 0``)."""
        if self.lambda0 == 0:
            return math.inf
        return (self.lambda0 * math.gamma(2 - self.alpha)) ** (-1 / self.alpha)

    @property
    def M(self) -> float:
        g2 = math.gamma(2 - self.alpha)
        return math.gamma(self.alpha) * g2 / (1 - self.lambda0 * self.tau0**self.alpha * g2)

    def bound(self, y0: float) -> np.ndarray:
        """Right-hand side of the lemma at ``n = 0 .. N`` (``inf`` where it is vacuous)."""
        a = self.alpha
        t = self.tau * np.arange(self.steps + 1)
        lam = 2 * max(self.lambda0, self.lambda1) * self.M
        arg = lam * t**a
        e_a = mittag_leffler(a, 1.0, arg)
        e_aa = mittag_leffler(a, a, arg)
        with np.errstate(divide="ignore"):
            tpow = np.where(t > 0, t ** (a - 1), np.inf)
        ga = math.gamma(a)
        if self.flavor == "rl":
            lead = (y0 * self.tau ** (1 - a) + self.M * self.F2) * ga * e_aa * tpow
            return lead + self.M * e_a * self.F1
        denom = 1 - self.lambda0 * self.tau0**a * math.gamma(2 - a)
        lead = self.M * ga * e_aa * self.F2 * tpow if self.F2 > 0 else 0.0
        return lead + e_a / denom * (y0 + ga * math.gamma(2 - a) * self.F1)


@dataclass
class ValidationResult:
    """Outcome of an executable inequality check.

    ``margin`` is the smallest slack ``bound - value`` (negative on failure).
    """

    status: str
    margin: float = float("nan")
    detail: str = ""
    bounds: np.ndarray | None = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.status == PASS


_SLACK = 1e-9


def gronwall_validate(instance: GronwallInstance, y) -> ValidationResult:
    """Check the conclusion of the differential Gronwall lemma on ``y``.

    The hypotheses (nonnegativity, the inequality for the discrete
    derivative, the bound on the discrete fractional integral of ``F``) are
    verified first; if any fails the result is ``NOT_APPLICABLE``. All
    comparisons carry an absolute slack of 1e-9.
    """
    y = np.asarray(y, dtype=float)
    inst = instance
    if len(y) != inst.steps + 1:
        raise DomainError("y and F must have the same length")
    if np.any(y < 0) or np.any(inst.F[1:] < 0):
        return ValidationResult(NOT_APPLICABLE, detail="sequences must be nonnegative")
    d = l1_derivatives(y, inst.alpha, inst.tau, inst.flavor)
    rhs = inst.lambda0 * y[1:] + inst.lambda1 * y[:-1] + inst.F[1:]
    if np.any(d > rhs + _SLACK * (1 + np.abs(rhs))):
        n = int(np.argmax(d - rhs)) + 1
        return ValidationResult(NOT_APPLICABLE, detail=f"hypothesis fails at n={n}")
    t = inst.tau * np.arange(1, inst.steps + 1)
    integ = _fractional_integral(inst.F, inst.alpha, inst.tau)
    if np.any(integ > inst.F1 + t ** (inst.alpha - 1) * inst.F2 + _SLACK):
        return ValidationResult(NOT_APPLICABLE, detail="F1, F2 do not bound the fractional integral of F")
    b = inst.bound(float(y[0]))
    return _compare(y, b)


def _compare(y, b) -> ValidationResult:
    finite = np.isfinite(b)
    gap = np.where(finite, b - y, np.inf)
    margin = float(gap.min())
    if margin < -_SLACK:
        n = int(np.argmin(gap))
        return ValidationResult(FAIL, margin, f"bound violated at n={n}: y={y[n]!r} > {b[n]!r}", b)
    return ValidationResult(PASS, margin, "", b)


def gronwall_simple_validate(alpha: float, tau: float, G: float, y, flavor: str = "caputo") -> ValidationResult:
    """Special case ``lambda0 = lambda1 = 0``, ``F = G``.

    Caputo: ``y^n <= y^0 + Gamma(2-alpha)/alpha t_n^alpha G``.
    Riemann-Liouville: ``y^n <= y^0 tau^(1-alpha) t_n^(alpha-1) + Gamma(2-alpha)/alpha t_n^alpha G``.
    """
    y = np.asarray(y, dtype=float)
    if G <= 0 or np.any(y < 0):
        return ValidationResult(NOT_APPLICABLE, detail="needs G > 0 and y >= 0")
    d = l1_derivatives(y, alpha, tau, flavor)
    if np.any(d > G + _SLACK * (1 + G)):
        return ValidationResult(NOT_APPLICABLE, detail="discrete derivative exceeds G")
    t = tau * np.arange(len(y))
    growth = math.gamma(2 - alpha) / alpha * t**alpha * G
    if flavor == "caputo":
        b = y[0] + growth
    else:
        with np.errstate(divide="ignore"):
            b = np.where(t > 0, y[0] * tau ** (1 - alpha) * t ** (alpha - 1), np.inf) + growth
    return _compare(y, b)


def equality_sequence(instance: GronwallInstance, y0: float) -> np.ndarray:
    """Sequence with ``d^alpha y^n = lambda0 y^n + lambda1 y^{n-1} + F^n`` exactly."""
    inst = instance
    c = l1_coefficients(inst.alpha, TimeMesh(inst.tau, inst.steps))
    if c.scale <= inst.lambda0:
        raise DomainError("tau too large: the implicit recursion is not solvable")
    y = np.empty(inst.steps + 1)
    y[0] = y0
    for n in range(1, inst.steps + 1):
        mem = memory_sum(y, c, n, inst.flavor)
        y[n] = (c.scale * mem + inst.lambda1 * y[n - 1] + inst.F[n]) / (c.scale - inst.lambda0)
    return y


# }}}


# {{{ truncation and technical checks


@dataclass
class TruncationTable:
    """``|d_t^alpha y(t_n) - L1(y)(t_n)|`` for several meshes."""

    alpha: float
    taus: np.ndarray
    errors: list = field(repr=False)

    def at_time(self, t: float) -> np.ndarray:
        """Error at time ``t`` on each mesh (``t`` must be a node of all of them)."""
        out = []
        for tau, err in zip(self.taus, self.errors):
            n = round(t / tau)
            if abs(n * tau - t) > 1e-9 * max(1.0, t) or n < 1:
                raise DomainError(f"t={t} is not a positive node of the mesh tau={tau}")
            out.append(err[n - 1])
        return np.asarray(out)

    def slope_at(self, t: float) -> float:
        return slope_fit(self.taus, self.at_time(t))

    def bound_constants(self) -> np.ndarray:
        """Per mesh, ``max_{n>1} error / (t_{n-1}^(alpha-1) tau^(1-alpha))``."""
        a = self.alpha
        out = []
        for tau, err in zip(self.taus, self.errors):
            n = np.arange(2, len(err) + 1)
            ref = ((n - 1) * tau) ** (a - 1) * tau ** (1 - a)
            out.append(float(np.max(err[1:] / ref)))
        return np.asarray(out)

    def first_step(self) -> np.ndarray:
        return np.asarray([err[0] for err in self.errors])


def truncation_probe(y: Callable, derivative: Callable, alpha: float, taus, T: float = 1.0) -> TruncationTable:
    """Measure the L1 truncation error of a function with known Caputo derivative.

    Parameters
    ----------
    y : callable
        The function, vectorised in ``t``.
    derivative : callable
        Its exact Caputo derivative of order ``alpha``.
    alpha : float
    taus : sequence of float
        Mesh widths; ``T`` must be a multiple of each.
    T : float
    """
    taus = np.asarray(taus, dtype=float)
    errors = []
    for tau in taus:
        mesh = TimeMesh.from_horizon(T, tau)
        vals = np.asarray(y(mesh.times), dtype=float)
        d = l1_derivatives(vals, alpha, tau)
        errors.append(np.abs(np.asarray(derivative(mesh.times[1:]), dtype=float) - d))
    return TruncationTable(alpha, taus, errors)


def tech_inequality_check(a: float, b: float, beta: float) -> ValidationResult:
    """``beta a^(beta-1) (a-b) <= a^beta - b^beta <= a^(beta-1) (a-b)`` for ``a >= b > 0``.

    The middle term is formed as ``-a^beta expm1(beta log1p((b-a)/a))`` to keep
    its relative accuracy when ``b`` is close to ``a``; comparisons allow a
    relative slack of 1e-13.
    """
    if not (a >= b > 0) or not (0 < beta <= 1):
        return ValidationResult(NOT_APPLICABLE, detail="needs a >= b > 0 and 0 < beta <= 1")
    ab = a**beta
    mid = -ab * math.expm1(beta * math.log1p((b - a) / a))
    lo = beta * ab / a * (a - b)
    hi = ab / a * (a - b)
    slack = 1e-13 * max(lo, hi, abs(mid))
    margin = min(mid - lo, hi - mid)
    if margin < -slack:
        return ValidationResult(FAIL, margin, f"{lo!r} <= {mid!r} <= {hi!r} fails")
    return ValidationResult(PASS, margin)


# }}}
