"""Implicit time marching for ``d_t^alpha u = D(x, t) L_h u``.

Each step solves

    U^n_j - c_j (L_h U^n)_j = f_j,    c_j = D(x_j, t_n) Gamma(2 - alpha) tau^alpha,

where ``f`` is the L1 history term built from ``U^0 .. U^{n-1}``. With
``L_h U = N U - d * U + a`` (neighbour part, diagonal, exterior data) this
is either iterated as the contraction

    psi -> (c (N psi + a) + f) / (1 + c d)

or solved directly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from fracdiff.errors import ConvergenceError, DomainError
from fracdiff.spaceop import EXTENSIONS, OperatorMatrix, SpatialGrid, WeightKernel, assemble_matrix
from fracdiff.timefrac import L1Coefficients, TimeMesh, l1_coefficients, memory_sum

__all__ = [
    "ProblemSpec",
    "SolutionHistory",
    "StepReport",
    "step_fixed_point",
    "step_direct",
    "march",
]

logger = logging.getLogger(__name__)

# above this contraction bound the fixed-point map is too slow to be the default
_DIRECT_THRESHOLD = 0.9


def _as_field_function(value) -> Callable:
    if callable(value):
        return value
    c = float(value)
    return lambda x, *_: np.full(np.shape(x), c)


@dataclass(frozen=True)
class ProblemSpec:
    """Everything that defines one run of the scheme.

    Attributes
    ----------
    alpha : float
        Caputo order in (0, 1).
    kernel : WeightKernel
        Spatial weights; their spacing must match ``grid.h``.
    diffusivity : callable or float
        ``D(x, t)``, vectorised in ``x``. Sampled at ``(x_j, t_n)`` and
        checked to be nonnegative at construction.
    initial : callable
        ``u0(x)``. Also supplies exterior values for the frozen extension.
    grid : SpatialGrid
    mesh : TimeMesh
    extension : str
        ``"frozen"`` (default), ``"zero-increment"`` or ``"periodic"``.
    """

    alpha: float
    kernel: WeightKernel
    diffusivity: Callable | float
    initial: Callable
    grid: SpatialGrid
    mesh: TimeMesh
    extension: str = "frozen"
    d_table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"the L1 scheme needs 0 < alpha < 1, got {self.alpha}")
        if self.extension not in EXTENSIONS:
            raise DomainError(f"unknown extension policy {self.extension!r}")
        if (self.extension == "periodic") != self.grid.periodic:
            raise DomainError("the periodic extension goes with a periodic grid (and only with it)")
        if abs(self.kernel.spacing - self.grid.h) > 1e-12 * self.grid.h:
            raise DomainError(f"kernel spacing {self.kernel.spacing} differs from grid spacing {self.grid.h}")
        dfun = _as_field_function(self.diffusivity)
        x = self.grid.nodes[: self.grid.unknowns]
        table = np.empty((self.mesh.steps + 1, len(x)))
        for n, t in enumerate(self.mesh.times):
            table[n] = np.broadcast_to(np.asarray(dfun(x, t), dtype=float), x.shape)
        if not np.all(np.isfinite(table)):
            raise DomainError("diffusivity is not finite on the grid")
        if np.any(table < 0):
            n, j = np.argwhere(table < 0)[0]
            raise DomainError(f"diffusivity is negative at x={x[j]}, t={self.mesh.t(n)}")
        table.setflags(write=False)
        object.__setattr__(self, "d_table", table)

    @property
    def steady(self) -> bool:
        """True when ``D`` does not change over the sampled times."""
        t = self.d_table
        return bool(np.all(t[1:] == t[1]))

    def initial_values(self) -> np.ndarray:
        x = self.grid.nodes
        u0 = np.broadcast_to(np.asarray(self.initial(x), dtype=float), x.shape).copy()
        if self.grid.periodic:
            u0[-1] = u0[0]
        return u0


@dataclass
class StepReport:
    """Diagnostics of one time step.

    ``residual`` is the sup-norm change of the last fixed-point iterate (or
    of the a posteriori fixed-point map applied to a direct solution).
    """

    step: int
    method: str
    iterations: int = 0
    residual: float = 0.0
    contraction_estimate: float = float("nan")
    contraction_bound: float = 0.0
    crosscheck: float | None = None


class _StepContext:
    """Operator, coefficients and cached factorizations for one spec."""

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.coeffs: L1Coefficients = l1_coefficients(spec.alpha, spec.mesh)
        self.op: OperatorMatrix = assemble_matrix(spec.kernel, spec.grid, spec.extension, spec.initial)
        self.gfac = math.gamma(2.0 - spec.alpha) * spec.mesh.tau**spec.alpha
        self._factor = None
        self._factor_key = None

    def c(self, n: int) -> np.ndarray:
        return self.gfac * self.spec.d_table[n]

    def contraction_bound(self, c: np.ndarray) -> float:
        cd = c * self.op.diag
        return float(np.max(cd / (1.0 + cd)))

    def fixed_point_map(self, psi, c, f):
        op = self.op
        return (c * (op.neighbor_matvec(psi) + op.affine) + f) / (1.0 + c * op.diag)

    def solve(self, c: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        op = self.op
        key = c.tobytes()
        if not np.any(c):
            return rhs.copy()
        if op.circulant is not None and np.all(c == c[0]):
            if self._factor_key != key:
                self._factor = 1.0 - c[0] * op.eigenvalues
                self._factor_key = key
            return np.fft.irfft(np.fft.rfft(rhs) / self._factor, n=len(rhs))
        if self._factor_key != key:
            nb = op.neighbor
            if sparse.issparse(nb):
                a = sparse.diags(1.0 + c * op.diag) - sparse.diags(c) @ nb
                self._factor = ("sparse", splinalg.splu(sparse.csc_matrix(a)))
            else:
                a = -c[:, None] * np.asarray(nb)
                a[np.diag_indices_from(a)] += 1.0 + c * op.diag
                self._factor = ("dense", linalg.lu_factor(a, check_finite=False))
            self._factor_key = key
        kind, fac = self._factor
        if kind == "sparse":
            out = fac.solve(rhs)
        else:
            out = linalg.lu_solve(fac, rhs, check_finite=False)
        # rows without diffusion are identity rows; keep them exact
        idle = c == 0
        out[idle] = rhs[idle]
        return out


class SolutionHistory:
    """Frames ``U^0 .. U^N`` of a run.

    ``frames`` has shape ``(N+1, M+1)``; on periodic grids the last column
    repeats the first. Only rows ``0 .. filled-1`` are meaningful.
    """

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.grid = spec.grid
        self.mesh = spec.mesh
        self.frames = np.zeros((spec.mesh.steps + 1, spec.grid.cells + 1))
        self.frames[0] = spec.initial_values()
        self.filled = 1
        self.reports: list[StepReport] = []
        self._ctx: _StepContext | None = None

    @property
    def context(self) -> _StepContext:
        if self._ctx is None:
            self._ctx = _StepContext(self.spec)
        return self._ctx

    @property
    def times(self) -> np.ndarray:
        return self.mesh.times[: self.filled]

    def frame(self, n: int) -> np.ndarray:
        if n >= self.filled:
            raise IndexError(f"frame {n} not computed yet ({self.filled} available)")
        return self.frames[n]

    @property
    def final(self) -> np.ndarray:
        return self.frames[self.filled - 1]

    def commit(self, values: np.ndarray, report: StepReport | None = None) -> None:
        n = self.filled
        if n > self.mesh.steps:
            raise IndexError("history is full")
        u = self.frames[n]
        m = self.grid.unknowns
        u[:m] = values
        if self.grid.periodic:
            u[-1] = u[0]
        self.filled += 1
        if report is not None:
            self.reports.append(report)

    def history_term(self, n: int) -> np.ndarray:
        """L1 memory ``b_{n-1} U^0 + sum_{k=1}^{n-1} (b_{n-k-1} - b_{n-k}) U^k`` on the unknowns."""
        m = self.grid.unknowns
        return memory_sum(self.frames[:n, :m], self.context.coeffs, n, "caputo")


def _next_index(history: SolutionHistory) -> int:
    n = history.filled
    if n > history.mesh.steps:
        raise IndexError("all time steps have been computed")
    return n


def step_fixed_point(
    spec: ProblemSpec,
    history: SolutionHistory,
    tol: float = 1e-12,
    max_iter: int = 500,
    guess: np.ndarray | None = None,
) -> tuple[np.ndarray, StepReport]:
    """Next frame by iterating the contraction map of the scheme.

    Parameters
    ----------
    spec : ProblemSpec
    history : SolutionHistory
        Holds ``U^0 .. U^{n-1}``; it is not modified.
    tol : float
        Stop once the sup-norm change between iterates is below ``tol``.
    max_iter : int
    guess : ndarray, optional
        Starting iterate (default: the previous frame).

    Returns
    -------
    values : ndarray
        ``U^n`` on the unknowns.
    report : StepReport

    Raises
    ------
    ConvergenceError
        If ``max_iter`` iterations do not reach ``tol``.
    """
    if history.spec is not spec:
        raise ValueError("history belongs to a different spec")
    ctx = history.context
    n = _next_index(history)
    m = spec.grid.unknowns
    c = ctx.c(n)
    f = history.history_term(n)
    psi = np.array(history.frames[n - 1, :m] if guess is None else guess, dtype=float)
    bound = ctx.contraction_bound(c)
    prev = None
    ratio = float("nan")
    delta = float("inf")
    for it in range(1, max_iter + 1):
        nxt = ctx.fixed_point_map(psi, c, f)
        delta = float(np.max(np.abs(nxt - psi)))
        if prev is not None and prev > 0:
            ratio = delta / prev
        prev = delta
        psi = nxt
        if delta <= tol:
            return psi, StepReport(n, "fixed_point", it, delta, ratio, bound)
    raise ConvergenceError(
        f"fixed-point iteration stalled at step {n}: change {delta:.3e} > {tol:.1e} after {max_iter} "
        f"iterations (contraction bound {bound:.6f})",
        residual=delta,
        iterations=max_iter,
        step=n,
    )


def step_direct(spec: ProblemSpec, history: SolutionHistory) -> np.ndarray:
    """Next frame from the linear system ``(I + c d - c N) U = f + c a``.

    The system matrix is an M-matrix with a strictly dominant diagonal for
    ``D >= 0``, so it is never singular.
    """
    if history.spec is not spec:
        raise ValueError("history belongs to a different spec")
    ctx = history.context
    n = _next_index(history)
    c = ctx.c(n)
    rhs = history.history_term(n) + c * ctx.op.affine
    return ctx.solve(c, rhs)


def _crosscheck_steps(steps: int, count: int) -> set[int]:
    if count <= 0:
        return set()
    if count >= steps:
        return set(range(1, steps + 1))
    return {int(k) for k in np.unique(np.round(np.geomspace(1, steps, count)).astype(int))}


def march(
    spec: ProblemSpec,
    method: str = "auto",
    tol: float = 1e-12,
    max_iter: int = 500,
    crosscheck: bool | int = False,
    crosscheck_tol: float = 1e-10,
) -> SolutionHistory:
    """Run the scheme from ``U^0 = u0`` to ``t_N``.

    Parameters
    ----------
    spec : ProblemSpec
    method : {"auto", "direct", "fixed_point"}
        ``"auto"`` iterates when the contraction bound is at most 0.9 and
        solves directly otherwise.
    tol, max_iter : float, int
        Fixed-point controls.
    crosscheck : bool or int
        Solve selected steps with both methods and record the sup-norm gap
        in ``StepReport.crosscheck``. ``True`` checks every step; an integer
        checks that many steps spread geometrically over the run. The
        fixed-point solve used for the check is started from the previous
        frame and tightened to ``crosscheck_tol * (1 - L) / L`` so its own
        error cannot hide a disagreement.
    crosscheck_tol : float

    Returns
    -------
    SolutionHistory

    Raises
    ------
    ConvergenceError
        With ``step`` set to the failing time index.
    """
    if method not in ("auto", "direct", "fixed_point"):
        raise ValueError(f"unknown method {method!r}")
    history = SolutionHistory(spec)
    ctx = history.context
    steps = spec.mesh.steps
    checks = _crosscheck_steps(steps, steps if crosscheck is True else int(crosscheck))
    for n in range(1, steps + 1):
        c = ctx.c(n)
        bound = ctx.contraction_bound(c)
        use_direct = method == "direct" or (method == "auto" and bound > _DIRECT_THRESHOLD)
        try:
            if use_direct:
                values = step_direct(spec, history)
                report = StepReport(n, "direct", contraction_bound=bound)
            else:
                values, report = step_fixed_point(spec, history, tol, max_iter)
            if n in checks:
                report.crosscheck = _cross_difference(spec, history, values, use_direct, bound, crosscheck_tol)
        except ConvergenceError as exc:
            exc.step = n
            raise
        history.commit(values, report)
    return history


def _cross_difference(spec, history, values, used_direct, bound, target) -> float:
    if used_direct:
        tight = min(1e-12, target * 0.1 * (1.0 - bound) / max(bound, 1e-300))
        budget = int(min(5_000_000, 50 + math.log(tight) / math.log(max(bound, 1e-3)) * 1.5))
        other, _ = step_fixed_point(spec, history, tight, budget)
    else:
        other = step_direct(spec, history)
    return float(np.max(np.abs(other - values)))
