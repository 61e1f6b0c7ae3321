"""Command-line driver: experiments, convergence studies, order tables, validation suites.

Subcommands
-----------
``solve``        one run, one CSV row.
``convergence``  halve ``h`` or ``tau`` ``--refinements`` times.
``order-table``  Aitken orders in time and space over a grid of ``(alpha, s)``;
                 rows are labelled ``<experiment>:time`` or ``<experiment>:space``
                 and carry the base ``h`` and ``tau``.
``validate``     property campaigns; exit status 1 if any check fails.

Every run writes the CSV header ``experiment,alpha,s,h,tau,X,T,error_max,
error_at_T,order_est,runtime_seconds``. With an exact solution the error
columns hold ``max |U - u|`` over all steps and over the final step. Without
one they hold the difference to the next finer run, measured on the coarse
grid, and ``order_est`` is the Aitken estimate of the triple starting at
that row. With an exact solution ``order_est`` on a row is
``log2(e_k / e_{k+1})`` toward the next row, using the norm the
experiment is judged by (final time for ``sine-eigen``, space-time maximum
otherwise).
"""

from __future__ import annotations

import argparse
import ast
import csv
import io
import logging
import math
import multiprocessing
import operator
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Callable, Sequence

import numpy as np

from fracdiff.analysis import (
    GronwallInstance,
    equality_sequence,
    gronwall_simple_validate,
    gronwall_validate,
    order_from_runs,
    slope_fit,
    sup_error,
    tech_inequality_check,
    truncation_probe,
)
from fracdiff.errors import ConfigError, ConvergenceError, DegenerateEstimateError, FracDiffError
from fracdiff.exact import compact_support_solution, green_function, green_generator, sine_solution
from fracdiff.solver import ProblemSpec, march
from fracdiff.spaceop import (
    SpatialGrid,
    apply,
    default_k_max,
    discrete_laplacian_kernel,
    fractional_laplacian_kernel,
    fractional_laplacian_kernel_fourier,
)
from fracdiff.specfun import mittag_leffler
from fracdiff.timefrac import TimeMesh, caputo_l1, l1_coefficients, riemann_liouville_l1

logger = logging.getLogger("fracdiff")

CSV_FIELDS = ("experiment", "alpha", "s", "h", "tau", "X", "T", "error_max", "error_at_T", "order_est", "runtime_seconds")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

# Desk-scale defaults. Full-scale runs use tau = 2^-12 (alpha = 1 test),
# X = 8 pi (sine), h = 2^-10 (compact support) and base grids tau = 2^-9,
# h = 2^-6 (order tables); each is reduced by the factor noted.
DEFAULTS = {
    # operator-only check against the alpha = 1 Green's function; tau unused
    "green-alpha1": dict(alpha=1.0, s=0.75, h=2.0**-3, tau=1.0, X=8.0, T=1.0, study="h"),
    # X = 4 pi (half), h = 2^-5
    "sine-eigen": dict(alpha=0.5, s=0.75, h=2.0**-5, tau=2.0**-4, X=4 * math.pi, T=1.0, study="tau"),
    # h = 2^-7 (8x coarser)
    "compact-support": dict(alpha=0.5, s=0.75, h=2.0**-7, tau=2.0**-4, X=1.0, T=1.0, study="tau"),
    # base tau = 2^-7, h = 2^-5 (4x and 2x coarser)
    "variable-diffusivity": dict(alpha=0.5, s=0.5, h=2.0**-5, tau=2.0**-7, X=4.0, T=1.0, study="tau"),
    "discrete-laplacian": dict(alpha=0.5, s=None, h=2.0**-5, tau=2.0**-7, X=4.0, T=1.0, study="tau"),
}
REFERENCE_FREE = ("variable-diffusivity", "discrete-laplacian")
GAUSSIAN_WIDTH = 0.01


# {{{ configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run or study.

    ``study`` names the parameter halved by ``convergence`` and
    ``refinements`` the number of halvings (``refinements + 1`` levels).
    """

    experiment: str
    alpha: float
    s: float | None
    h: float
    tau: float
    X: float
    T: float
    refinements: int = 3
    study: str = "tau"
    out: str | None = None
    plot: str | None = None
    threads: int = 1
    method: str = "auto"
    crosscheck: int = 0

    def __post_init__(self):
        self.check()

    def check(self):
        e = self.experiment
        if e not in DEFAULTS:
            raise ConfigError(f"unknown experiment {e!r}; choose from {', '.join(DEFAULTS)}")
        if self.refinements < 1:
            raise ConfigError("refinements must be at least 1")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.study not in ("h", "tau"):
            raise ConfigError("study must be 'h' or 'tau'")
        if self.method not in ("auto", "direct", "fixed_point"):
            raise ConfigError(f"unknown method {self.method!r}")
        for name in ("h", "tau", "X", "T"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive and finite")
        if e == "green-alpha1":
            if self.alpha != 1.0:
                raise ConfigError("green-alpha1 is the alpha = 1 experiment")
        elif not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if e == "discrete-laplacian":
            if self.h > 1 or abs(round(1 / self.h) * self.h - 1) > 1e-12:
                raise ConfigError("discrete-laplacian needs h = 1/m for an integer m")
        elif self.s is None or not 0 < self.s < 1:
            raise ConfigError("s must lie in (0, 1)")
        if e == "sine-eigen" and abs(self.X / math.pi - round(self.X / math.pi)) > 1e-9:
            raise ConfigError("sine-eigen is periodic: X must be a multiple of pi")
        if e == "compact-support" and self.X < 1:
            raise ConfigError("compact-support needs X >= 1 to contain the support of D")
        if e != "sine-eigen":
            cells = 2 * self.X / self.h
            if abs(cells - round(cells)) > 1e-9 * cells:
                raise ConfigError(f"h={self.h} does not divide [-X, X] with X={self.X}")
        if e != "green-alpha1":
            steps = self.T / self.tau
            if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
                raise ConfigError(f"T={self.T} is not a multiple of tau={self.tau}")

    def level(self, k: int, parameter: str | None = None) -> ExperimentConfig:
        """The configuration refined ``k`` times in ``parameter`` (default: ``study``)."""
        p = parameter or self.study
        return replace(self, **{p: getattr(self, p) / 2**k})


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}


def parse_number(text: str) -> float:
    """Parse ``0.25``, ``2^-5``, ``2**-7``, ``4*pi`` or ``8pi``."""
    src = str(text).strip().replace("^", "**")
    if src.endswith("pi") and src[:-2] and src[-3] not in "*/+-":
        src = src[:-2] + "*pi"

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        raise ValueError

    try:
        return float(ev(ast.parse(src, mode="eval")))
    except (SyntaxError, ValueError, ZeroDivisionError, TypeError) as exc:
        raise ConfigError(f"cannot parse number {text!r}") from exc


def parse_list(text) -> list[float]:
    return [parse_number(p) for p in str(text).split(",") if p.strip()]


def read_config_file(path: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{num}: expected key=value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


_NUMERIC = ("alpha", "s", "h", "tau", "X", "T")
_INTEGER = ("refinements", "threads", "crosscheck")
_KNOWN = {f.name for f in fields(ExperimentConfig)}


def build_config(settings: dict, lists: bool = False) -> ExperimentConfig | tuple[dict, list, list]:
    """Merge experiment defaults with ``settings`` (string or typed values).

    With ``lists=True`` ``alpha`` and ``s`` may be comma-separated and the
    return value is ``(base settings, alphas, ss)``.
    """
    unknown = set(settings) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown settings: {', '.join(sorted(unknown))}")
    exp = settings.get("experiment")
    if exp is None:
        raise ConfigError("no experiment given")
    if exp not in DEFAULTS:
        raise ConfigError(f"unknown experiment {exp!r}; choose from {', '.join(DEFAULTS)}")
    merged = dict(DEFAULTS[exp])
    merged["experiment"] = exp
    alphas = ss = None
    for key, value in settings.items():
        if value is None or key == "experiment":
            continue
        if key in ("alpha", "s") and lists:
            vals = parse_list(value) if isinstance(value, str) else [float(v) for v in np.atleast_1d(value)]
            if key == "alpha":
                alphas = vals
            else:
                ss = vals
        elif key in _NUMERIC:
            merged[key] = parse_number(value) if isinstance(value, str) else float(value)
        elif key in _INTEGER:
            try:
                merged[key] = int(value)
            except ValueError as exc:
                raise ConfigError(f"{key} must be an integer") from exc
        else:
            merged[key] = value
    if lists:
        return merged, alphas or [merged["alpha"]], ss or [merged["s"]]
    return ExperimentConfig(**merged)


# }}}


# {{{ experiments


def _gaussian(x):
    return np.exp(-(x**2) / (4 * GAUSSIAN_WIDTH)) / math.sqrt(4 * math.pi * GAUSSIAN_WIDTH)


def _variable_d(x, t):
    return 1.0 / (1.0 + x**2 + t**2)


def build_problem(cfg: ExperimentConfig):
    """``(ProblemSpec, reference or None)`` for a time-dependent experiment."""
    e = cfg.experiment
    mesh = TimeMesh.from_horizon(cfg.T, cfg.tau)
    if e == "sine-eigen":
        grid = SpatialGrid.from_spacing(cfg.X, cfg.h, periodic=True, adjust=True)
        kern = fractional_laplacian_kernel(cfg.s, grid.h, default_k_max(grid))
        return ProblemSpec(cfg.alpha, kern, 1.0, np.sin, grid, mesh, "periodic"), sine_solution(cfg.alpha, cfg.s)
    grid = SpatialGrid.from_spacing(cfg.X, cfg.h)
    if e == "compact-support":
        ref, d, u0 = compact_support_solution(cfg.alpha, cfg.s)
        kern = fractional_laplacian_kernel(cfg.s, grid.h, default_k_max(grid))
        return ProblemSpec(cfg.alpha, kern, d, u0, grid, mesh), ref
    if e == "variable-diffusivity":
        kern = fractional_laplacian_kernel(cfg.s, grid.h, default_k_max(grid))
        return ProblemSpec(cfg.alpha, kern, _variable_d, _gaussian, grid, mesh), None
    if e == "discrete-laplacian":
        kern = discrete_laplacian_kernel(grid.h, shift=1.0)
        return ProblemSpec(cfg.alpha, kern, _variable_d, _gaussian, grid, mesh), None
    raise ConfigError(f"{e} has no time-dependent problem")


def green_operator_error(cfg: ExperimentConfig) -> tuple[float, np.ndarray, np.ndarray]:
    """``max |L_h G - d_t G|`` at ``t = 1`` over ``|x| <= X/2`` (alpha = 1).

    The frozen extension feeds exact values of ``G`` outside the window.
    """
    grid = SpatialGrid.from_spacing(cfg.X, cfg.h)
    kern = fractional_laplacian_kernel(cfg.s, grid.h, default_k_max(grid))

    def g1(x):
        return green_function(x, 1.0, 1.0, cfg.s)

    lu = apply(kern, g1(grid.nodes), grid, "frozen", exterior=g1)
    sel = np.abs(grid.nodes) <= cfg.X / 2
    exact = green_generator(grid.nodes[sel], 1.0, cfg.s)
    return float(np.max(np.abs(lu[sel] - exact))), grid.nodes[sel], lu[sel] - exact


def _limit_threads():
    from threadpoolctl import threadpool_limits
    import numba

    threadpool_limits(1)
    numba.set_num_threads(1)


@dataclass
class RunResult:
    config: ExperimentConfig
    error_max: float = float("nan")
    error_at_T: float = float("nan")
    runtime: float = 0.0
    frames: np.ndarray | None = None
    nodes: np.ndarray | None = None
    failure: str | None = None
    max_crosscheck: float | None = None


def run_single(cfg: ExperimentConfig, keep_frames: bool = False) -> RunResult:
    """Run one configuration; solver failures are caught and recorded."""
    start = time.perf_counter()
    res = RunResult(cfg)
    try:
        if cfg.experiment == "green-alpha1":
            err, _, _ = green_operator_error(cfg)
            res.error_max = res.error_at_T = err
        else:
            spec, ref = build_problem(cfg)
            hist = march(spec, method=cfg.method, crosscheck=cfg.crosscheck or False)
            checks = [r.crosscheck for r in hist.reports if r.crosscheck is not None]
            res.max_crosscheck = max(checks) if checks else None
            if ref is not None:
                rep = sup_error(hist, ref, cfg.s)
                res.error_max, res.error_at_T = rep.sup_space_time, rep.sup_at_T
            if keep_frames or ref is None:
                res.frames = hist.frames
            res.nodes = spec.grid.nodes
    except ConvergenceError as exc:
        res.failure = f"convergence-failure(step={exc.step})"
        logger.warning("%s: %s", cfg.experiment, exc)
    res.runtime = time.perf_counter() - start
    return res


def _worker(args):
    _limit_threads()
    cfg, keep = args
    return run_single(cfg, keep)


def run_many(configs: Sequence[ExperimentConfig], threads: int = 1, keep_frames: bool = False) -> list[RunResult]:
    """Run independent configurations, in parallel when ``threads > 1``.

    Results come back in input order; each job computes alone on one core,
    so the numbers do not depend on ``threads``.
    """
    jobs = [(c, keep_frames) for c in configs]
    if threads <= 1 or len(jobs) == 1:
        return [run_single(c, k) for c, k in jobs]
    # fork is unsafe once the OpenMP runtime of numba is initialised
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=min(threads, len(jobs)), mp_context=ctx) as pool:
        return list(pool.map(_worker, jobs))


# }}}


# {{{ output


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def make_row(cfg: ExperimentConfig, error_max, error_at_T, order_est, runtime, experiment: str | None = None) -> dict:
    return {
        "experiment": experiment or cfg.experiment,
        "alpha": cfg.alpha,
        "s": cfg.s,
        "h": cfg.h,
        "tau": cfg.tau,
        "X": cfg.X,
        "T": cfg.T,
        "error_max": error_max,
        "error_at_T": error_at_T,
        "order_est": order_est,
        "runtime_seconds": runtime,
    }


def write_csv(rows: list[dict], out: str | None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for row in rows:
        w.writerow([_fmt(row[k]) for k in CSV_FIELDS])
    if out:
        with open(out, "w") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def read_csv(path: str) -> list[dict]:
    with open(path) as fh:
        return list(csv.DictReader(fh))


def plot_errors(rows: list[dict], parameter: str, path: str, title: str = ""):
    """Log-log error lines as a standalone SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x = np.array([float(r[parameter]) for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    for key, label in (("error_max", "max over space and time"), ("error_at_T", "max over space at T")):
        y = np.array([float(r[key]) for r in rows])
        ok = np.isfinite(y) & (y > 0)
        if ok.any():
            ax.loglog(x[ok], y[ok], "o-", label=label)
    ax.set_xlabel(parameter)
    ax.set_ylabel("error")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_profile(nodes, values, exact, path: str, title: str = ""):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(nodes, values, label="numerical")
    if exact is not None:
        ax.plot(nodes, exact, "--", label="exact")
    ax.set_xlabel("x")
    ax.set_ylabel("u(x, T)")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# }}}


# {{{ commands


def _primary_norm(cfg: ExperimentConfig) -> str:
    return "error_at_T" if cfg.experiment == "sine-eigen" else "error_max"


def _flag(res: RunResult, order):
    return res.failure if res.failure else order


def command_solve(cfg: ExperimentConfig) -> list[dict]:
    res = run_single(cfg, keep_frames=cfg.plot is not None)
    if cfg.plot and res.frames is not None:
        exact = None
        _, ref = build_problem(cfg)
        if ref is not None:
            exact = ref(res.nodes, cfg.T)
        plot_profile(res.nodes, res.frames[-1], exact, cfg.plot, cfg.experiment)
    return [make_row(cfg, res.error_max, res.error_at_T, _flag(res, None), res.runtime)]


def convergence_rows(cfg: ExperimentConfig, results: list[RunResult]) -> list[dict]:
    rows = []
    n = len(results)
    if cfg.experiment in REFERENCE_FREE:
        diffs = []
        for a, b in zip(results[:-1], results[1:]):
            if a.failure or b.failure:
                diffs.append((float("nan"), float("nan")))
                continue
            fa, fb = a.frames, (b.frames[::2] if cfg.study == "tau" else b.frames[:, ::2])
            diffs.append((float(np.max(np.abs(fa[1:] - fb[1:]))), float(np.max(np.abs(fa[-1] - fb[-1])))))
        for k, res in enumerate(results):
            order = None
            if k + 2 < n and not any(r.failure for r in results[k : k + 3]):
                try:
                    order = order_from_runs([r.frames for r in results[k : k + 3]], cfg.study).estimated_p
                except DegenerateEstimateError:
                    order = float("nan")
            d = diffs[k] if k < len(diffs) else (float("nan"), float("nan"))
            rows.append(make_row(res.config, d[0], d[1], _flag(res, order), res.runtime))
        return rows
    norm = _primary_norm(cfg)
    for k, res in enumerate(results):
        order = None
        if k + 1 < n:
            e1, e2 = getattr(res, norm), getattr(results[k + 1], norm)
            if e1 > 0 and e2 > 0 and math.isfinite(e1) and math.isfinite(e2):
                order = math.log2(e1 / e2)
        rows.append(make_row(res.config, res.error_max, res.error_at_T, _flag(res, order), res.runtime))
    return rows


def command_convergence(cfg: ExperimentConfig) -> list[dict]:
    levels = [cfg.level(k) for k in range(cfg.refinements + 1)]
    results = run_many(levels, cfg.threads)
    rows = convergence_rows(cfg, results)
    if cfg.plot:
        plot_errors(rows, cfg.study, cfg.plot, f"{cfg.experiment}, alpha={cfg.alpha}, s={cfg.s}")
    return rows


def command_order_table(base: dict, alphas: list[float], ss: list[float], threads: int) -> list[dict]:
    """Aitken orders in time (and in space, unless the operator is exact in space)."""
    cells = []
    for a in alphas:
        for s in ss:
            cfg = ExperimentConfig(**{**base, "alpha": a, "s": s})
            studies = ["tau"] if cfg.experiment == "discrete-laplacian" else ["tau", "h"]
            for p in studies:
                cells.append((cfg, p))
    if any(cfg.experiment not in REFERENCE_FREE for cfg, _ in cells):
        raise ConfigError("order-table runs variable-diffusivity or discrete-laplacian")
    configs = [cfg.level(k, p) for cfg, p in cells for k in range(3)]
    results = run_many(configs, threads, keep_frames=True)
    rows = []
    for i, (cfg, p) in enumerate(cells):
        trip = results[3 * i : 3 * i + 3]
        runtime = sum(r.runtime for r in trip)
        label = f"{cfg.experiment}:{'time' if p == 'tau' else 'space'}"
        failed = next((r.failure for r in trip if r.failure), None)
        if failed:
            rows.append(make_row(cfg, float("nan"), float("nan"), failed, runtime, label))
            continue
        fine = trip[1].frames[::2] if p == "tau" else trip[1].frames[:, ::2]
        d_at_T = float(np.max(np.abs(trip[0].frames[-1] - fine[-1])))
        try:
            est = order_from_runs([r.frames for r in trip], p)
            order, d1 = est.estimated_p, est.differences[0]
        except DegenerateEstimateError:
            order, d1 = float("nan"), 0.0
        rows.append(make_row(cfg, d1, d_at_T, order, runtime, label))
    return rows


# }}}


# {{{ validation suites


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str = ""


def random_problem(rng):
    s = rng.uniform(0.1, 0.9)
    ext = str(rng.choice(["frozen", "zero-increment", "periodic"]))
    g = SpatialGrid(2.0, int(rng.choice([16, 24, 32])), periodic=ext == "periodic")
    kern = fractional_laplacian_kernel(s, g.h, default_k_max(g))
    a, b, w = rng.uniform(0, 2), rng.uniform(0, 1), rng.uniform(0.5, 3)
    cs, amps, wid = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3), rng.uniform(0.1, 0.5, 3)

    def d(x, t):
        return a * (1 + b * np.sin(w * x + t))

    def u0(x):
        return sum(m * np.exp(-((x - c) ** 2) / v) for c, m, v in zip(cs, amps, wid))

    mesh = TimeMesh(rng.uniform(0.01, 0.2), int(rng.integers(3, 15)))
    return ProblemSpec(rng.uniform(0.1, 0.9), kern, d, u0, g, mesh, ext)


def exterior_sup(spec, f):
    g = spec.grid
    vals = np.abs(f(g.nodes))
    if spec.extension == "frozen":
        x = np.linspace(-3 * g.half_width, 3 * g.half_width, 12 * g.cells + 1)
        vals = np.concatenate([vals, np.abs(f(x[np.abs(x) > g.half_width]))])
    return float(vals.max())


def suite_solver_invariants(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst_stab, worst_contr, worst_agree = -np.inf, -np.inf, 0.0
    for _ in range(20):
        spec = random_problem(rng)
        bump = rng.uniform(0, 0.5)

        def v0(x, f=spec.initial, b=bump):
            return f(x) + b * np.exp(-(x**2))

        spec_v = ProblemSpec(spec.alpha, spec.kernel, spec.diffusivity, v0, spec.grid, spec.mesh, spec.extension)
        hu = march(spec, method="direct", crosscheck=True)
        hv = march(spec_v)
        worst_stab = max(worst_stab, np.max(np.abs(hu.frames)) - exterior_sup(spec, spec.initial))
        gap0 = exterior_sup(spec, lambda x, f=spec.initial, g=v0: g(x) - f(x))
        worst_contr = max(worst_contr, np.max(np.abs(hu.frames - hv.frames)) - gap0)
        worst_agree = max(worst_agree, max(r.crosscheck for r in hu.reports))
    return [
        CheckResult("solver-invariants", "L-infinity stability (20 specs)", worst_stab <= 1e-10, f"excess {worst_stab:.3g}"),
        CheckResult("solver-invariants", "L-infinity contraction (20 specs)", worst_contr <= 1e-10, f"excess {worst_contr:.3g}"),
        CheckResult("solver-invariants", "fixed point vs direct", worst_agree <= 1e-10, f"max {worst_agree:.3g}"),
    ]


def random_gronwall_instance(rng, flavor: str) -> GronwallInstance:
    alpha = rng.uniform(0.1, 0.9)
    lam0, lam1 = rng.uniform(0, 1, 2)
    tau_max = (lam0 * math.gamma(2 - alpha)) ** (-1 / alpha) if lam0 > 0 else math.inf
    tau = min(rng.uniform(0.005, 0.1), 0.49 * tau_max)
    F = rng.uniform(0, 1, int(rng.integers(5, 60)))
    return GronwallInstance(alpha, tau, lam0, lam1, F, flavor=flavor)


def suite_gronwall(seed: int = 0, count: int = 100) -> list[CheckResult]:
    out = []
    rng = np.random.default_rng(seed)
    for flavor in ("caputo", "rl"):
        statuses = []
        margin = np.inf
        for _ in range(count):
            inst = random_gronwall_instance(rng, flavor)
            res = gronwall_validate(inst, equality_sequence(inst, rng.uniform(0, 2)))
            statuses.append(res.status)
            margin = min(margin, res.margin) if np.isfinite(res.margin) else margin
        ok = all(st == "PASS" for st in statuses)
        out.append(CheckResult("gronwall", f"{flavor}: {count} equality instances", ok, f"min margin {margin:.3g}"))
        bad = 0
        for _ in range(count):
            alpha = rng.uniform(0.1, 0.9)
            F = rng.uniform(0, 1, 40)
            inst = GronwallInstance(alpha, 0.05, 0.0, 0.0, F, flavor=flavor)
            y = equality_sequence(inst, rng.uniform(0, 1))
            bad += not gronwall_simple_validate(alpha, 0.05, float(F[1:].max()), y, flavor).passed
        out.append(CheckResult("gronwall", f"{flavor}: {count} integral-form instances", bad == 0, f"{bad} failures"))
    return out


def suite_weights() -> list[CheckResult]:
    worst = 0.0
    for s in (0.05, 0.25, 0.5, 0.75, 0.95):
        kf = fractional_laplacian_kernel_fourier(s, 0.2, 100)
        kg = fractional_laplacian_kernel(s, 0.2, 100)
        worst = max(worst, float(np.max(np.abs(kf.weights / kg.weights - 1))))
    return [CheckResult("weights", "Gamma vs Fourier weights", worst <= 1e-9, f"max rel diff {worst:.3g}")]


def suite_symbols() -> list[CheckResult]:
    out = []
    hs = 2.0 ** -np.arange(3, 8)
    errs = [symbol_error(0.75, h) for h in hs]
    slope = slope_fit(hs, errs)
    out.append(CheckResult("symbols", "sin is an approximate eigenfunction, order 2 in h", abs(slope - 2) <= 0.1, f"slope {slope:.3f}"))
    return out


def symbol_error(s: float, h: float) -> float:
    """``max |L_h sin + sin|`` on a periodic grid of spacing close to ``h``."""
    g = SpatialGrid.from_spacing(math.pi, h, periodic=True, adjust=True)
    kern = fractional_laplacian_kernel(s, g.h, default_k_max(g))
    u = np.sin(g.nodes)
    return float(np.max(np.abs(apply(kern, u, g, "periodic") + u)))


def suite_special_functions(seed: int = 0) -> list[CheckResult]:
    from scipy import special

    e1 = abs(mittag_leffler(1.0, 1.0, 1.0) - math.e)
    eh = abs(mittag_leffler(0.5, 1.0, -1.0) - special.erfcx(1.0))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(200):
        alpha = rng.uniform(0.05, 0.95)
        n = int(rng.integers(1, 60))
        c = l1_coefficients(alpha, TimeMesh(rng.uniform(0.01, 1.0), n + 1))
        f = rng.uniform(-1, 1, n + 2)
        lhs = caputo_l1(f[: n + 2], c) - caputo_l1(f[: n + 1], c)
        rhs = riemann_liouville_l1(np.diff(f)[: n + 1], c)
        worst = max(worst, abs(lhs - rhs) / max(1.0, c.scale))
    return [
        CheckResult("special-functions", "E_1(1) = e", e1 <= 1e-9, f"{e1:.3g}"),
        CheckResult("special-functions", "E_1/2(-1) = erfcx(1)", eh <= 1e-9, f"{eh:.3g}"),
        CheckResult("special-functions", "first difference of Caputo L1 = RL L1 of differences", worst <= 1e-12, f"{worst:.3g}"),
    ]


def suite_truncation() -> list[CheckResult]:
    out = []
    lin = truncation_probe(lambda t: t, lambda t: t ** 0.6 / math.gamma(1.6), 0.4, [0.1, 0.05])
    err = max(e.max() for e in lin.errors)
    out.append(CheckResult("truncation", "L1 exact on linear data", err <= 1e-12, f"{err:.3g}"))
    for alpha in (0.3, 0.5, 0.7):
        tab = truncation_probe(
            lambda t, a=alpha: t**a, lambda t, a=alpha: np.full_like(t, math.gamma(1 + a)), alpha, 2.0 ** -np.arange(5, 10)
        )
        first = tab.first_step()
        consts = tab.bound_constants()
        out.append(
            CheckResult(
                "truncation",
                f"t^{alpha}: n = 1 error independent of tau",
                bool(np.ptp(first) <= 1e-10 * first.max()),
                f"{first[0]:.6g}",
            )
        )
        out.append(
            CheckResult(
                "truncation",
                f"t^{alpha}: error <= C t_(n-1)^(alpha-1) tau^(1-alpha), C stable in tau",
                bool(consts.max() / consts.min() < 1.05),
                f"C in [{consts.min():.4g}, {consts.max():.4g}]; slope at t=1/2 {tab.slope_at(0.5):.3f}",
            )
        )
    return out


def suite_tech(seed: int = 0, count: int = 10_000) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(count):
        a = 10 ** rng.uniform(-6, 6)
        b = a * (rng.uniform(1e-12, 1) if rng.uniform() < 0.8 else 1 - 10 ** rng.uniform(-15, -3))
        bad += not tech_inequality_check(a, b, rng.uniform(1e-3, 1.0)).passed
    return [CheckResult("tech-inequality", f"{count} random (a, b, beta)", bad == 0, f"{bad} failures")]


SUITES: dict[str, Callable[[], list[CheckResult]]] = {
    "gronwall": suite_gronwall,
    "weights": suite_weights,
    "symbols": suite_symbols,
    "solver-invariants": suite_solver_invariants,
    "special-functions": suite_special_functions,
    "truncation": suite_truncation,
    "tech-inequality": suite_tech,
}


def validate(suites: Sequence[str]) -> list[CheckResult]:
    names = list(SUITES) if "all" in suites else list(suites)
    for n in names:
        if n not in SUITES:
            raise ConfigError(f"unknown suite {n!r}; choose from {', '.join(SUITES)} or all")
    results = []
    for n in names:
        results.extend(SUITES[n]())
    return results


# }}}


# {{{ argument parsing


def _add_common(p: argparse.ArgumentParser, lists: bool = False):
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--experiment", choices=list(DEFAULTS))
    p.add_argument("--alpha", help="comma-separated list allowed" if lists else None)
    p.add_argument("--s", help="comma-separated list allowed" if lists else None)
    p.add_argument("--h")
    p.add_argument("--tau")
    p.add_argument("--X")
    p.add_argument("--T")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--threads", type=int)
    p.add_argument("--method", choices=["auto", "direct", "fixed_point"])
    p.add_argument("--crosscheck", type=int, help="number of steps to re-solve with the other method")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracdiff", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="single run")
    _add_common(p)
    p.add_argument("--plot", help="SVG of the final profile")
    p = sub.add_parser("convergence", help="refinement study")
    _add_common(p)
    p.add_argument("--refinements", type=int)
    p.add_argument("--study", choices=["h", "tau"])
    p.add_argument("--plot", help="SVG of the error lines")
    p = sub.add_parser("order-table", help="Aitken orders over (alpha, s)")
    _add_common(p, lists=True)
    p = sub.add_parser("validate", help="property suites")
    p.add_argument("suites", nargs="*", default=["all"], help=f"any of {', '.join(SUITES)} (default: all)")
    return parser


def _settings(args) -> dict:
    settings = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in _KNOWN:
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = v
    return settings


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            results = validate(args.suites)
            for r in results:
                print(f"{'PASS' if r.passed else 'FAIL'}  {r.suite:18s} {r.name}  [{r.detail}]")
            failed = sum(not r.passed for r in results)
            print(f"{len(results) - failed} passed, {failed} failed")
            return EXIT_FAIL if failed else EXIT_OK
        settings = _settings(args)
        if args.command == "order-table":
            base, alphas, ss = build_config(settings, lists=True)
            rows = command_order_table(base, alphas, ss, int(base.get("threads", 1)))
            write_csv(rows, base.get("out"))
        else:
            cfg = build_config(settings)
            rows = command_solve(cfg) if args.command == "solve" else command_convergence(cfg)
            write_csv(rows, cfg.out)
    except (ConfigError, FracDiffError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
