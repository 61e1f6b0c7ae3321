"""End-to-end acceptance checks at desk scale.

Each test carries a ``criterion`` marker; ``conftest.py`` prints one
PASS/FAIL line per criterion at the end of the session. An expected failure
(``xfail``) counts as FAIL on that line.
"""

from __future__ import annotations

import functools
import math

import numpy as np
import pytest

from fracdiff.analysis import (
    aitken_order,
    equality_sequence,
    gronwall_validate,
    order_from_runs,
    slope_fit,
    sup_error,
    tech_inequality_check,
    truncation_probe,
)
from fracdiff.cli import (
    ExperimentConfig,
    build_problem,
    exterior_sup,
    green_operator_error,
    random_gronwall_instance,
    random_problem,
)
from fracdiff.solver import ProblemSpec, march
from fracdiff.spaceop import (
    SpatialGrid,
    apply,
    default_k_max,
    fractional_laplacian_kernel,
    fractional_laplacian_kernel_fourier,
)
from fracdiff.specfun import mittag_leffler
from fracdiff.timefrac import TimeMesh, caputo_l1, l1_coefficients, riemann_liouville_l1

pytestmark = pytest.mark.acceptance

CROSSCHECK_STEPS = 3


@functools.lru_cache(maxsize=None)
def run(experiment, alpha, s, h, tau, X, T):
    """Solve once per configuration; keep the error report, the frames when
    there is no exact solution, and the largest method discrepancy."""
    cfg = ExperimentConfig(experiment, alpha, s, h, tau, X, T)
    spec, ref = build_problem(cfg)
    hist = march(spec, crosscheck=CROSSCHECK_STEPS)
    cross = max(r.crosscheck for r in hist.reports if r.crosscheck is not None)
    report = sup_error(hist, ref, s) if ref is not None else None
    frames = None if ref is not None else hist.frames
    return report, frames, cross


# {{{ run lists (shared with the cross-method check)

SINE_H_RUNS = [("sine-eigen", 0.9, 0.75, 2.0**-k, 2.0**-10, math.pi, 1.0) for k in range(2, 7)]
SINE_TAU_RUNS = {
    a: [("sine-eigen", a, 0.75, 2.0**-5, 2.0**-k, 4 * math.pi, 1.0) for k in range(4, 10)] for a in (0.3, 0.5, 0.7)
}
# step ranges end before the spatial error floor of h = 2^-7 is reached
COMPACT_TAU_EXPONENTS = {0.25: range(6, 12), 0.5: range(6, 12), 0.75: range(3, 9)}
COMPACT_RUNS = {
    a: [("compact-support", a, 0.75, 2.0**-7, 2.0**-k, 1.0, 1.0) for k in ks] for a, ks in COMPACT_TAU_EXPONENTS.items()
}


def _triple(experiment, alpha, s, h, tau, parameter, X=4.0, T=1.0):
    out = []
    for k in range(3):
        hk, tk = (h / 2**k, tau) if parameter == "h" else (h, tau / 2**k)
        out.append((experiment, alpha, s, hk, tk, X, T))
    return out


TABLE_TIME = {(0.5, 0.5): (0.77, 0.15), (0.9, 0.9): (0.90, 0.10)}
TABLE_SPACE_CELLS = [(0.5, 0.5), (0.9, 0.9), (0.5, 0.9), (0.9, 0.5)]
VD_TIME_RUNS = {c: _triple("variable-diffusivity", *c, 2.0**-5, 2.0**-7, "tau") for c in TABLE_TIME}
VD_SPACE_RUNS = {c: _triple("variable-diffusivity", *c, 2.0**-5, 2.0**-7, "h") for c in TABLE_SPACE_CELLS}
DL_RUNS = _triple("discrete-laplacian", 0.5, None, 2.0**-5, 2.0**-7, "tau")


def all_runs():
    keys = list(SINE_H_RUNS)
    for group in (SINE_TAU_RUNS, COMPACT_RUNS, VD_TIME_RUNS, VD_SPACE_RUNS):
        for runs in group.values():
            keys.extend(runs)
    keys.extend(DL_RUNS)
    return list(dict.fromkeys(keys))


def _aitken(keys, parameter):
    return order_from_runs([run(*k)[1] for k in keys], parameter).estimated_p


# }}}


# {{{ criterion 1: spatial order 2

C1 = (1, "spatial order 2 (operator on sin, alpha = 1 Green operator check, sine solve in h)")


@pytest.mark.criterion(*C1)
@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_operator_on_sine_order_two(s, note):
    hs, errs = [], []
    for k in range(3, 8):
        g = SpatialGrid.from_spacing(math.pi, 2.0**-k, periodic=True, adjust=True)
        kern = fractional_laplacian_kernel(s, g.h, default_k_max(g))
        u = np.sin(g.nodes)
        # sin is an eigenfunction of the exact operator with eigenvalue -1
        errs.append(np.max(np.abs(apply(kern, u, g, "periodic") + u)))
        hs.append(g.h)
    slope = slope_fit(hs, errs)
    note(f"operator slope s={s}: {slope:.3f}")
    assert abs(slope - 2.0) <= 0.1


@pytest.mark.criterion(*C1)
def test_green_alpha1_operator_order(note):
    hs = [2.0**-k for k in range(3, 7)]
    errs = [green_operator_error(ExperimentConfig("green-alpha1", 1.0, 0.75, h, 1.0, 8.0, 1.0))[0] for h in hs]
    slope = slope_fit(hs, errs)
    note(f"alpha=1 Green operator slope {slope:.3f}")
    assert abs(slope - 2.0) <= 0.1


@pytest.mark.criterion(*C1)
def test_sine_solve_order_in_h(note):
    errs = [run(*k)[0].sup_at_T for k in SINE_H_RUNS]
    # differences of successive errors remove the fixed time-error floor
    orders = [aitken_order(errs[i : i + 3], "h", kind="errors").estimated_p for i in range(len(errs) - 2)]
    note("sine solve Aitken orders in h " + ", ".join(f"{p:.3f}" for p in orders))
    assert min(orders) >= 1.9


# }}}


# {{{ criterion 2: pointwise order 1 in time

C2 = (2, "temporal pointwise order 1 (sine, error at t = 1)")


@pytest.mark.criterion(*C2)
@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7])
def test_sine_pointwise_order_in_tau(alpha, note):
    keys = SINE_TAU_RUNS[alpha]
    taus = [k[4] for k in keys]
    errs = [run(*k)[0].sup_at_T for k in keys]
    slope = slope_fit(taus, errs)
    note(f"alpha={alpha}: {slope:.3f}")
    assert abs(slope - 1.0) <= 0.1


# }}}


# {{{ criterion 3: global order alpha in time

C3 = (3, "temporal global order alpha (compact support, max over space and time)")


@pytest.mark.criterion(*C3)
@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_compact_support_global_order(alpha, note):
    keys = COMPACT_RUNS[alpha]
    taus = [k[4] for k in keys]
    errs = [run(*k)[0].sup_space_time for k in keys]
    slope = slope_fit(taus, errs)
    note(f"alpha={alpha}: {slope:.3f}")
    assert abs(slope - alpha) <= 0.1


# }}}


# {{{ criterion 4: orders for variable diffusivity

C4 = (4, "variable-diffusivity Aitken orders (base tau = 2^-7, h = 2^-5)")


@pytest.mark.criterion(*C4)
@pytest.mark.parametrize("cell", list(TABLE_TIME))
@pytest.mark.xfail(
    strict=True,
    reason="pre-asymptotic at base tau = 2^-7: measured 0.93 for (0.5, 0.5) and 0.68 for (0.9, 0.9); "
    "see test_time_order_variable_diffusivity_finer_base",
)
def test_variable_diffusivity_time_order(cell, note):
    target, tol = TABLE_TIME[cell]
    p = _aitken(VD_TIME_RUNS[cell], "tau")
    note(f"time {cell}: {p:.3f} (target {target} +- {tol})")
    assert abs(p - target) <= tol


@pytest.mark.criterion(*C4)
def test_variable_diffusivity_space_order(note):
    orders = {c: _aitken(VD_SPACE_RUNS[c], "h") for c in TABLE_SPACE_CELLS}
    note("space " + ", ".join(f"{c}: {p:.3f}" for c, p in orders.items()))
    assert sum(abs(p - 2.0) <= 0.15 for p in orders.values()) >= 3


def test_time_order_variable_diffusivity_finer_base():
    # same cells with base tau = 2^-9 (h = 2^-5): inside the target bands
    for cell, (target, tol) in TABLE_TIME.items():
        keys = _triple("variable-diffusivity", *cell, 2.0**-5, 2.0**-9, "tau")
        ordered = [run(*k) for k in keys]
        assert all(c <= 1e-10 for _, _, c in ordered)
        p = order_from_runs([r[1] for r in ordered], "tau").estimated_p
        assert abs(p - target) <= tol, (cell, p)


# }}}


# {{{ criterion 5: discrete Laplacian

C5 = (5, "discrete-Laplacian time order at alpha = 0.5")


@pytest.mark.criterion(*C5)
def test_discrete_laplacian_time_order(note):
    p = _aitken(DL_RUNS, "tau")
    note(f"{p:.3f} (target 0.76 +- 0.15)")
    assert abs(p - 0.76) <= 0.15


# }}}


# {{{ criterion 6: property suites

C6 = (6, "property suites")


@pytest.mark.criterion(*C6)
def test_stability_and_contraction_random_specs(note):
    rng = np.random.default_rng(20240601)
    worst_s = worst_c = -np.inf
    for _ in range(20):
        spec = random_problem(rng)
        bump = rng.uniform(0, 0.5)

        def v0(x, f=spec.initial, b=bump):
            return f(x) + b * np.exp(-(x**2))

        spec_v = ProblemSpec(spec.alpha, spec.kernel, spec.diffusivity, v0, spec.grid, spec.mesh, spec.extension)
        hu, hv = march(spec), march(spec_v)
        worst_s = max(worst_s, np.max(np.abs(hu.frames)) - exterior_sup(spec, spec.initial))
        gap0 = exterior_sup(spec, lambda x, f=spec.initial, g=v0: g(x) - f(x))
        worst_c = max(worst_c, np.max(np.abs(hu.frames - hv.frames)) - gap0)
    note(f"stability excess {worst_s:.2g}, contraction excess {worst_c:.2g}")
    assert worst_s <= 1e-10 and worst_c <= 1e-10


@pytest.mark.criterion(*C6)
@pytest.mark.parametrize("flavor", ["caputo", "rl"])
def test_gronwall_campaign(flavor, note):
    rng = np.random.default_rng(7 if flavor == "caputo" else 8)
    statuses = []
    for _ in range(100):
        inst = random_gronwall_instance(rng, flavor)
        statuses.append(gronwall_validate(inst, equality_sequence(inst, rng.uniform(0, 2))).status)
    note(f"gronwall {flavor}: {statuses.count('PASS')}/100")
    assert statuses.count("PASS") == 100


@pytest.mark.criterion(*C6)
@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7])
@pytest.mark.xfail(
    strict=True,
    reason="at fixed t the L1 error of t^alpha decays like tau^min(1+alpha, 2-alpha), not tau^(1-alpha)",
)
def test_truncation_slope_power_function(alpha, note):
    tab = truncation_probe(
        lambda t: t**alpha, lambda t: np.full_like(t, math.gamma(1 + alpha)), alpha, 2.0 ** -np.arange(5, 11)
    )
    slope = tab.slope_at(0.5)
    note(f"truncation slope alpha={alpha}: {slope:.3f} (target {1 - alpha:.2f} +- 0.05)")
    assert abs(slope - (1 - alpha)) <= 0.05


@pytest.mark.criterion(*C6)
def test_technical_inequality_fuzz(note):
    rng = np.random.default_rng(99)
    bad = 0
    for _ in range(10_000):
        a = 10 ** rng.uniform(-6, 6)
        b = a * rng.uniform(1e-12, 1.0)
        bad += not tech_inequality_check(a, b, rng.uniform(1e-3, 1.0)).passed
    note(f"power-difference inequality fuzz failures {bad}/10000")
    assert bad == 0


@pytest.mark.criterion(*C6)
def test_weight_routes_agree(note):
    worst = 0.0
    for s in (0.1, 0.3, 0.5, 0.7, 0.9):
        kf = fractional_laplacian_kernel_fourier(s, 0.1, 200)
        kg = fractional_laplacian_kernel(s, 0.1, 200)
        worst = max(worst, float(np.max(np.abs(kf.weights / kg.weights - 1))))
    note(f"weights rel diff {worst:.2g}")
    assert worst <= 1e-9


@pytest.mark.criterion(*C6)
def test_mittag_leffler_oracles():
    assert abs(mittag_leffler(1.0, 1.0, 1.0) - math.e) <= 1e-9
    # E_1/2(-1) = e * erfc(1)
    assert abs(mittag_leffler(0.5, 1.0, -1.0) - math.e * math.erfc(1.0)) <= 1e-9


@pytest.mark.criterion(*C6)
def test_commutation_identity_random_sequences():
    rng = np.random.default_rng(5)
    for _ in range(200):
        alpha = rng.uniform(0.05, 0.95)
        n = int(rng.integers(1, 80))
        c = l1_coefficients(alpha, TimeMesh(rng.uniform(0.01, 1.0), n + 1))
        f = rng.uniform(-1, 1, n + 2)
        lhs = caputo_l1(f, c) - caputo_l1(f[:-1], c)
        rhs = riemann_liouville_l1(np.diff(f), c)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, c.scale)


# }}}


C7 = (7, "fixed point and direct solves agree on every acceptance run")


@pytest.mark.criterion(*C7)
def test_cross_method_agreement(note):
    worst = max(run(*k)[2] for k in all_runs())
    note(f"{len(all_runs())} runs, max discrepancy {worst:.2g}")
    assert worst <= 1e-10
