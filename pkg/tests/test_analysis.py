from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracdiff.analysis import (
    GronwallInstance,
    aitken_order,
    difference_norm,
    equality_sequence,
    gronwall_simple_validate,
    gronwall_validate,
    l1_derivatives,
    order_from_runs,
    slope_fit,
    sup_error,
    tech_inequality_check,
    truncation_probe,
)
from fracdiff.errors import DegenerateEstimateError, DomainError
from fracdiff.exact import compact_support_solution
from fracdiff.solver import ProblemSpec, SolutionHistory, march, step_direct
from fracdiff.spaceop import SpatialGrid, default_k_max, discrete_laplacian_kernel, fractional_laplacian_kernel
from fracdiff.timefrac import TimeMesh


def test_aitken_synthetic():
    assert aitken_order((8e-2, 2e-2)).estimated_p == pytest.approx(2.0, abs=1e-12)
    assert aitken_order((1e-1, 1e-1 * 2**-0.5)).estimated_p == pytest.approx(0.5, abs=1e-12)
    for p in (0.3, 0.77, 1.0, 2.0):
        errs = [0.7 * e**p + 0.01 for e in (0.1, 0.05, 0.025)]
        est = aitken_order(errs, "h", kind="errors")
        assert est.estimated_p == pytest.approx(p, abs=1e-12)
        assert est.parameter == "h"
    with pytest.raises(DegenerateEstimateError):
        aitken_order((1e-3, 0.0))
    with pytest.raises(DegenerateEstimateError):
        aitken_order((0.1, 0.1, 0.1), kind="errors")


def test_slope_fit():
    h = 2.0 ** -np.arange(3, 8)
    assert slope_fit(h, 3 * h**1.5) == pytest.approx(1.5, abs=1e-12)


def _run(alpha, tau, steps, cells, u0=np.sin):
    g = SpatialGrid(2.0, cells)
    k = discrete_laplacian_kernel(g.h)
    return march(ProblemSpec(alpha, k, 1.0, u0, g, TimeMesh(tau, steps)))


def test_difference_norm_subsampling():
    a, b = _run(0.5, 0.1, 4, 8), _run(0.5, 0.05, 8, 8)
    assert difference_norm(a, b, "tau") == pytest.approx(np.max(np.abs(a.frames[1:] - b.frames[2::2])), rel=0)
    c = _run(0.5, 0.1, 4, 16, u0=np.cos)
    d = np.max(np.abs(a.frames[1:] - c.frames[1:, ::2]))
    assert difference_norm(a, c, "h") == d
    with pytest.raises(DomainError):
        difference_norm(a, c, "tau")
    runs = [_run(0.5, 0.05 / 2**k, 16 * 2**k, 8) for k in range(3)]
    assert 0.3 < order_from_runs(runs, "tau").estimated_p < 1.5


def test_sup_error_trivial_and_toy():
    h = _run(0.5, 0.1, 5, 8)
    rep = sup_error(h, h.frames)
    assert rep.sup_space_time == 0.0 and rep.sup_at_T == 0.0
    # one-step toy on three nodes against a made-up reference
    g = SpatialGrid(1.0, 2)
    spec = ProblemSpec(0.5, discrete_laplacian_kernel(1.0), 1.0, lambda x: (np.abs(x) < 0.5) * 1.0, g, TimeMesh(1.0, 1))
    hist = SolutionHistory(spec)
    u1 = step_direct(spec, hist)
    a = np.array([[-2.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -2.0]])
    np.testing.assert_allclose(u1, np.linalg.solve(np.eye(3) - math.gamma(1.5) * a, [0, 1, 0]), atol=1e-15)
    hist = march(spec)
    ref = lambda x, t: np.where(t > 0, 0.25, (np.abs(x) < 0.5) * 1.0)
    rep = sup_error(hist, ref)
    assert rep.sup_space_time == pytest.approx(np.max(np.abs(u1 - 0.25)), rel=1e-15)
    assert rep.sup_at_T <= rep.sup_space_time


def test_compact_support_error_vanishes_outside():
    alpha, s = 0.5, 0.75
    ref, d, u0 = compact_support_solution(alpha, s)
    g = SpatialGrid(2.0, 64)
    k = fractional_laplacian_kernel(s, g.h, default_k_max(g))
    h = march(ProblemSpec(alpha, k, d, u0, g, TimeMesh(0.05, 10)))
    outside = sup_error(h, ref, s, region=lambda x: np.abs(x) >= 1)
    assert outside.sup_space_time == 0.0
    assert sup_error(h, ref, s).sup_space_time > 0


def test_error_split_sanity():
    alpha, s = 0.5, 0.75
    ref, d, u0 = compact_support_solution(alpha, s)

    def err(cells, tau):
        g = SpatialGrid(1.0, cells)
        k = fractional_laplacian_kernel(s, g.h, default_k_max(g))
        return sup_error(march(ProblemSpec(alpha, k, d, u0, g, TimeMesh.from_horizon(0.5, tau))), ref).sup_space_time

    assert err(128, 2.0**-5) < err(128, 2.0**-4)
    assert err(32, 2.0**-10) < err(16, 2.0**-10)


# {{{ Gronwall


def test_gronwall_constant_sequence():
    y = np.full(30, 2.5)
    inst = GronwallInstance(0.4, 0.1, 0.0, 0.0, np.zeros(30))
    res = gronwall_validate(inst, y)
    assert res.passed and abs(res.margin) < 1e-12
    assert gronwall_simple_validate(0.4, 0.1, 1.0, y).passed


def test_gronwall_simple_exact_solution():
    # d^alpha y = G exactly, y^0 = 1
    for flavor in ("caputo", "rl"):
        inst = GronwallInstance(0.6, 0.05, 0.0, 0.0, np.full(41, 0.8), flavor=flavor)
        y = equality_sequence(inst, 1.0)
        np.testing.assert_allclose(l1_derivatives(y, 0.6, 0.05, flavor), 0.8, rtol=1e-12)
        res = gronwall_simple_validate(0.6, 0.05, 0.8, y, flavor)
        assert res.passed and res.margin >= -1e-12
        assert gronwall_validate(inst, y).passed


def test_gronwall_random_forcing_simple():
    rng = np.random.default_rng(3)
    for _ in range(50):
        F = rng.uniform(0, 2, 31)
        inst = GronwallInstance(rng.uniform(0.1, 0.9), 0.05, 0.0, 0.0, F)
        y = equality_sequence(inst, rng.uniform(0, 1))
        assert gronwall_simple_validate(inst.alpha, inst.tau, F[1:].max(), y).passed


def test_gronwall_not_applicable_and_fail():
    inst = GronwallInstance(0.5, 0.1, 0.0, 0.0, np.zeros(10))
    up = np.linspace(0, 1, 10)
    assert gronwall_validate(inst, up).status == "NOT_APPLICABLE"
    assert gronwall_validate(inst, -np.ones(10)).status == "NOT_APPLICABLE"
    # hypothesis holds (decreasing), bound computed with a deliberately small F1
    assert gronwall_validate(inst, np.linspace(1, 0, 10)).passed
    bad = GronwallInstance(0.5, 0.1, 0.0, 0.0, np.ones(10), F1=1e-3)
    assert gronwall_validate(bad, equality_sequence(bad, 0.0)).status == "NOT_APPLICABLE"
    # conclusion compared against a too-small bound reports FAIL, not N/A
    res = gronwall_simple_validate(0.5, 0.1, 1.0, np.array([0.0, 1.0]) * 0.1)
    assert res.passed
    with pytest.raises(DomainError):
        GronwallInstance(0.5, 1.0, 2.0, 0.0, np.zeros(4))


def _random_instance(rng, flavor):
    alpha = rng.uniform(0.1, 0.9)
    lam0, lam1 = rng.uniform(0, 1, 2)
    tau_max = math.inf if lam0 == 0 else (lam0 * math.gamma(2 - alpha)) ** (-1 / alpha)
    tau = min(rng.uniform(0.005, 0.1), 0.49 * tau_max)
    F = rng.uniform(0, 1, int(rng.integers(5, 60)))
    if rng.uniform() < 0.3:
        F[1:] *= np.arange(1, len(F)) ** -0.5
    return GronwallInstance(alpha, tau, lam0, lam1, F, flavor=flavor)


@pytest.mark.parametrize("flavor", ["caputo", "rl"])
def test_gronwall_equality_campaign(flavor):
    rng = np.random.default_rng(11 if flavor == "caputo" else 12)
    for _ in range(100):
        inst = _random_instance(rng, flavor)
        y = equality_sequence(inst, rng.uniform(0, 2))
        res = gronwall_validate(inst, y)
        assert res.status == "PASS", res.detail


# }}}


def test_truncation_linear_exact():
    tab = truncation_probe(lambda t: t, lambda t: t ** (1 - 0.4) / math.gamma(2 - 0.4), 0.4, [0.1, 0.05])
    assert max(e.max() for e in tab.errors) < 1e-13


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7])
def test_truncation_power_function(alpha):
    taus = 2.0 ** -np.arange(5, 10)
    tab = truncation_probe(lambda t: t**alpha, lambda t: np.full_like(t, math.gamma(1 + alpha)), alpha, taus)
    # n = 1 error does not depend on tau (scale invariance of t^alpha)
    first = tab.first_step()
    np.testing.assert_allclose(first, first[0], rtol=1e-10)
    # at a fixed interior time the decay is faster than tau^(1-alpha):
    # the observed rate is min(1 + alpha, 2 - alpha)
    slope = tab.slope_at(0.5)
    assert slope == pytest.approx(min(1 + alpha, 2 - alpha), abs=0.1)
    assert slope > 1 - alpha + 0.5
    # the pointwise bound C t_{n-1}^(alpha-1) tau^(1-alpha) holds with a tau-independent C
    consts = tab.bound_constants()
    assert consts.max() / consts.min() < 1.05


def test_tech_inequality_edges():
    assert tech_inequality_check(2.0, 2.0, 0.3).passed
    r = tech_inequality_check(3.0, 1.0, 1.0)
    assert r.passed and r.margin == pytest.approx(0.0, abs=1e-15)
    assert tech_inequality_check(1.0, 2.0, 0.5).status == "NOT_APPLICABLE"
    assert tech_inequality_check(1.0, 0.5, 1.5).status == "NOT_APPLICABLE"


def test_tech_inequality_fuzz():
    rng = np.random.default_rng(2024)
    for _ in range(10_000):
        a = 10 ** rng.uniform(-6, 6)
        b = a * (rng.uniform() if rng.uniform() < 0.8 else 1 - 10 ** rng.uniform(-15, -3))
        beta = rng.uniform(1e-3, 1.0)
        if b <= 0:
            continue
        assert tech_inequality_check(a, b, beta).passed


@given(
    a=st.floats(1e-3, 1e3),
    frac=st.floats(1e-6, 1.0),
    beta=st.floats(0.01, 1.0),
)
@settings(max_examples=200, deadline=None)
def test_tech_inequality_property(a, frac, beta):
    assert tech_inequality_check(a, a * frac, beta).passed


def test_order_uses_coarsest_grid():
    # synthetic runs U_k = f + 4^-k g on nested time grids; values off the
    # coarsest grid are garbage and must not enter
    t = np.linspace(0, 1, 5)
    base = np.outer(np.sin(t + 1), np.ones(3))
    runs = []
    for k in range(3):
        tk = np.linspace(0, 1, 4 * 2**k + 1)
        fr = np.outer(np.sin(tk + 1), np.ones(3)) + 4.0**-k * np.outer(tk, [1, 2, 1])
        fr[1 :: 2**k] += 0 if k == 0 else 1e3
        runs.append(fr)
    assert order_from_runs(runs, "tau").estimated_p == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(DomainError):
        order_from_runs([base, base, base], "tau")
