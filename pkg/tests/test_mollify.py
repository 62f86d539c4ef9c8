import numpy as np
import pytest
from hypothesis import given, strategies as st

from logzyg.coeff import CoefficientSpec, FunctionCoefficient, constant_coefficient, make_coefficient
from logzyg.grid import PeriodicGrid
from logzyg.mollify import (ArgumentError, BOUND_IDS, InconsistentInputError, build_mollifier,
                            lemma_bounds, smooth_coefficient, smooth_fields, verify_lemma_approx)

# frozen from a 4e6-point trapezoid evaluation of exp(-1/(1-s^2)) on [-1, 1]
NORM_CONST = 2.2522836210435813
RHO1_L1 = 1.6571376797382105
RHO2_L1 = 7.19316101043483
MAX_RHO1 = 1.7982902526087072

KERNEL = build_mollifier()
S = np.linspace(-1, 1, 4_000_001)[1:-1]
BUMP = np.exp(-1 / (1 - S**2))


def test_normalization_against_trapezoid(kernel):
    assert np.isclose(1 / np.trapezoid(BUMP, S), NORM_CONST, rtol=1e-10)
    assert np.isclose(kernel.norm_const, NORM_CONST, rtol=1e-13)
    assert abs(np.trapezoid(kernel.rho(S), S) - 1) <= 1e-10


def test_kernel_conditions(kernel):
    s = np.linspace(-1.5, 1.5, 30001)
    r = kernel.rho(s)
    assert np.all(r >= 0) and r.max() <= 1
    assert np.all(r[np.abs(s) >= 1] == 0)
    assert np.allclose(r, kernel.rho(-s))
    assert np.isclose(kernel.rho(0.0), NORM_CONST / np.e)
    assert np.isclose(r.max(), 0.8285688398691052)
    assert kernel.max_abs_rho1 <= 2


def test_derivative_norms_against_dense_oracles(kernel):
    d1 = np.gradient(NORM_CONST * BUMP, S)
    d2 = np.gradient(d1, S)
    assert np.isclose(np.trapezoid(np.abs(d1), S), RHO1_L1, rtol=1e-6)
    assert np.isclose(np.trapezoid(np.abs(d2), S), RHO2_L1, rtol=1e-4)
    assert np.isclose(np.abs(d1).max(), MAX_RHO1, rtol=1e-6)
    assert np.isclose(kernel.norm_rho1_L1, RHO1_L1, rtol=1e-12)
    assert np.isclose(kernel.norm_rho2_L1, RHO2_L1, rtol=1e-10)
    assert np.isclose(kernel.max_abs_rho1, MAX_RHO1, rtol=1e-10)
    assert np.allclose(kernel.drho(S[::1000]), d1[::1000], atol=1e-5)


@given(st.floats(0, 300))
def test_rho_hat_against_trapezoid(z):
    kern = KERNEL
    oracle = np.trapezoid(NORM_CONST * BUMP[::10] * np.cos(z * S[::10]), S[::10])
    assert abs(kern.rho_hat(z)[0] - oracle) <= 1e-9


def test_constant_smoothing(kernel):
    g = PeriodicGrid(32)
    for method in ("trig", "quadrature"):
        a = make_coefficient(CoefficientSpec(amp_t=0, amp_x=0)) if method == "trig" \
            else constant_coefficient(1.0)
        sl = smooth_coefficient(a, 0.3, 0.25, g, kernel, method=method)
        f = sl.arrays()
        assert np.allclose(f[0], 1, atol=1e-10)
        for d in f[1:]:
            assert np.allclose(d, 0, atol=1e-10)
    # second-derivative residual is the rule's error for int rho'' = 0, amplified by eps^-2
    a = constant_coefficient(1.0)
    r = [np.abs(smooth_coefficient(a, 0.3, e, g, kernel).arrays()[3]).max() for e in (0.25, 0.125)]
    assert r[1] <= 4.5 * max(r[0], 1e-14)


def test_even_kernel_preserves_affine(kernel):
    g = PeriodicGrid(16)
    a = FunctionCoefficient(lambda t, x: 1 + 0.1 * t + 0.05 * x, 0.5, 2.0)
    sl = smooth_coefficient(a, 0.4, 0.25, g, kernel)
    a_eps, at, ax, att, atx = sl.arrays()
    assert np.allclose(a_eps, 1 + 0.04 + 0.05 * g.x, atol=1e-10)
    assert np.allclose(at, 0.1, atol=1e-10) and np.allclose(ax, 0.05, atol=1e-10)
    assert np.allclose(att, 0, atol=1e-9) and np.allclose(atx, 0, atol=1e-9)
    t_only = FunctionCoefficient(lambda t, x: t, 0.0, 10.0)
    f = smooth_fields(t_only, 0.7, g.x, 0.25, kernel)
    assert np.allclose(f[0], 0.7, atol=1e-10) and np.allclose(f[1], 1, atol=1e-10)


def test_sin_t_damping_factor(kernel):
    eps = 0.25
    kappa = np.trapezoid(NORM_CONST * BUMP * np.cos(eps * S), S)
    assert kappa < 1
    a = FunctionCoefficient(lambda t, x: 1 + 0.1 * np.sin(t), 0.5, 1.5)
    g = PeriodicGrid(16)
    for t in (0.0, 0.9, 2.1):
        a_eps = smooth_coefficient(a, t, eps, g, kernel).arrays()[0]
        assert np.allclose(a_eps, 1 + 0.1 * kappa * np.sin(t), atol=1e-12)


def test_trig_path_matches_quadrature(kernel):
    a = make_coefficient(CoefficientSpec(J=6), estimate=False)
    g = PeriodicGrid(32)
    fa = smooth_fields(a, 0.37, g.x, 2.0**-4, kernel, method="trig")
    fq = smooth_fields(a, 0.37, g.x, 2.0**-4, kernel, method="quadrature")
    for u, v in zip(fa, fq):
        assert np.allclose(u, v, atol=1e-10)
    # the default rough coefficient at the finest scale
    a = make_coefficient(CoefficientSpec(), estimate=False)
    g = PeriodicGrid(16)
    fa = smooth_fields(a, 1.1, g.x, 2.0**-8, kernel, method="trig")
    fq = smooth_fields(a, 1.1, g.x, 2.0**-8, kernel, method="quadrature")
    for u, v in zip(fa, fq):
        assert np.allclose(u, v, atol=1e-9 * max(1.0, np.abs(v).max()))


def test_time_derivative_matches_differences(kernel):
    a = make_coefficient(CoefficientSpec(), estimate=False)
    x = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    eps, t, h = 2.0**-5, 0.8, 1e-4
    f = smooth_fields(a, t, x, eps, kernel)
    fp = smooth_fields(a, t + h, x, eps, kernel)
    fm = smooth_fields(a, t - h, x, eps, kernel)
    assert np.allclose((fp[0] - fm[0]) / (2 * h), f[1], rtol=0, atol=1e-5 * np.abs(f[1]).max())
    assert np.allclose((fp[1] - fm[1]) / (2 * h), f[3], rtol=0, atol=1e-5 * np.abs(f[3]).max())


@given(st.integers(0, 50), st.integers(1, 8), st.floats(0, 6.3))
def test_smoothed_ellipticity(seed, m, t):
    kern = KERNEL
    spec = CoefficientSpec(seed=seed)
    a = make_coefficient(spec, estimate=False)
    a_eps = smooth_fields(a, t, np.linspace(0, 2 * np.pi, 256), 2.0**-m, kern)[0]
    assert a_eps.min() >= spec.lambda0 and a_eps.max() <= spec.Lambda0


def test_convergence_as_eps_halves(kernel):
    a = make_coefficient(CoefficientSpec())
    g = PeriodicGrid(256)
    rep = verify_lemma_approx(a, [2.0**-m for m in range(3, 10)], g, kernel)
    errs = np.array([r.measured for r in rep.rows if r.bound_id == "a_eps-a"])
    assert np.all(errs[1:] <= errs[:-1] * 1.05)
    eps = 2.0 ** -np.arange(3, 10)
    rate = errs / (eps * np.log(1 / eps + 1))
    # at least as fast as eps log(1/eps + 1): the normalized error never rises above its start
    assert np.all(rate <= rate[0] * 1.05)


def test_lemma_sweep_ratios(kernel):
    a = make_coefficient(CoefficientSpec())
    rep = verify_lemma_approx(a, [2.0**-m for m in range(3, 9)], PeriodicGrid(256), kernel)
    assert rep.C0 == a.C0_est
    assert np.all(rep.ratios("a_eps-a") <= 1.1)
    assert rep.passed and rep.max_ratio <= 1.25
    assert rep.min_ellipticity >= a.lambda0 and rep.max_ellipticity <= a.Lambda0
    for bid in BOUND_IDS[2:]:
        r = rep.ratios(bid)
        assert r.max() <= 2 * np.median(r)


def test_lemma_constant_and_errors(kernel):
    a = make_coefficient(CoefficientSpec(amp_t=0, amp_x=0))
    rep = verify_lemma_approx(a, [0.25, 0.125], PeriodicGrid(32), kernel)
    assert rep.passed and all(r.measured <= 1e-12 for r in rep.rows if r.bound_id != "a_eps-a")
    rough = make_coefficient(CoefficientSpec(), estimate=False)
    with pytest.raises(InconsistentInputError):
        verify_lemma_approx(rough, [0.25], PeriodicGrid(32), kernel)
    with pytest.raises(ArgumentError):
        smooth_fields(rough, 0.0, np.zeros(3), 0.0, kernel)
    b = lemma_bounds(0.125, 1.0, kernel)
    assert np.isclose(b["a_eps-a"], 1.5 * 0.125 * np.log(9))
