import numpy as np
import pytest
from hypothesis import given, strategies as st

from logzyg.coeff import (CoefficientSpec, FunctionCoefficient, constant_coefficient,
                          make_coefficient, make_lower_order, zero_lower_order)
from logzyg.energy import (AdmissibilityError, ConsistencyError, EnergyConfig, EnergySnapshot,
                           InvariantError, SliceCache, TERM_LABELS, approx_energy,
                           block_energies, energy_derivative_budget,
                           finite_difference_derivative, r_epsilon_apply, sobolev_sandwich,
                           theta_upper, total_energy)
from logzyg.grid import GridFunction, PeriodicGrid, random_band_limited
from logzyg.lp import build_profile
from logzyg.mollify import smooth_coefficient
from logzyg.solver import CauchyProblem, default_dt, rhs

LOG2 = np.log(2.0)
G = PeriodicGrid(128)


def test_theta_upper_value():
    assert theta_upper(0.5) == pytest.approx(0.5 / (1 + LOG2), rel=1e-15)
    assert theta_upper(0.5) == pytest.approx(0.295308, abs=1e-6)
    assert theta_upper(5.0) == 0.5


@pytest.mark.parametrize("theta", [0.0, -0.1, 0.3, 0.6])
def test_inadmissible_theta(theta):
    with pytest.raises(AdmissibilityError):
        EnergyConfig(theta, 1.0)


def test_nonpositive_beta():
    with pytest.raises(AdmissibilityError):
        EnergyConfig(0.25, 0.0)


def test_horizon():
    ec = EnergyConfig(0.25, 2.0)
    assert ec.T == pytest.approx(0.25 * LOG2 / 4)
    assert ec.beta * ec.T == pytest.approx(0.125 * LOG2)
    assert ec.index_shift(ec.T) == pytest.approx(0.25 + 0.125)


@given(st.floats(0.01, 0.99), st.floats(0.05, 50.0), st.floats(0.0, 1.0))
def test_horizon_inequalities_hold(frac, beta, s):
    theta = frac * theta_upper(0.5)
    ec = EnergyConfig(theta, beta)
    assert all(ec.horizon_inequalities(s * ec.T).values())


def test_total_energy_examples():
    ec = EnergyConfig(0.25, 1.0)
    assert total_energy([1.0], ec.T, ec) == pytest.approx(2 ** -0.25, rel=1e-14)
    assert total_energy([1.0], ec.T, ec) == pytest.approx(0.8408964152537145, rel=1e-14)
    assert total_energy([0.0, 1.0], 0.0, ec) == pytest.approx(2 ** -0.5, rel=1e-14)
    assert total_energy([3.0, 0.0, 0.0], 0.02, ec) == pytest.approx(3 * np.exp(-0.04))
    with pytest.raises(ValueError):
        total_energy([1.0], 1.01 * ec.T, ec)
    with pytest.raises(ValueError):
        total_energy([1.0], -0.01, ec)


@given(st.floats(0.0, 1.0), st.integers(0, 12))
def test_weights_decrease_in_nu_and_t(s, nu):
    ec = EnergyConfig(0.2, 1.5)
    t = s * ec.T
    e = np.zeros(nu + 2)
    e[nu] = 1.0
    w0 = total_energy(e, t, ec)
    e2 = np.zeros(nu + 2)
    e2[nu + 1] = 1.0
    assert total_energy(e2, t, ec) < w0
    assert total_energy(e, 0.0, ec) >= w0


@pytest.mark.parametrize("k", [1, 3, 7])
def test_approx_energy_constant_one(kernel, k):
    x = G.x
    sl = smooth_coefficient(constant_coefficient(1.0), 0.3, 0.25, G, kernel)
    u = GridFunction(G, np.sin(k * x))
    v = GridFunction(G, np.cos(k * x))
    # int |v|^2 + |u_x|^2 + |u|^2 over one period
    assert approx_energy(u, v, sl) == pytest.approx(np.pi * (1 + k**2 + 1), rel=1e-12)


def test_approx_energy_constant_four(kernel):
    x = G.x
    sl = smooth_coefficient(constant_coefficient(4.0), 0.0, 0.5, G, kernel)
    u = GridFunction(G, np.sin(2 * x))
    v = GridFunction(G, 2 * np.cos(2 * x))
    # |v|^2 / 2 + 2 |u_x|^2 + |u|^2
    assert approx_energy(u, v, sl) == pytest.approx(np.pi * (2 + 8 + 1), rel=1e-12)


def test_approx_energy_consistency_checks(kernel):
    sl = smooth_coefficient(constant_coefficient(1.0), 0.1, 0.25, G, kernel)
    z = GridFunction.zeros(G)
    assert approx_energy(z, z, sl, nu=2, t=0.1) == 0.0
    with pytest.raises(ConsistencyError):
        approx_energy(z, z, sl, nu=3)
    with pytest.raises(ConsistencyError):
        approx_energy(z, z, sl, t=0.2)
    other = GridFunction.zeros(PeriodicGrid(64))
    with pytest.raises(ConsistencyError):
        approx_energy(other, other, sl)


def test_r_epsilon_constant_is_zero(kernel, rng):
    sl = smooth_coefficient(constant_coefficient(1.2), 0.1, 0.125, G, kernel)
    v = random_band_limited(G, 20, rng)
    # exact up to the quadrature residual of int rho'' = 0, which grows like eps^-2
    tol = 1e-11 / sl.eps**2 * np.max(np.abs(v.values))
    assert np.max(np.abs(r_epsilon_apply(sl, v).values)) <= tol


@pytest.mark.parametrize("eps", [1.0, 0.25, 1 / 64])
def test_r_epsilon_exponential_in_time(kernel, rng, eps):
    # a = e^{2t}: every smoothing is a constant multiple, so d_t g - g^2 = 1 - 5/4
    a = FunctionCoefficient(lambda t, x: np.exp(2 * t), lambda0=1.0, Lambda0=np.e)
    sl = smooth_coefficient(a, 0.2, eps, G, kernel)
    v = random_band_limited(G, 20, rng)
    out = r_epsilon_apply(sl, v).values
    tol = 1e-11 / eps**2 * np.max(np.abs(v.values))
    assert np.max(np.abs(out + 0.25 * v.values)) <= tol


def test_r_epsilon_linear(kernel, rng):
    a = make_coefficient(CoefficientSpec(J=5), estimate=False)
    sl = smooth_coefficient(a, 0.3, 0.125, G, kernel)
    v, w = random_band_limited(G, 20, rng), random_band_limited(G, 20, rng)
    lhs = r_epsilon_apply(sl, GridFunction(G, 2 * v.values - 3 * w.values)).values
    rhs_ = 2 * r_epsilon_apply(sl, v).values - 3 * r_epsilon_apply(sl, w).values
    assert np.max(np.abs(lhs - rhs_)) <= 1e-12 * (1 + np.max(np.abs(lhs)))
    with pytest.raises(InvariantError):
        r_epsilon_apply(sl, v, lambda0=10.0)


def _budget_setup(a, lower, n=128, kmax=16, seed=3):
    grid = PeriodicGrid(n)
    rng = np.random.default_rng(seed)
    u0 = random_band_limited(grid, kmax, rng)
    u1 = random_band_limited(grid, kmax, rng)
    pr = CauchyProblem(a, lower, u0, u1, grid, default_dt(grid, a.Lambda0), 0.1)
    return grid, build_profile(grid), pr


def test_budget_zero_state(kernel):
    a = make_coefficient(CoefficientSpec(J=5), estimate=False)
    grid, prof, pr = _budget_setup(a, make_lower_order(0.5, 0.1, 0.1, 4, 0))
    z = np.zeros(grid.n, dtype=complex)
    rep = energy_derivative_budget(z, z, z, 0.05, pr, prof, 3, kernel=kernel)
    assert set(rep.terms) == set(TERM_LABELS) and len(TERM_LABELS) == 14
    assert all(v == 0.0 for v in rep.terms.values())
    assert rep.e == 0.0


@pytest.mark.parametrize("nu", [1, 3, 5])
def test_budget_constant_coefficient_matches_difference(kernel, nu):
    grid, prof, pr = _budget_setup(constant_coefficient(1.0), zero_lower_order())
    u, v = pr.u0.values, pr.u1.values
    _, utt = rhs(pr, 0.0, u, v)
    rep = energy_derivative_budget(u, v, utt, 0.0, pr, prof, nu, kernel=kernel)
    rep.fd = finite_difference_derivative(pr, u, v, 0.0, nu, prof, kernel, 1e-3)
    assert abs(rep.total - rep.fd) <= 1e-7 * (1 + abs(rep.e))
    # constant a: only the forcing-free u u_t term and the transport pair survive
    for k in ("R_eps", "dt_sqrt_a_mismatch", "sqrt_a_mismatch", "dx_sqrt_a", "mixed", "comm_a"):
        assert abs(rep.terms[k]) <= 1e-10 * (1 + rep.e)


def test_budget_rough_coefficient(kernel):
    a = make_coefficient(CoefficientSpec(J=6), estimate=False)
    lower = make_lower_order(0.5, 0.1, 0.1, 5, 0)
    grid, prof, pr = _budget_setup(a, lower, n=256, kmax=32)
    t = 0.03
    u, v = pr.u0.values, pr.u1.values
    _, utt = rhs(pr, t, u, v)
    rep = energy_derivative_budget(u, v, utt, t, pr, prof, 4, kernel=kernel)
    rep.fd = finite_difference_derivative(pr, u, v, t, 4, prof, kernel, 1e-4)
    assert abs(rep.total - rep.fd) <= 1e-4 * (1 + abs(rep.e))


def test_budget_rejects_wrong_slice(kernel):
    grid, prof, pr = _budget_setup(constant_coefficient(1.0), zero_lower_order())
    sl = smooth_coefficient(pr.a, 0.5, 0.25, grid, kernel)
    z = np.zeros(grid.n, dtype=complex)
    with pytest.raises(ConsistencyError):
        energy_derivative_budget(z, z, z, 0.0, pr, prof, 2, sl=sl)
    with pytest.raises(ConsistencyError):
        energy_derivative_budget(z, z, z, 0.0, pr, prof, 2)


def test_sandwich_zero_is_degenerate(kernel):
    prof = build_profile(G)
    sc = SliceCache(constant_coefficient(1.0), G, kernel)
    ec = EnergyConfig(0.25, 1.0)
    z = np.zeros(G.n, dtype=complex)
    rep = sobolev_sandwich(z, z, 0.0, prof, sc, ec)
    assert rep.degenerate and rep.ratio == 1.0


SANDWICH_A = make_coefficient(CoefficientSpec(J=5), estimate=False)


@given(st.integers(0, 10_000), st.integers(2, 40), st.floats(0.0, 1.0))
def test_sandwich_band_random_data(kernel, seed, kmax, s):
    prof = build_profile(G)
    sc = SliceCache(SANDWICH_A, G, kernel)
    ec = EnergyConfig(0.25, 1.0)
    rng = np.random.default_rng(seed)
    u = random_band_limited(G, kmax, rng).values
    v = random_band_limited(G, kmax, rng).values
    rep = sobolev_sandwich(u, v, s * ec.T, prof, sc, ec)
    assert 0.2 <= rep.ratio <= 2.0


@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_block_energies_nonnegative(kernel, seed, s):
    prof = build_profile(G)
    sc = SliceCache(SANDWICH_A, G, kernel)
    rng = np.random.default_rng(seed)
    u = random_band_limited(G, 40, rng).values
    v = random_band_limited(G, 40, rng).values
    e = block_energies(u, v, s * 0.08, prof, sc)
    assert len(e) == prof.nu_max + 2
    assert np.all(e >= 0)


def test_snapshot_rejects_negative():
    with pytest.raises(InvariantError):
        EnergySnapshot(0.0, np.array([1.0, -1e-3]), 0.0, (0.0, 0.0))
