import numpy as np
import pytest
from hypothesis import given, strategies as st

from logzyg.coeff import CoefficientSpec, make_coefficient, make_lower_order
from logzyg.commutator import (CommutatorNormTable, CoverageError, ResourceError, build_norm_table,
                               commutator_apply, commutator_matrix, decay_slope,
                               largest_singular_value, operator_norm, randomized_lower_bound,
                               verify_comm_decay)
from logzyg.grid import GridFunction, PeriodicGrid, random_band_limited
from logzyg.lp import build_profile, phi_nu

G = PeriodicGrid(128)
P = build_profile(G)
ROUGH = make_coefficient(CoefficientSpec(J=5), estimate=False).frozen(0.3)


def test_constant_field_commutes():
    g = random_band_limited(G, 60, np.random.default_rng(0))
    for nu in range(P.nu_max + 1):
        assert np.allclose(commutator_apply(nu, lambda x: np.full_like(x, 2.5), g, P).values, 0,
                           atol=1e-13)
        assert operator_norm(nu, nu, lambda x: np.full_like(x, 2.5), P).value <= 1e-13


@pytest.mark.parametrize("nu", [2, 3, 4, 5])
def test_two_mode_hand_computation(nu):
    g = GridFunction(G, np.exp(1j * 2**nu * G.x))
    out = commutator_apply(nu, np.cos, g, P).values
    w = 2**nu
    expect = 0.5 * ((phi_nu(w + 1, nu) - phi_nu(w, nu)) * np.exp(1j * (w + 1) * G.x)
                    + (phi_nu(w - 1, nu) - phi_nu(w, nu)) * np.exp(1j * (w - 1) * G.x))
    assert np.allclose(out, expect, atol=1e-13)


def test_small_perturbation_of_constant():
    g = random_band_limited(G, 8, np.random.default_rng(1))
    delta = 1e-6
    out = commutator_apply(5, lambda x: 1 + delta * np.cos(x), g, P)
    assert G.l2(out.values) <= 2 * delta * G.l2(g.values)


@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.integers(0, 5))
def test_linearity(seed, alpha, nu):
    rng = np.random.default_rng(seed)
    g1, g2 = (random_band_limited(G, 60, rng) for _ in range(2))
    f1, f2 = rng.standard_normal(128), rng.standard_normal(128)
    lhs = commutator_apply(nu, f1, alpha * g1 + g2, P).values
    rhs = alpha * commutator_apply(nu, f1, g1, P).values + commutator_apply(nu, f1, g2, P).values
    assert np.allclose(lhs, rhs, atol=1e-10)
    lhs = commutator_apply(nu, alpha * f1 + f2, g1, P).values
    rhs = alpha * commutator_apply(nu, f1, g1, P).values + commutator_apply(nu, f2, g1, P).values
    assert np.allclose(lhs, rhs, atol=1e-10)


@given(st.integers(0, 2**32 - 1), st.integers(0, 5), st.integers(0, 5))
def test_disjoint_support_factorization(seed, nu, mu):
    if abs(nu - mu) < 3:
        return
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(128) + 1j * rng.standard_normal(128)
    f = ROUGH(G.x)
    psi_g = G.multiplier(g, P.psi(mu))
    lhs = commutator_apply(nu, f, GridFunction(G, psi_g), P).values
    rhs = G.multiplier(f * psi_g - G.multiplier(f * g, P.psi(mu)), P.phi(nu))
    assert np.allclose(lhs, rhs, atol=1e-10)


@given(st.integers(0, 5), st.one_of(st.none(), st.integers(0, 5)))
def test_power_iteration_matches_svd(nu, mu):
    M = commutator_matrix(nu, mu, ROUGH, P)
    assert np.isclose(largest_singular_value(M), np.linalg.norm(M, 2), rtol=1e-10, atol=1e-14)


def test_spectral_gap_gives_zero():
    # a frequency-one field cannot bridge the gap between supp psi_mu and supp phi_nu
    p = build_profile(PeriodicGrid(512))
    for nu in range(p.nu_max + 1):
        for mu in range(p.nu_max + 1):
            if abs(nu - mu) >= 3:
                assert operator_norm(nu, mu, np.cos, p).value <= 1e-13


def test_dense_vs_randomized_cos():
    dense = operator_norm(4, 4, np.cos, P).value
    low = randomized_lower_bound(4, 4, np.cos, P)
    assert dense > 0 and low <= dense * (1 + 1e-12) and low >= 0.95 * dense
    assert np.isclose(dense, 0.19781365678137677, rtol=1e-10)


@given(st.integers(0, 1000), st.integers(0, 5), st.integers(0, 5))
def test_dense_dominates_randomized(seed, nu, mu):
    f = make_coefficient(CoefficientSpec(J=5, seed=seed), estimate=False).frozen(0.0)
    dense = operator_norm(nu, mu, f, P).value
    low = operator_norm(nu, mu, f, P, mode="randomized")
    assert low.lower_bound_only and low.value <= dense * (1 + 1e-10)
    assert low.value >= 0.95 * dense


def test_resource_cap():
    with pytest.raises(ResourceError):
        operator_norm(3, 3, np.cos, P, dense_cap=64)


def test_smooth_field_decays_like_inverse_frequency():
    p = build_profile(PeriodicGrid(512))
    rep = verify_comm_decay(np.cos, "smooth", range(4, 8), p)
    assert rep.slope <= -1 + 0.15
    assert np.isclose(decay_slope([1, 2, 3], [4, 2, 1]), -1)


def test_constant_field_report_passes():
    rep = verify_comm_decay(lambda x: np.full_like(x, 1.3), "log-lipschitz", range(2, 6), P, 1.3, 0.0)
    assert np.all(rep.norms <= 1e-13) and rep.passed


def test_norm_table_coverage_and_csv(tmp_path):
    tab = build_norm_table(ROUGH, P, "log-lipschitz", indices=range(3))
    assert tab.covers(3) and not tab.covers(4)
    assert tab.get(1, 2) == tab.norms[1, 2]
    with pytest.raises(CoverageError):
        tab.get(5, 0)
    tab.write_csv(tmp_path / "t.csv")
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "nu,mu,norm,kind,t" and len(rows) == 10
    with pytest.raises(ValueError):
        CommutatorNormTable(-np.ones((1, 1)), "x", 0.0, [0], [0])


def test_hoelder_report_records_both_rates():
    lo = make_lower_order(0.5, 0.1, 0.1, 6, 0)
    rep = verify_comm_decay(lo.b0_modes, "hoelder(0.5)", range(2, 6), P)
    assert rep.slope_fit["rate_2^-nu"] == -1.0 and rep.slope_fit["rate_2^-nu*omega"] == -0.5
    assert np.isfinite(rep.slope)
