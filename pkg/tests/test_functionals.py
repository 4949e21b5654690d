import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from sklearn.base import clone

from bridgelab.functionals import (
    DomainError,
    ExponentialFunctional,
    IdentityKind,
    closed_form_beta0,
    evaluate_functional,
    exp_weight,
    exponent_factor,
    kind_grid,
    log_functionals,
    log_gap_of_u,
    measure_scale,
    measure_weight,
    target,
    truncated_half_target,
    u_of_log_gap,
)
from bridgelab.sampling import TimeGrid, make_grid, sample_exact

from conftest import deterministic_batch

K = IdentityKind

ALL_CASES = [
    (K.BOUGEROL, 0.0), (K.DMMY, 1.0), (K.LINK_A, 0.6), (K.LINK_A, 0.75), (K.LINK_A, 2.0),
    (K.LINK_B, 0.0), (K.LINK_B, 0.25), (K.LINK_B, 0.4), (K.LINK12_LOG, 0.5),
    (K.LINK12_TRUNC, 0.5), (K.HALF_VANISH, 0.5),
]


def smooth_m(s):
    return np.sin(2.0 * s)


def oracle(kind, alpha, beta, eps=1e-6):
    """The functional of the path X_s = (1-s)^alpha sin(2s) by adaptive quadrature."""
    opts = dict(epsabs=0, epsrel=1e-12, limit=400)
    if kind in (K.BOUGEROL, K.DMMY):
        # w = m = 1
        return integrate.quad(lambda s: math.exp(beta * (1 - s) ** alpha * smooth_m(s)), 0, 1, **opts)[0]
    if kind is K.LINK_A:
        # w = (1-s)^(a-1), m = (1-s)^(2a-2); tanh-sinh copes with the endpoint power
        mpmath.mp.dps = 30
        f = lambda s: (1 - s) ** (2 * alpha - 2) * mpmath.exp(beta * (1 - s) ** (2 * alpha - 1) * mpmath.sin(2 * s))
        return float(mpmath.quad(f, [0, 0.5, 1]))
    if kind is K.LINK_B:
        f = lambda s: math.exp(beta * smooth_m(s))
        return integrate.quad(f, 0, 1, weight="alg", wvar=(0, -2 * alpha), **opts)[0]
    # alpha = 1/2 kinds, in v = -log(1 - s) where m(s) ds becomes dv or dv/(1+v)^2
    s_of = lambda v: -math.expm1(-v)
    if kind is K.LINK12_LOG:
        f = lambda v: math.exp(beta * smooth_m(s_of(v)) / (1 + v)) / (1 + v) ** 2
        return integrate.quad(f, 0, np.inf, **opts)[0]
    upper = 1.0 if kind is K.LINK12_TRUNC else -math.log(eps)
    f = lambda v: math.exp(beta * smooth_m(s_of(v)))
    return integrate.quad(f, 0, upper, **opts)[0]


def exp_log_rtol(value):
    # the value is formed as exp(log v): relative rounding grows with |log v|
    return 2.0 ** -52 * (2.0 + abs(math.log(value)))


def smooth_batch(kind, alpha, m=4096, eps=1e-6):
    g = kind_grid(kind, alpha, m, eps)
    return deterministic_batch(g, alpha, smooth_m(g.nodes))


# --- kind table ----------------------------------------------------------------

def test_kind_table():
    assert [k.value for k in K] == [
        "bougerol", "dmmy", "link-a", "link-b", "link12-log", "link12-trunc", "half-vanish"]
    assert {k for k in K if k.power == -1.0} == {K.DMMY, K.LINK_A, K.LINK12_LOG}
    assert K.parse("LINK_A") is K.LINK_A
    assert K.parse(K.DMMY) is K.DMMY
    with pytest.raises(ValueError):
        K.parse("nope")
    assert [k for k in K if k.truncated] == [K.HALF_VANISH]


@pytest.mark.parametrize("kind, good, bad", [
    (K.LINK_A, 0.51, 0.5), (K.LINK_B, 0.0, 0.5), (K.DMMY, 1.0, 0.99),
    (K.BOUGEROL, 0.0, 0.1), (K.HALF_VANISH, 0.5, 0.6),
])
def test_domains(kind, good, bad):
    kind_grid(kind, good, 8)
    with pytest.raises(DomainError):
        kind_grid(kind, bad, 8)


def test_negative_alpha_rejected():
    with pytest.raises(ValueError):
        kind_grid(K.LINK_B, -0.1, 8)


def test_targets():
    assert target(K.LINK_A, 0.75) == (-1.0, 0.5)
    p, v = target(K.LINK_B, 0.25)
    assert p == -0.5 and v == pytest.approx(math.sqrt(0.5), rel=1e-15)
    assert target(K.HALF_VANISH, 0.5) == (-0.5, 0.0)
    for kind in (K.BOUGEROL, K.DMMY, K.LINK12_LOG, K.LINK12_TRUNC):
        assert target(kind, kind.fixed_alpha)[1] == 1.0
    assert truncated_half_target(math.exp(-4)) == pytest.approx(0.5, rel=1e-15)


def test_closed_form_beta0():
    assert closed_form_beta0(K.LINK_A, 0.75) == 2.0
    assert closed_form_beta0(K.LINK_B, 0.25) == 2.0
    assert closed_form_beta0(K.HALF_VANISH, 0.5, math.exp(-3)) == pytest.approx(3.0, rel=1e-15)
    with pytest.raises(ValueError):
        closed_form_beta0(K.HALF_VANISH, 0.5)


# --- substitution ----------------------------------------------------------------

@pytest.mark.parametrize("kind, alpha", ALL_CASES)
def test_u_map_round_trip_and_measure(kind, alpha):
    lg = np.linspace(0, -3, 41)
    u = u_of_log_gap(kind, alpha, lg)
    np.testing.assert_allclose(log_gap_of_u(kind, alpha, u), lg, rtol=1e-12, atol=1e-14)
    # m(s) ds = scale du, checked by central differences in s
    s = -np.expm1(lg[1:-1])
    h = 1e-6 * (1 - s)
    du = (u_of_log_gap(kind, alpha, np.log1p(-(s + h))) - u_of_log_gap(kind, alpha, np.log1p(-(s - h)))) / (2 * h)
    np.testing.assert_allclose(measure_scale(kind, alpha) * du, measure_weight(kind, alpha, s), rtol=1e-7)


@pytest.mark.parametrize("kind, alpha", ALL_CASES)
def test_exponent_factor_matches_weight(kind, alpha):
    s = np.linspace(0, 0.99, 23)
    np.testing.assert_allclose(exponent_factor(kind, alpha, np.log1p(-s)),
                               exp_weight(kind, alpha, s) * (1 - s) ** alpha, rtol=1e-13)


@pytest.mark.parametrize("kind, alpha", [(K.DMMY, 1.0), (K.LINK_A, 0.8), (K.LINK12_LOG, 0.5)])
def test_exponent_vanishes_at_one(kind, alpha):
    assert exponent_factor(kind, alpha, -np.inf) == 0.0


def test_kind_grid_shapes():
    g = kind_grid(K.LINK_A, 0.75, 9)
    assert g.reaches_one and g.eps == 0.0
    np.testing.assert_allclose(np.diff(g.u), 1 / 8, rtol=1e-14)
    h = kind_grid(K.HALF_VANISH, 0.5, 9, 1e-4)
    assert h.log_gap[-1] == pytest.approx(math.log(1e-4), rel=1e-15)
    assert h.eps == 1e-4
    t = kind_grid(K.LINK12_TRUNC, 0.5, 9)
    assert t.log_gap[-1] == -1.0


# --- beta = 0 ---------------------------------------------------------------------

@pytest.mark.parametrize("kind, alpha", ALL_CASES)
def test_beta0_equals_closed_form(kind, alpha):
    g = kind_grid(kind, alpha, 4096, 1e-6)
    batch = sample_exact(alpha, g, 3, 5)
    got = np.exp(log_functionals(kind, alpha, 0.0, batch))
    want = closed_form_beta0(kind, alpha, 1e-6)
    np.testing.assert_allclose(got, want, rtol=4e-16)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.5, 5.0, exclude_min=True), st.integers(2, 300))
def test_beta0_exact_link_a(alpha, m):
    g = kind_grid(K.LINK_A, alpha, m)
    batch = deterministic_batch(g, alpha, np.cos(np.arange(m)))
    got = math.exp(log_functionals(K.LINK_A, alpha, 0.0, batch)[0])
    want = 1 / (2 * alpha - 1)
    assert got == pytest.approx(want, rel=exp_log_rtol(want))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 0.5, exclude_max=True), st.integers(2, 300))
def test_beta0_exact_link_b(alpha, m):
    g = kind_grid(K.LINK_B, alpha, m)
    batch = deterministic_batch(g, alpha, np.cos(np.arange(m)))
    got = math.exp(log_functionals(K.LINK_B, alpha, 0.0, batch)[0])
    want = 1 / (1 - 2 * alpha)
    assert got == pytest.approx(want, rel=exp_log_rtol(want))


# --- quadrature -------------------------------------------------------------------

@pytest.mark.parametrize("kind, alpha", ALL_CASES + [(K.LINK_A, 0.9)])
@pytest.mark.parametrize("beta", [-2.0, 1.5])
def test_quadrature_against_adaptive_oracle(kind, alpha, beta):
    got = math.exp(log_functionals(kind, alpha, beta, smooth_batch(kind, alpha))[0])
    assert got == pytest.approx(oracle(kind, alpha, beta), rel=2e-6)


def test_quadrature_converges_at_second_order():
    errs = []
    for m in (257, 513, 1025):
        got = math.exp(log_functionals(K.DMMY, 1.0, 1.0, smooth_batch(K.DMMY, 1.0, m))[0])
        errs.append(abs(got - oracle(K.DMMY, 1.0, 1.0)))
    assert 3.5 < errs[0] / errs[1] < 4.5
    assert 3.5 < errs[1] / errs[2] < 4.5


def test_raw_values_and_batch_agree():
    kind, alpha = K.LINK_A, 0.8
    batch = smooth_batch(kind, alpha, 300)
    a = log_functionals(kind, alpha, 1.0, batch)
    b = log_functionals(kind, alpha, 1.0, batch.values, batch.grid)
    np.testing.assert_allclose(a, b, rtol=1e-13)


def test_nonuniform_grid_falls_back_to_general_trapezoid():
    g = make_grid(2000, "geometric-to-one", 1e-9)
    batch = deterministic_batch(g, 0.5, smooth_m(g.nodes))
    got = math.exp(log_functionals(K.HALF_VANISH, 0.5, 1.0, batch)[0])
    assert got == pytest.approx(oracle(K.HALF_VANISH, 0.5, 1.0, eps=1e-9), rel=1e-4)


def test_extreme_beta_stays_finite_in_log():
    batch = smooth_batch(K.DMMY, 1.0, 500)
    lf = log_functionals(K.DMMY, 1.0, 5000.0, batch)[0]
    assert np.isfinite(lf) and lf > 709
    v = evaluate_functional(K.DMMY, 1.0, 5000.0, batch)
    assert v.flagged and v.value == math.inf and v.log_value == pytest.approx(lf)


# --- structure --------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.integers(3, 200))
def test_half_vanish_decreases_with_eps(beta, cut):
    g = kind_grid(K.HALF_VANISH, 0.5, 201, 1e-6)
    mart = smooth_m(g.nodes)
    logs = []
    for k in (cut - 1, cut):
        sub = TimeGrid.from_log_gap(g.log_gap[:k], g.scheme, math.exp(g.log_gap[k - 1]), g.u[:k])
        logs.append(log_functionals(K.HALF_VANISH, 0.5, beta, deterministic_batch(sub, 0.5, mart[:k]))[0])
    # each extra node adds a positive piece; it may round away in the sum
    assert logs[0] <= logs[1]


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(ALL_CASES), st.floats(-4, 4), st.integers(0, 2**32))
def test_functional_positive_and_finite(case, beta, seed):
    kind, alpha = case
    batch = sample_exact(alpha, kind_grid(kind, alpha, 64, 1e-3), 4, seed)
    logs = log_functionals(kind, alpha, beta, batch)
    assert np.all(np.isfinite(logs))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(ALL_CASES), st.floats(0.1, 4), st.integers(0, 2**32))
def test_negated_path_is_negated_beta(case, beta, seed):
    kind, alpha = case
    batch = sample_exact(alpha, kind_grid(kind, alpha, 64, 1e-3), 3, seed)
    np.testing.assert_array_equal(log_functionals(kind, alpha, -beta, batch),
                                  log_functionals(kind, alpha, beta, -batch))


def test_domain_limits_of_grids():
    with pytest.raises(DomainError):
        log_functionals(K.LINK12_TRUNC, 0.5, 1.0, sample_exact(0.5, make_grid(9, "geometric-to-one", 0.1), 1, 0))
    with pytest.raises(DomainError):
        log_functionals(K.HALF_VANISH, 0.5, 1.0, np.zeros(5), make_grid(5, "uniform", 0))


def test_raw_array_needs_grid_and_matching_width():
    with pytest.raises(TypeError):
        log_functionals(K.DMMY, 1.0, 1.0, np.zeros((1, 5)))
    with pytest.raises(ValueError):
        log_functionals(K.DMMY, 1.0, 1.0, np.zeros((1, 5)), make_grid(6, "uniform", 0))


def test_evaluate_functional_record():
    g = kind_grid(K.LINK_A, 0.75, 4096)
    v = evaluate_functional("link-a", 0.75, 0.0, np.zeros(4096), g)
    assert v.value == pytest.approx(2.0, rel=4e-16)
    assert v.kind is K.LINK_A and v.eps_used == 0.0 and not v.flagged
    assert v.quadrature == "trapezoid-uniform-u"
    h = evaluate_functional(K.HALF_VANISH, 0.5, 0.0, smooth_batch(K.HALF_VANISH, 0.5, 64, 1e-2))
    assert h.eps_used == pytest.approx(1e-2)
    with pytest.raises(ValueError):
        evaluate_functional(K.DMMY, 1.0, 1.0, np.zeros((2, 4096)), g)


# --- estimator --------------------------------------------------------------------

def test_estimator_outputs_and_clone():
    g = kind_grid(K.DMMY, 1.0, 129)
    batch = sample_exact(1.0, g, 6, 2)
    est = ExponentialFunctional("dmmy", 1.0, 0.7, g, "log")
    logs = est.fit_transform(batch)
    np.testing.assert_allclose(logs[:, 0], log_functionals(K.DMMY, 1.0, 0.7, batch))
    power = clone(est).set_params(output="power").fit(batch).transform(batch)
    np.testing.assert_allclose(power, np.exp(-logs), rtol=1e-14)
    value = ExponentialFunctional(grid=g, beta=0.7).fit(batch.values).transform(batch.values)
    np.testing.assert_allclose(value, np.exp(logs), rtol=1e-13)
    assert est.get_params()["kind"] == "dmmy"


def test_estimator_rejects_bad_setup():
    g = kind_grid(K.DMMY, 1.0, 9)
    with pytest.raises(ValueError):
        ExponentialFunctional(grid=None).fit(np.zeros((1, 9)))
    with pytest.raises(DomainError):
        ExponentialFunctional("dmmy", 0.5, grid=g).fit(np.zeros((1, 9)))
    with pytest.raises(ValueError):
        ExponentialFunctional(grid=g, output="cube").fit(np.zeros((1, 9)))
    with pytest.raises(ValueError):
        ExponentialFunctional(grid=g).fit(np.zeros((1, 8)))
