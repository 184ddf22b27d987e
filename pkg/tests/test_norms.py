import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laplace_maxwell import (AssemblyVariant, FeFunction, ProblemSpec, apriori_weight, assemble,
                             build_structured, interpolate, rate, relative_errors, solve, triple_norm,
                             weighted_l2)
from laplace_maxwell.norms import (WeightedNormSpec, difference, eps_divergence_l2,
                                   triple_norm_terms, weighted_l2_squared)

# sqrt(int s^2 eps) for m=2, s=1 from a 2000x2000 midpoint sum
WEIGHTED_ORACLE = 1.030776406404415


def const(c):
    return lambda x, y: np.broadcast_to(np.asarray(c, float), np.shape(x) + (2,))


def test_weighted_l2_examples(meshes):
    mesh = meshes[3]
    assert weighted_l2(const([1, 0]), mesh) == pytest.approx(1.0, rel=1e-14)
    spec = ProblemSpec.manufactured(m=2, s=1.0)
    got = weighted_l2(const([1, 0]), mesh, WeightedNormSpec(weight=lambda x, y: spec.s**2 * spec.eps(x, y)))
    assert got == pytest.approx(WEIGHTED_ORACLE, rel=1e-10)
    bnd = weighted_l2(const([1, 0]), mesh, WeightedNormSpec(boundary_weight=4.0, segments=("Gamma1", "Gamma2")))
    assert bnd == pytest.approx(2 * math.sqrt(2), rel=1e-14)


def test_negative_weight_rejected(meshes):
    with pytest.raises(ValueError):
        weighted_l2_squared(const([1, 0]), meshes[2], -1.0)


def test_triple_norm_zero_and_unit_eps(meshes, rng):
    mesh = meshes[3]
    spec = ProblemSpec.manufactured(m=2, s=2.0, bc_mode="robin")
    assert triple_norm(FeFunction(mesh, np.zeros(2 * mesh.nno)), mesh, spec) == 0.0
    # outside the inner square the divergence weight vanishes
    u = FeFunction(mesh, rng.normal(size=2 * mesh.nno))
    outside = mesh.regions == "Omega2"
    from laplace_maxwell.norms import divergence_l2_squared
    per = divergence_l2_squared(u, mesh, lambda x, y: spec.eps(x, y) - 1.0, per_element=True)
    assert np.all(per[outside] == 0.0)
    terms = triple_norm_terms(u, mesh, spec)
    assert set(terms) == {"mass", "grad", "div", "boundary"} and terms["boundary"] > 0
    assert triple_norm_terms(u, mesh, ProblemSpec.manufactured(m=2))["boundary"] == 0.0


@settings(max_examples=25, deadline=None)
@given(st.floats(-1e3, 1e3).filter(lambda a: a == 0 or abs(a) > 1e-100), st.integers(0, 2**32 - 1))
def test_homogeneity(alpha, seed):
    mesh = build_structured(2)
    spec = ProblemSpec.manufactured(m=3, bc_mode="robin")
    u = FeFunction(mesh, np.random.default_rng(seed).normal(size=2 * mesh.nno))
    assert triple_norm(alpha * u, mesh, spec) == pytest.approx(abs(alpha) * triple_norm(u, mesh, spec),
                                                               rel=1e-12, abs=1e-300)


def test_relative_errors_examples(meshes):
    exact = ProblemSpec.manufactured(m=2).exact
    zero = FeFunction(meshes[3], np.zeros(2 * meshes[3].nno))
    assert relative_errors(exact, zero) == pytest.approx((1.0, 1.0), rel=1e-14)
    e7 = relative_errors(exact, interpolate(exact, build_structured(7)))[0]
    e6 = relative_errors(exact, interpolate(exact, meshes[6]))[0]
    assert e7 < 1e-3 and e7 < e6

    class Zero:
        def __call__(self, x, y):
            return np.zeros(np.shape(x) + (2,))

        def grad(self, x, y):
            return np.zeros(np.shape(x) + (2, 2))

    with pytest.raises(ZeroDivisionError):
        relative_errors(Zero(), zero)


def test_difference_of_interpolant_is_small_at_nodes(meshes):
    exact = ProblemSpec.manufactured(m=2).exact
    mesh = meshes[4]
    d = difference(exact, interpolate(exact, mesh))
    assert weighted_l2_squared(d, mesh) < weighted_l2_squared(exact, mesh) * 1e-2


def test_rate_examples():
    assert round(rate(6.66e-3, 2.71e-2), 2) == 2.02
    assert rate(0.3, 0.3) == 0.0
    assert rate(0.25, 1.0) == pytest.approx(2.0, abs=1e-15)
    for bad in [(0.0, 1.0), (1.0, -1.0)]:
        with pytest.raises(ValueError):
            rate(*bad)


def test_apriori_weight_examples():
    assert apriori_weight(1.0, 0.25, 1.0) == pytest.approx(0.5)
    assert apriori_weight(2.0, 0.25, 1.0) == pytest.approx(0.5)
    assert apriori_weight(2.0, 1e-12, 1.0) < 1e-5


def test_divergence_constraint_decay():
    spec = ProblemSpec.manufactured(m=2)
    vals = []
    for l in range(3, 7):
        uh, _, _ = solve(assemble(build_structured(l), spec, AssemblyVariant.PAPER_LITERAL))
        vals.append(eps_divergence_l2(uh, spec))
    assert np.all(np.diff(vals) < 0)
    assert math.log2(vals[0] / vals[-1]) / 3 >= 0.8


@pytest.mark.xfail(strict=True, reason="no P1 function comes within 2x of the tabulated l=2 error; "
                                       "best approximation is already 40x larger")
def test_level2_error_against_table():
    spec = ProblemSpec.manufactured(m=2)
    uh, _, _ = solve(assemble(build_structured(2), spec, AssemblyVariant.PAPER_LITERAL))
    e1, _ = relative_errors(spec.exact, uh)
    assert 6.66e-3 / 2 <= e1 <= 2 * 6.66e-3
