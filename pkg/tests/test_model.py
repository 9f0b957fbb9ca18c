import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqrd.errors import InvalidSpecError
from seqrd.model import (SourceSpec, SystemKind, build_covariance, cnc_constraints,
                         in_region_cc, in_region_jc, is_psd, jc_hypercube_bound,
                         markov_constraints, parse_kind)


def test_independent_frames_identity():
    S = build_covariance(SourceSpec.gauss_markov([1, 1, 1], [0, 0]))
    assert np.array_equal(S, np.eye(3))


def test_first_order_entries(example_a):
    _, S, _ = example_a
    assert S[0, 1] == pytest.approx(0.9)
    assert S[0, 2] == pytest.approx(0.81)


def test_order2_yule_walker():
    a1, a2 = 0.5, 0.3
    S = build_covariance(SourceSpec.autoregressive((a1, a2), 1.0, 5))
    # oracle: stationary Yule-Walker equations of X_t = a1 X_{t-1} + a2 X_{t-2} + W_t
    A = np.array([[1, -a1, -a2], [-a1, 1 - a2, 0], [-a2, -a1, 1]])
    g0, g1, g2 = np.linalg.solve(A, [1, 0, 0])
    for t in range(5):
        assert S[t, t] == pytest.approx(g0, rel=1e-10)
    for t in range(4):
        assert S[t, t + 1] == pytest.approx(g1, rel=1e-10)
    for t in range(3):
        assert S[t, t + 2] == pytest.approx(g2, rel=1e-10)


@pytest.mark.parametrize("kwargs", [
    dict(variances=[1, -1], correlations=[0.5]),
    dict(variances=[1, 1], correlations=[1.5]),
    dict(variances=[1, 1, 1], correlations=[0.5]),
])
def test_invalid_gauss_markov(kwargs):
    with pytest.raises(InvalidSpecError):
        SourceSpec.gauss_markov(**kwargs)


def test_invalid_binary():
    with pytest.raises(InvalidSpecError):
        SourceSpec.binary_markov([0.7, 0.1])


def test_region_cc_examples(example_a):
    spec, _, D = example_a
    assert in_region_cc(spec, D)
    assert not in_region_cc(spec, (2.0, 0.05, 0.05))
    indep = SourceSpec.gauss_markov([1, 2, 3], [0, 0])
    assert in_region_cc(indep, (1, 2, 3))


def test_region_jc_examples(example_a):
    _, S, _ = example_a
    lam = np.linalg.eigvalsh(S)[0]
    assert lam == pytest.approx(0.0693, abs=1e-4)
    assert in_region_jc(S, [0.05] * 3)
    assert np.linalg.eigvalsh(S - 0.1 * np.eye(3))[0] == pytest.approx(-0.0307, abs=1e-4)
    assert not in_region_jc(S, [0.1] * 3)
    assert in_region_jc(S, [0, 0, 0])


def test_hypercube_bound_examples(example_a):
    _, S, _ = example_a
    assert jc_hypercube_bound(np.eye(3)) == 1.0
    assert jc_hypercube_bound(S) == pytest.approx(0.0693, abs=1e-4)
    singular = np.array([[1, 1, 0.9], [1, 1, 0.9], [0.9, 0.9, 1]])
    assert jc_hypercube_bound(singular) == 0.0


def test_markov_constraints_examples():
    assert markov_constraints(SystemKind("JC"), 3) == []
    (c,) = markov_constraints(parse_kind("CNC1"), 3)
    assert c.describe(3) == "(Xhat1) _|_ (X3) | (X1,X2)"
    cc = [c.describe(3) for c in markov_constraints(SystemKind("CC"), 3)]
    assert cc == ["(Xhat1) _|_ (X2,X3) | (X1)", "(Xhat2) _|_ (X3) | (X1,X2,Xhat1)"]


@pytest.mark.parametrize("text,want", [
    ("CC", SystemKind("CC")), ("JC", SystemKind("JC")), ("CNC1", SystemKind.cnc(1)),
    ("C-NC(2)", SystemKind.cnc(2)), ("NCC1", SystemKind.ncc(1)),
    ("NCNC(1,1)", SystemKind.ncnc(1, 1)), ("ncnc1_2", SystemKind.ncnc(1, 2)),
])
def test_parse_kind(text, want):
    assert parse_kind(text) == want


@pytest.mark.parametrize("text", ["CNC", "CC1", "XYZ", "NCNC(1)"])
def test_parse_kind_rejects(text):
    with pytest.raises(ValueError):
        parse_kind(text)


# -- properties ------------------------------------------------------------

first_order = st.integers(2, 6).flatmap(lambda T: st.tuples(
    st.lists(st.floats(0.01, 10), min_size=T, max_size=T),
    st.lists(st.floats(-0.999, 0.999), min_size=T - 1, max_size=T - 1)))


@given(first_order)
def test_covariance_symmetric_psd(params):
    S = build_covariance(SourceSpec.gauss_markov(*params))
    assert np.array_equal(S, S.T)
    assert is_psd(S)


@given(st.integers(2, 7), st.data())
def test_cnc_constraint_count(T, data):
    k = data.draw(st.integers(0, T - 1))
    assert len(cnc_constraints(T, k)) == max(0, T - k - 1)
    assert markov_constraints(SystemKind.cnc(k), T) == cnc_constraints(T, k)


@given(st.integers(2, 7))
def test_maximal_delay_collapses_to_jc(T):
    assert cnc_constraints(T, T - 1) == markov_constraints(SystemKind("JC"), T) == []


@settings(max_examples=50)
@given(st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
def test_hypercube_points_in_region(T, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((T, T))
    S = B @ B.T
    b = jc_hypercube_bound(S)
    for _ in range(20):
        assert in_region_jc(S, rng.uniform(0, b, T))
