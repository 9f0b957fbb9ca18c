import numpy as np
import pytest

from seqrd.discrete_rd import (DiscreteOptions, DiscreteProblem, SCAN_COLUMNS, SCAN_SCHEMA,
                               build_binary_markov, binary_markov_pmf, chain_violation,
                               cnc_sum_rate_discrete, equivalence_scan, jc_rd_discrete,
                               project_simplex, projected_gradient, scan_to_csv)
from seqrd.info import entropy, kdirect_identity_residual


@pytest.fixture(scope="module")
def pmf():
    return build_binary_markov(0.1, 0.1)


def jc(pmf, D, **kw):
    return jc_rd_discrete(DiscreteProblem(pmf, D, **kw))


def cnc(pmf, D, delay=1, **kw):
    return cnc_sum_rate_discrete(DiscreteProblem(pmf, D, delay=delay, **kw))


def test_source_examples(pmf):
    p0 = build_binary_markov(0, 0).p
    assert p0[0, 0, 0] == p0[1, 1, 1] == 0.5
    assert p0.sum() == pytest.approx(1.0) and np.count_nonzero(p0) == 2
    assert np.allclose(build_binary_markov(0.5, 0.5).p, 1 / 8)
    assert pmf.p[0, 0, 0] == pytest.approx(0.405)
    assert np.array_equal(binary_markov_pmf([0.1, 0.1]).p, pmf.p)


def test_zero_distortion_is_entropy(pmf):
    H = entropy(pmf)
    for res in (jc(pmf, (0, 0, 0)), cnc(pmf, (0, 0, 0)), cnc(pmf, (0, 0, 0), delay=0)):
        assert abs(res.rate - H) <= 1e-9


def test_large_distortion_is_free(pmf):
    assert jc(pmf, (0.5, 0.5, 0.5)).rate == pytest.approx(0.0, abs=1e-9)
    assert cnc(pmf, (0.6, 0.6, 0.6)).rate == pytest.approx(0.0, abs=1e-9)


def test_certificates(pmf):
    cases = [(jc, (0.02,) * 3), (cnc, (0.02,) * 3), (cnc, (0.05, 0.0, 0.1))]
    for solve, D in cases:
        res = solve(pmf, D)
        assert res.converged
        assert 0 <= res.duality_gap <= DiscreteOptions().tol
        assert np.all(res.distortion <= np.asarray(D) + 1e-9)


def test_projected_gradient_oracle_multistart(pmf):
    D = (0.02, 0.02, 0.02)
    prob = DiscreteProblem(pmf, D)
    ref = jc_rd_discrete(prob).rate
    rng = np.random.default_rng(7)
    for _ in range(5):
        start = rng.random((2,) * 6)
        res = projected_gradient(prob, start=start)
        assert res.converged
        assert abs(res.rate - ref) <= 1e-5


def test_projected_gradient_oracle_constrained(pmf):
    prob = DiscreteProblem(pmf, (0.05, 0.05, 0.05), delay=1)
    ref = cnc_sum_rate_discrete(prob).rate
    rng = np.random.default_rng(8)
    for _ in range(2):
        res = projected_gradient(prob, start=rng.random((2,) * 6))
        assert abs(res.rate - ref) <= 1e-5
        assert chain_violation(res.channel, (2, 2, 2), 1) <= 1e-8


def test_constrained_at_least_unconstrained(pmf):
    for D in [(0.5, 0.5, 0.01), (0.02, 0.05, 0.0), (0.1, 0.1, 0.1)]:
        a, b, c = jc(pmf, D), cnc(pmf, D), cnc(pmf, D, delay=0)
        assert 0 <= a.rate <= b.rate + 1e-6
        assert b.rate <= c.rate + 1e-6


def test_jc_monotone_along_axes(pmf):
    axis = [0.0, 0.02, 0.05, 0.1]
    for j in range(3):
        rates = []
        for d in axis:
            D = [0.03] * 3
            D[j] = d
            rates.append(jc(pmf, D).rate)
        assert all(a >= b - 1e-7 for a, b in zip(rates, rates[1:]))


def test_channel_feeds_identity(pmf):
    res = cnc(pmf, (0.02,) * 3)
    joint = res.joint_pmf(pmf)
    assert kdirect_identity_residual(joint, 1) <= 1e-10
    assert chain_violation(res.channel, (2, 2, 2), 1) <= 1e-8


def test_cc_is_delay_zero(pmf):
    res = cnc(pmf, (0.05,) * 3, delay=0)
    assert chain_violation(res.channel, (2, 2, 2), 0) <= 1e-8
    assert res.rate > cnc(pmf, (0.05,) * 3).rate


def test_other_alphabets():
    rng = np.random.default_rng(3)
    p = rng.random((3, 2, 3))
    p /= p.sum()
    H = entropy(p)
    assert abs(jc_rd_discrete(DiscreteProblem(p, (0, 0, 0))).rate - H) <= 1e-9
    a = jc_rd_discrete(DiscreteProblem(p, (0.1, 0.1, 0.1)))
    b = cnc_sum_rate_discrete(DiscreteProblem(p, (0.1, 0.1, 0.1), delay=1))
    assert a.converged and b.converged
    assert a.rate <= b.rate + 1e-6


def test_problem_validation(pmf):
    with pytest.raises(ValueError):
        DiscreteProblem(pmf, (0.1, 0.1))
    with pytest.raises(ValueError):
        DiscreteProblem(pmf, (0.1,) * 3, delay=3)
    with pytest.raises(ValueError):
        jc_rd_discrete(DiscreteProblem(pmf, (0.1,) * 3, delay=1))


def test_project_simplex():
    rng = np.random.default_rng(0)
    v = rng.standard_normal((5, 4))
    x = project_simplex(v)
    assert np.allclose(x.sum(axis=-1), 1) and np.all(x >= 0)
    # oracle: KKT, x = max(v - tau, 0) with a common tau per row
    for row, xr in zip(v, x):
        tau = (row - xr)[xr > 0]
        assert np.allclose(tau, tau[0])


def test_scan_rows_and_csv(pmf):
    grid = [(0, 0, 0), (0.1, 0.1, 0.0), (0.02, 0.02, 0.02)]
    rows = equivalence_scan(0.1, 0.1, grid)
    assert rows[0].equal
    assert not rows[1].equal and rows[1].gap > 1e-3
    text = scan_to_csv(rows)
    lines = text.splitlines()
    assert lines[0] == SCAN_SCHEMA
    assert lines[1].split(",") == SCAN_COLUMNS
    assert len(lines) == 2 + len(grid)
    assert text == scan_to_csv(equivalence_scan(0.1, 0.1, grid))
