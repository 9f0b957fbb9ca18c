import json

import numpy as np
import pytest

from seqrd.closed_forms import dpcm_stage_rates, sigma_w
from seqrd.errors import OutOfRegionError
from seqrd.mc_sim import (SIM_COLUMNS, SIM_SCHEMA, SimConfig, dpcm_design, sample_gaussian,
                          seeded_rng_stream, simulate_dpcm, simulate_jc_testchannel)
from seqrd.model import SourceSpec, build_covariance


def test_rng_streams():
    a = seeded_rng_stream(5, 0).standard_normal(1000)
    assert np.array_equal(a, seeded_rng_stream(5, 0).standard_normal(1000))
    x = seeded_rng_stream(5, 0).standard_normal(100_000)
    y = seeded_rng_stream(5, 1).standard_normal(100_000)
    assert abs(np.corrcoef(x, y)[0, 1]) <= 0.01


def test_sample_gaussian_singular():
    S = np.array([[1, 1, 0.9], [1, 1, 0.9], [0.9, 0.9, 1]])
    X = sample_gaussian(S, 100_000, seeded_rng_stream(1))
    assert np.allclose(X[:, 0], X[:, 1])
    assert np.allclose(np.cov(X.T), S, atol=0.02)


def test_dpcm_design_matches_closed_form(example_a):
    spec, S, D = example_a
    _, sw, _ = dpcm_design(S, D)
    assert np.allclose(sw, sigma_w(spec, D), rtol=1e-12)


def test_dpcm_ideal_example(example_a):
    spec, _, D = example_a
    rep = simulate_dpcm(SimConfig(spec, D, n=200_000, seed=3))
    assert all(0.049 <= m <= 0.051 for m in rep.mse)
    assert rep.nominal_rates == pytest.approx(dpcm_stage_rates(spec, D).rates, abs=1e-12)
    assert np.allclose(rep.nominal_rates, (2.1610, 1.1024, 1.1024), atol=1e-4)
    for got, want in zip(rep.innovation_var, sigma_w(spec, D)):
        assert abs(got - want) / want <= 0.02
    assert max(d["value"] for d in rep.chain_diagnostics) <= 0.01


def test_dpcm_replications_mean():
    spec = SourceSpec.gauss_markov([1, 1, 1], [0.9, 0.9])
    rep = simulate_dpcm(SimConfig(spec, (0.05,) * 3, n=20_000, seed=4, replications=50,
                                  n_jobs=4))
    assert len(rep.per_replication) == 50
    for m in rep.mse:
        assert abs(m - 0.05) / 0.05 <= 0.005


def test_dpcm_independent_frames():
    spec = SourceSpec.gauss_markov([1, 1, 1], [0, 0])
    rep = simulate_dpcm(SimConfig(spec, (0.1,) * 3, n=100_000, seed=1))
    weights, _, _ = dpcm_design(build_covariance(spec), (0.1,) * 3)
    assert np.all(weights == 0)
    assert rep.innovation_var == pytest.approx([1, 1, 1], rel=0.02)


def test_dpcm_quantizer_respects_converse(example_a):
    spec, _, D = example_a
    rep = simulate_dpcm(SimConfig(spec, D, n=100_000, seed=2,
                                  backend="uniform_scalar_quantizer"))
    for rate, nominal in zip(rep.rates, rep.nominal_rates):
        assert rate >= nominal
    assert all(abs(m - 0.05) / 0.05 <= 0.05 for m in rep.mse)


def test_dpcm_out_of_region(example_a):
    spec, _, _ = example_a
    with pytest.raises(OutOfRegionError):
        simulate_dpcm(SimConfig(spec, (0.5, 0.9, 0.05), n=1000))


def test_jc_test_channel(example_a):
    _, S, D = example_a
    rep = simulate_jc_testchannel(S, D, n=200_000, seed=9)
    for m in rep.mse:
        assert abs(m - 0.05) / 0.05 <= 0.02
    assert rep.chain_diagnostics[0]["value"] <= 0.01
    zero = simulate_jc_testchannel(S, (0, 0, 0), n=1000, seed=9)
    assert zero.mse == [0.0, 0.0, 0.0]


def test_jc_test_channel_first_order_chains():
    spec = SourceSpec.gauss_markov([1, 1, 1, 1], [0.8, 0.7, 0.9])
    S = build_covariance(spec)
    D = [0.5 * np.linalg.eigvalsh(S)[0]] * 4
    rep = simulate_jc_testchannel(S, D, n=200_000, seed=10, delay=1)
    assert len(rep.chain_diagnostics) == 2
    assert max(d["value"] for d in rep.chain_diagnostics) <= 0.01


def test_jc_out_of_region(example_a):
    _, S, _ = example_a
    with pytest.raises(OutOfRegionError):
        simulate_jc_testchannel(S, (0.1,) * 3, n=100)


def test_report_deterministic(example_a):
    spec, _, D = example_a
    cfg = SimConfig(spec, D, n=5000, seed=11, replications=3)
    a, b = simulate_dpcm(cfg), simulate_dpcm(cfg)
    assert a.to_json() == b.to_json()
    assert a.to_csv() == b.to_csv()
    lines = a.to_csv().splitlines()
    assert lines[0] == SIM_SCHEMA and lines[1].split(",") == SIM_COLUMNS
    assert len(lines) == 2 + 3 * 3
    assert json.loads(a.to_json())["seed"] == 11
