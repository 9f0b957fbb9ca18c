"""Monte Carlo checks of DPCM and the JC test channel at finite blocklength.

Each frame is a length-``n`` block of iid spatial samples; the time axis is the
frame index. All randomness comes from :func:`seeded_rng_stream`, so a report
is a pure function of its configuration.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import OutOfRegionError
from .model import (PSD_RTOL, ChainConstraint, SourceSpec, as_covariance, as_distortion,
                    build_covariance, cnc_constraints, in_region_jc)

BACKENDS = ("ideal_test_channel", "uniform_scalar_quantizer")
SIM_SCHEMA = "#schema=sim.v1"
SIM_COLUMNS = ["replication", "frame", "D", "mse", "innovation_var", "nominal_rate_bits",
               "rate_bits"]


def seeded_rng_stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, stream_id)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


def sample_gaussian(cov, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws of ``N(0, cov)`` as rows; eigen factor when Cholesky fails."""
    cov = np.asarray(cov, dtype=float)
    T = cov.shape[0]
    lam = np.linalg.eigvalsh(cov) if T else np.zeros(0)
    factor = None
    if T and lam[0] > PSD_RTOL * max(lam[-1], 0.0):
        try:
            factor = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            factor = None
    if factor is None:
        lam, U = np.linalg.eigh(cov)
        keep = lam > PSD_RTOL * max(lam[-1], 0.0) if T else lam > 0
        factor = U[:, keep] * np.sqrt(lam[keep])
    z = rng.standard_normal((n, factor.shape[1]))
    return z @ factor.T


@dataclass
class SimConfig:
    spec: SourceSpec
    D: tuple
    n: int = 200_000
    seed: int = 0
    backend: str = "ideal_test_channel"
    replications: int = 1
    n_jobs: int = 1

    def __post_init__(self):
        if not self.spec.is_gaussian:
            raise ValueError("simulation needs a Gaussian source")
        self.D = tuple(float(v) for v in as_distortion(self.D, self.spec.T))
        if self.n < 1 or self.replications < 1:
            raise ValueError("n and replications must be positive")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")


@dataclass
class SimReport:
    """Per-frame empirical statistics, averaged over replications."""

    backend: str
    n: int
    seed: int
    replications: int
    D: list
    mse: list
    innovation_var: list
    sigma_w: list
    nominal_rates: list
    rates: list
    chain_diagnostics: list
    per_replication: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(SIM_SCHEMA + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SIM_COLUMNS)
        for rep in self.per_replication:
            for j in range(len(self.D)):
                rate = rep["rates"][j] if rep["rates"] else ""
                w.writerow([rep["replication"], j + 1, repr(self.D[j]), repr(rep["mse"][j]),
                            repr(rep["innovation_var"][j]) if rep["innovation_var"] else "",
                            repr(self.nominal_rates[j]) if self.nominal_rates else "",
                            repr(rate) if rate != "" else ""])
        return buf.getvalue()


def _mean(rows, key):
    if not rows or not rows[0][key]:
        return []
    return [float(v) for v in np.mean([r[key] for r in rows], axis=0)]


def empirical_chain_residual(samples, constraint: ChainConstraint) -> float:
    """Largest ``|cov(A, B | C)|`` after regressing ``C`` out of ``A`` and ``B``."""
    S = samples.T @ samples / samples.shape[0]
    A, B, C = (sorted(s) for s in (constraint.left, constraint.right, constraint.given))
    block = S[np.ix_(A, B)]
    if C:
        block = block - S[np.ix_(A, C)] @ np.linalg.pinv(S[np.ix_(C, C)]) @ S[np.ix_(C, B)]
    return float(np.max(np.abs(block)))


# -- DPCM ----------------------------------------------------------------------

def dpcm_design(cov, D):
    """Population DPCM: prediction weights, innovation and reconstruction variances.

    ``pred_j = sum_i w[j, i] What_i`` over earlier frames; the ``What_i`` are
    mutually uncorrelated with variance ``sigma_Wi^2 - D_i``.
    """
    cov = as_covariance(cov)
    T = cov.shape[0]
    D = as_distortion(D, T)
    K = np.zeros((T, T))           # K[:, i] = cov(X, What_i)
    var_w_hat = np.zeros(T)
    weights = np.zeros((T, T))
    sw = np.zeros(T)
    for j in range(T):
        for i in range(j):
            if var_w_hat[i] > 0:
                weights[j, i] = K[j, i] / var_w_hat[i]
        sw[j] = cov[j, j] - np.sum(weights[j, :j] ** 2 * var_w_hat[:j])
        if D[j] > sw[j] * (1 + 1e-12):
            raise OutOfRegionError(
                f"D_{j + 1} = {D[j]:g} exceeds the innovation variance {sw[j]:g}; "
                "D is outside the C-C region")
        var_w_hat[j] = max(sw[j] - D[j], 0.0)
        gain = var_w_hat[j] / sw[j] if sw[j] > 0 else 0.0
        # cov(X, W_j) = cov(X, X_j) - sum_i w[j, i] cov(X, What_i)
        K[:, j] = gain * (cov[:, j] - K[:, :j] @ weights[j, :j])
    return weights, sw, var_w_hat


def _midrise(w, step):
    idx = np.floor(w / step)
    return idx, (idx + 0.5) * step


def _tune_step(w, D, iters=20):
    """Bisection on the log step so the quantizer MSE lands near ``D``."""
    sd = math.sqrt(max(float(np.mean(w * w)), 1e-300))
    lo, hi = math.log(1e-6 * sd + 1e-300), math.log(20 * sd)
    step = math.exp(hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        step = math.exp(mid)
        mse = float(np.mean((w - _midrise(w, step)[1]) ** 2))
        if abs(mse - D) <= 1e-3 * D:
            break
        if mse > D:
            hi = mid
        else:
            lo = mid
    return step


def _plugin_entropy(idx) -> float:
    _, counts = np.unique(idx, return_counts=True)
    f = counts / counts.sum()
    return float(-np.sum(f * np.log2(f)))


def _dpcm_replication(cfg: SimConfig, cov, design, rep: int) -> dict:
    weights, sw, var_w_hat = design
    T = cov.shape[0]
    D = np.asarray(cfg.D)
    rng = seeded_rng_stream(cfg.seed, rep)
    X = sample_gaussian(cov, cfg.n, rng)
    X_hat = np.zeros_like(X)
    W_hat = np.zeros_like(X)
    inn = []
    rates = []
    for j in range(T):
        if cfg.backend == "ideal_test_channel":
            pred = W_hat[:, :j] @ weights[j, :j]
            W = X[:, j] - pred
            if D[j] == 0:
                W_hat[:, j] = W
            elif sw[j] > 0:
                gain = var_w_hat[j] / sw[j]
                noise = math.sqrt(D[j] * sw[j] / var_w_hat[j]) if var_w_hat[j] > 0 else 0.0
                W_hat[:, j] = gain * (W + noise * rng.standard_normal(cfg.n))
        else:
            # closed loop: least-squares prediction from past reconstructions
            if j:
                past = X_hat[:, :j]
                coef, *_ = np.linalg.lstsq(past, X[:, j], rcond=None)
                pred = past @ coef
            else:
                pred = np.zeros(cfg.n)
            W = X[:, j] - pred
            if D[j] == 0:
                W_hat[:, j] = W
                rates.append(math.inf)
            else:
                idx, W_hat[:, j] = _midrise(W, _tune_step(W, D[j]))
                rates.append(_plugin_entropy(idx))
        X_hat[:, j] = pred + W_hat[:, j]
        inn.append(float(np.mean(W * W)))
    mse = [float(v) for v in np.mean((X - X_hat) ** 2, axis=0)]
    joint = np.hstack([X, X_hat])
    chains = [empirical_chain_residual(joint, c) for c in cnc_constraints(T, 0)]
    return {"replication": rep, "mse": mse, "innovation_var": inn, "rates": rates,
            "chains": chains}


def _run(fn, reps, n_jobs):
    if n_jobs > 1 and len(reps) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, reps))
    return [fn(r) for r in reps]


def simulate_dpcm(cfg: SimConfig) -> SimReport:
    """Idealized DPCM, or closed-loop DPCM with an entropy-coded uniform quantizer."""
    cov = build_covariance(cfg.spec)
    T = cov.shape[0]
    design = dpcm_design(cov, cfg.D)
    sw = design[1]
    nominal = [0.5 * math.log2(s / d) if d > 0 else math.inf for s, d in zip(sw, cfg.D)]
    rows = _run(lambda r: _dpcm_replication(cfg, cov, design, r), range(cfg.replications),
                cfg.n_jobs)
    chains = cnc_constraints(T, 0)
    diag = [{"chain": c.describe(T), "value": float(np.mean([r["chains"][i] for r in rows]))}
            for i, c in enumerate(chains)]
    for r in rows:
        r.pop("chains")
    return SimReport(backend=cfg.backend, n=cfg.n, seed=cfg.seed, replications=cfg.replications,
                     D=list(cfg.D), mse=_mean(rows, "mse"),
                     innovation_var=_mean(rows, "innovation_var"),
                     sigma_w=[float(v) for v in sw], nominal_rates=nominal,
                     rates=_mean(rows, "rates"), chain_diagnostics=diag, per_replication=rows)


# -- JC test channel ----------------------------------------------------------

def simulate_jc_testchannel(cov, D, n: int = 200_000, seed: int = 0, delay: int = 1,
                            replications: int = 1) -> SimReport:
    """Sample ``X = Xhat + Z`` with ``cov(Xhat) = cov - diag(D)``, ``cov(Z) = diag(D)``.

    Diagnostics are the empirical conditional cross-covariances of the
    C-NC(``delay``) chains.
    """
    cov = as_covariance(cov)
    T = cov.shape[0]
    D = as_distortion(D, T)
    if not in_region_jc(cov, D):
        raise OutOfRegionError("D is outside the JC region (S - diag(D) not PSD)")
    chains = cnc_constraints(T, delay) if 0 <= delay < T else []
    rows = []
    for rep in range(replications):
        rng = seeded_rng_stream(seed, rep)
        X_hat = sample_gaussian(cov - np.diag(D), n, rng)
        Z = rng.standard_normal((n, T)) * np.sqrt(D)
        X = X_hat + Z
        joint = np.hstack([X, X_hat])
        rows.append({"replication": rep,
                     "mse": [float(v) for v in np.mean((X - X_hat) ** 2, axis=0)],
                     "innovation_var": [], "rates": [],
                     "chains": [empirical_chain_residual(joint, c) for c in chains]})
    diag = [{"chain": c.describe(T), "value": float(np.mean([r["chains"][i] for r in rows]))}
            for i, c in enumerate(chains)]
    for r in rows:
        r.pop("chains")
    return SimReport(backend="jc_test_channel", n=n, seed=seed, replications=replications,
                     D=[float(v) for v in D], mse=_mean(rows, "mse"), innovation_var=[],
                     sigma_w=[], nominal_rates=[], rates=[], chain_diagnostics=diag,
                     per_replication=rows)
