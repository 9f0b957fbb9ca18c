"""Minimum sum-rate over jointly Gaussian reproductions.

The problem is ``min I(X; Xhat)`` subject to ``E(X_j - Xhat_j)^2 <= D_j`` and a
list of Markov-chain constraints, where ``X ~ N(0, S_X)`` and ``Xhat`` is jointly
Gaussian with ``X``. Two solvers are provided.

``sdp``
    For the nested chain family of a C-NC(k) system (which also covers C-C,
    NC-C, NC-NC and JC) the problem is rewritten over the posterior
    covariances ``P_j = cov(X | Y^j)`` of a sequence of Gaussian observations
    ``Y_j`` of ``X^{j+k}``. The chain constraints force the precision update
    at stage j onto the leading ``j+k`` block, which makes ``P_j`` an affine
    function of its leading block ``M_j``. The result is a log-det program
    with linear matrix inequalities, solved to interior-point accuracy. The
    reproduction ``Xhat_j = E[X_j | Y^j]`` is then read off the ``P_j``.

``penalty``
    Generic constraint lists. Parameterize ``Xhat = A X + L N`` (cross
    covariance ``S_X A^T``, residual factor ``L``), penalize conditional
    cross-covariances and MSE excess with a geometric weight schedule, then
    polish with an SQP step that enforces the constraints exactly.
"""
from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.optimize

from .closed_forms import cc_sum_rate_gm, jc_rate_gm
from .errors import InfeasibleError, NoClosedFormError, OutOfRegionError
from .info import gaussian_mi
from .model import (PSD_RTOL, ChainConstraint, SourceSpec, SystemKind, as_covariance,
                    as_distortion, build_covariance, cnc_constraints, in_region_cc,
                    in_region_jc, markov_constraints)

LN2 = math.log(2)


@dataclass
class SolverOptions:
    method: str = "auto"           # auto | sdp | penalty
    penalty_start: float = 10.0
    penalty_growth: float = 10.0
    penalty_rounds: int = 6
    max_iter: int = 3000
    chain_tol: float = 1e-6
    mse_tol: float = 1e-8
    seed: int = 0
    n_starts: int = 1
    n_jobs: int = 1
    l_floor: float = 1e-9


@dataclass
class OptProblem:
    cov: np.ndarray
    D: np.ndarray
    constraints: list = field(default_factory=list)
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        self.cov = as_covariance(self.cov)
        self.D = as_distortion(self.D, self.cov.shape[0])
        T = self.cov.shape[0]
        for c in self.constraints:
            c.check_range(T)


@dataclass
class RDResult:
    """Feasible point of the Gaussian sum-rate problem.

    ``rate`` is evaluated on the returned joint covariance, so it is an upper
    bound on the true minimum whenever ``converged`` is true.
    """

    rate: float
    joint_cov: np.ndarray
    mse: np.ndarray
    chain_residuals: list
    iterations: int
    converged: bool
    method: str = ""
    message: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["joint_cov_shape"] = list(self.joint_cov.shape)
        d["joint_cov"] = [float(v) for v in self.joint_cov.ravel()]
        d["mse"] = [float(v) for v in self.mse]
        d["chain_residuals"] = [float(v) for v in self.chain_residuals]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "RDResult":
        d = dict(d)
        shape = d.pop("joint_cov_shape")
        d["joint_cov"] = np.asarray(d["joint_cov"], dtype=float).reshape(shape)
        d["mse"] = np.asarray(d["mse"], dtype=float)
        return cls(**d)


# -- shared evaluation -----------------------------------------------------

def _normalize(S):
    sd = np.sqrt(np.maximum(np.diag(S), 1e-300))
    return S / np.outer(sd, sd)


def chain_residual(S, constraint: ChainConstraint) -> float:
    """Largest conditional cross-covariance ``S_AB - S_AC S_CC^+ S_CB``.

    Evaluated on the correlation-normalized joint covariance.
    """
    R = _normalize(np.asarray(S, dtype=float))
    A, B, C = (sorted(s) for s in (constraint.left, constraint.right, constraint.given))
    block = R[np.ix_(A, B)]
    if C:
        R_CC = R[np.ix_(C, C)]
        block = block - R[np.ix_(A, C)] @ np.linalg.pinv(R_CC, rcond=1e-12, hermitian=True) @ R[np.ix_(C, B)]
    return float(np.max(np.abs(block)))


def joint_mse(S) -> np.ndarray:
    T = S.shape[0] // 2
    idx = np.arange(T)
    return S[idx, idx] - 2 * S[idx, T + idx] + S[T + idx, T + idx]


def _finish(S, cov, D, constraints, options, iterations, method, message=""):
    T = cov.shape[0]
    S = 0.5 * (S + S.T)
    S[:T, :T] = cov
    mse = joint_mse(S)
    residuals = [chain_residual(S, c) for c in constraints]
    rate = gaussian_mi(S, range(T), range(T, 2 * T))
    feasible = bool(np.all(mse <= D + options.mse_tol * np.maximum(1.0, D)))
    chains_ok = all(r <= options.chain_tol for r in residuals)
    psd = np.linalg.eigvalsh(S)
    psd_ok = psd[0] >= -PSD_RTOL * psd[-1]
    if not message:
        problems = []
        if not feasible:
            problems.append("MSE target missed")
        if not chains_ok:
            problems.append("chain residual above tolerance")
        if not psd_ok:
            problems.append("joint covariance not PSD")
        message = "; ".join(problems) or "ok"
    return RDResult(rate=rate, joint_cov=S, mse=mse, chain_residuals=residuals,
                    iterations=int(iterations),
                    converged=bool(feasible and chains_ok and psd_ok),
                    method=method, message=message)


def _mmse_rescale(S):
    """Scale each ``Xhat_j`` to its MMSE gain; chains and rate are unchanged."""
    T = S.shape[0] // 2
    S = S.copy()
    for j in range(T):
        v = S[T + j, T + j]
        if v <= 0:
            continue
        c = S[j, T + j] / v
        if c <= 0:
            continue
        S[T + j, :] *= c
        S[:, T + j] *= c
    return S


def feasible_init(cov, D) -> np.ndarray:
    """A PSD, MSE-feasible joint covariance of ``(X, Xhat)``.

    Inside the JC region this is the test channel ``Xhat + Z = X`` with
    ``cov(Z) = diag(D)``; otherwise each frame is coded on its own with a
    scalar Gaussian test channel.
    """
    cov = as_covariance(cov)
    D = as_distortion(D, cov.shape[0])
    T = cov.shape[0]
    S = np.zeros((2 * T, 2 * T))
    S[:T, :T] = cov
    if in_region_jc(cov, D):
        rep = cov - np.diag(D)
        S[:T, T:] = rep
        S[T:, :T] = rep
        S[T:, T:] = rep
        return S
    var = np.diag(cov)
    gain = np.where(D < var, (var - D) / var, 0.0)
    cross = cov * gain[None, :]               # cov(X_i, a_j X_j)
    rep = gain[:, None] * cov * gain[None, :]
    noise = np.where(D < var, gain ** 2 * D * var / np.where(D < var, var - D, 1.0), 0.0)
    rep[np.diag_indices(T)] = gain ** 2 * var + noise
    S[:T, T:] = cross
    S[T:, :T] = cross.T
    S[T:, T:] = rep
    return S


# -- structured log-det program ---------------------------------------------

def _match_cnc_delay(constraints, T):
    target = set(constraints)
    if len(target) != len(constraints):
        return None
    for k in range(T):
        if set(cnc_constraints(T, k)) == target:
            return k
    return None


def _solve_sdp(cov, D, k, options):
    import cvxpy as cp

    T = cov.shape[0]
    sd = np.sqrt(np.diag(cov))
    R = cov / np.outer(sd, sd)
    Dn = D / sd ** 2 * (1 - 1e-7)
    Om = np.linalg.inv(R)

    maps = []     # (E, F) with P_j = E M_j E^T + F
    for j in range(T):
        h = min(j + 1 + k, T)
        if h < T:
            tail = np.linalg.inv(Om[h:, h:])
            E = np.vstack([np.eye(h), -tail @ Om[h:, :h]])
            F = np.zeros((T, T))
            F[h:, h:] = tail
        else:
            E, F = np.eye(T), np.zeros((T, T))
        maps.append((h, E, F))

    Ms, cons = [], []
    P_prev = R
    for j, (h, E, F) in enumerate(maps):
        M = cp.Variable((h, h), symmetric=True)
        Ms.append(M)
        cons += [P_prev[:h, :h] - M >> 0, M[j, j] <= Dn[j]]
        P_prev = E @ M @ E.T + F
    problem = cp.Problem(cp.Maximize(cp.log_det(Ms[-1])), cons)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            problem.solve(solver=cp.CLARABEL)
        except cp.SolverError as exc:
            raise InfeasibleError(f"log-det program failed: {exc}") from exc
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or Ms[-1].value is None:
        raise InfeasibleError(f"log-det program status {problem.status}")

    P = []
    for (h, E, F), M in zip(maps, Ms):
        Mv = 0.5 * (M.value + M.value.T)
        P.append(E @ Mv @ E.T + F)
    P = [p * np.outer(sd, sd) for p in P]

    S = np.zeros((2 * T, 2 * T))
    S[:T, :T] = cov
    for j in range(T):
        S[:T, T + j] = S[T + j, :T] = (cov - P[j])[:, j]
        for i in range(j + 1):
            S[T + i, T + j] = S[T + j, T + i] = (cov - P[i])[i, j]
    iters = problem.solver_stats.num_iters if problem.solver_stats else 0
    return S, iters or 0, problem.status


# -- penalty method -------------------------------------------------------

class _Penalty:
    def __init__(self, cov, D, constraints, floor):
        self.cov = cov
        self.D = D
        self.T = cov.shape[0]
        self.constraints = [(sorted(c.left), sorted(c.right), sorted(c.given)) for c in constraints]
        self.tril = np.tril_indices(self.T)
        self.diag_pos = np.array([i for i, (r, c) in enumerate(zip(*self.tril)) if r == c])
        self.log_floor = math.log(floor)

    def unpack(self, theta):
        T = self.T
        A = theta[:T * T].reshape(T, T)
        vals = theta[T * T:].copy()
        vals[self.diag_pos] = np.exp(vals[self.diag_pos])
        L = np.zeros((T, T))
        L[self.tril] = vals
        return A, L

    def pack(self, A, L):
        vals = L[self.tril].copy()
        vals[self.diag_pos] = np.log(np.maximum(np.abs(vals[self.diag_pos]), math.exp(self.log_floor)))
        return np.concatenate([A.ravel(), vals])

    def joint(self, theta):
        A, L = self.unpack(theta)
        T, cov = self.T, self.cov
        S = np.empty((2 * T, 2 * T))
        S[:T, :T] = cov
        S[:T, T:] = cov @ A.T
        S[T:, :T] = A @ cov
        S[T:, T:] = A @ cov @ A.T + L @ L.T
        return S, L

    def rate(self, theta):
        S, L = self.joint(theta)
        T = self.T
        sign, logdet = np.linalg.slogdet(S[T:, T:])
        if sign <= 0:
            return 1e6
        return 0.5 * (logdet - 2 * np.sum(np.log(np.abs(np.diag(L))))) / LN2

    def residuals(self, theta):
        S, _ = self.joint(theta)
        Rn = _normalize(S)
        out = []
        for A, B, C in self.constraints:
            block = Rn[np.ix_(A, B)]
            if C:
                block = block - Rn[np.ix_(A, C)] @ np.linalg.solve(Rn[np.ix_(C, C)], Rn[np.ix_(C, B)])
            out.append(block.ravel())
        return np.concatenate(out) if out else np.zeros(0)

    def mse_slack(self, theta):
        S, _ = self.joint(theta)
        return (self.D - joint_mse(S)) / np.maximum(self.D, 1e-12)

    def objective(self, theta, mu):
        r = self.residuals(theta)
        excess = np.minimum(self.mse_slack(theta), 0.0)
        return self.rate(theta) + mu * (r @ r + excess @ excess)


def _penalty_start(cov, D, constraints, options, start):
    T = cov.shape[0]
    pen = _Penalty(cov, D, constraints, options.l_floor)
    S0 = feasible_init(cov, D)
    A0 = S0[T:, :T] @ np.linalg.inv(cov)
    Q = S0[T:, T:] - A0 @ cov @ A0.T
    Q = 0.5 * (Q + Q.T) + 1e-6 * np.eye(T)
    L0 = np.linalg.cholesky(Q)
    theta = pen.pack(A0, L0)
    if start:
        rng = np.random.default_rng([options.seed, start])
        theta = theta + 0.05 * rng.standard_normal(theta.shape)
    bounds = [(None, None)] * (T * T) + [
        (pen.log_floor, None) if i in set(pen.diag_pos) else (None, None)
        for i in range(len(theta) - T * T)]

    iterations = 0
    mu = options.penalty_start
    for _ in range(options.penalty_rounds):
        res = scipy.optimize.minimize(pen.objective, theta, args=(mu,), method="L-BFGS-B",
                                      bounds=bounds,
                                      options={"maxiter": options.max_iter, "ftol": 1e-15,
                                               "gtol": 1e-10})
        theta = res.x
        iterations += res.nit
        mu *= options.penalty_growth

    cons = [{"type": "ineq", "fun": pen.mse_slack}]
    if pen.constraints:
        cons.append({"type": "eq", "fun": pen.residuals})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = scipy.optimize.minimize(pen.rate, theta, method="SLSQP", bounds=bounds,
                                      constraints=cons,
                                      options={"maxiter": options.max_iter, "ftol": 1e-13})
    if np.all(np.isfinite(res.x)):
        theta = res.x
    iterations += res.nit
    S, _ = pen.joint(theta)
    S = _mmse_rescale(S)
    return _finish(S, cov, D, constraints, options, iterations, "penalty")


def _solve_penalty(cov, D, constraints, options):
    starts = range(max(1, options.n_starts))
    if options.n_jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=options.n_jobs) as pool:
            results = list(pool.map(lambda s: _penalty_start(cov, D, constraints, options, s), starts))
    else:
        results = [_penalty_start(cov, D, constraints, options, s) for s in starts]
    feasible = [r for r in results if r.converged]
    pool = feasible or results
    # min() keeps the first of equal rates, i.e. the lowest start index
    return min(pool, key=lambda r: r.rate)


def min_sum_rate(problem: OptProblem) -> RDResult:
    """Minimize ``I(X; Xhat)`` under MSE and chain constraints (bits)."""
    cov, D, constraints, options = problem.cov, problem.D, problem.constraints, problem.options
    T = cov.shape[0]
    eig = np.linalg.eigvalsh(cov)
    if eig[0] <= PSD_RTOL * eig[-1]:
        raise InfeasibleError("source covariance is singular; perturb it to a positive definite one")
    if np.any(D <= 0):
        raise InfeasibleError("a zero distortion target needs infinite rate for a nonsingular source")

    method = options.method
    k = _match_cnc_delay(constraints, T)
    if method == "auto":
        method = "sdp" if k is not None else "penalty"
    if method == "sdp":
        if k is None:
            raise ValueError("the sdp method only handles C-NC(k) chain families")
        S, iters, status = _solve_sdp(cov, D, k, options)
        return _finish(S, cov, D, constraints, options, iters, "sdp")
    if method == "penalty":
        return _solve_penalty(cov, D, constraints, options)
    raise ValueError(f"unknown method {options.method!r}")


def solve_kind(cov, D, kind: SystemKind, options: SolverOptions | None = None) -> RDResult:
    cov = as_covariance(cov)
    return min_sum_rate(OptProblem(cov, D, markov_constraints(kind, cov.shape[0]),
                                   options or SolverOptions()))


@dataclass
class CorollaryReport:
    kind: str
    rate: float
    jc_rate: float
    gap: float
    in_cc_region: bool | None
    in_jc_region: bool
    closed_form: float | None
    jc_closed_form: float | None
    converged: bool


def verify_corollary(spec: SourceSpec, D, kind: SystemKind,
                     options: SolverOptions | None = None) -> CorollaryReport:
    """Solve with and without the architecture's chains and report the gap."""
    if not spec.is_gaussian:
        raise ValueError("verify_corollary needs a Gaussian source")
    cov = build_covariance(spec)
    D = as_distortion(D, spec.T)
    with_chains = solve_kind(cov, D, kind, options)
    jc = solve_kind(cov, D, SystemKind("JC"), options)
    in_jc = in_region_jc(cov, D)
    try:
        in_cc = in_region_cc(spec, D)
    except NoClosedFormError:
        in_cc = None
    closed = None
    jc_closed = None
    if in_jc:
        try:
            jc_closed = jc_rate_gm(cov, D)
        except OutOfRegionError:
            pass
    if kind.tag == "CC" and in_cc:
        closed = cc_sum_rate_gm(spec, D)
    elif kind.total_delay(spec.T) >= spec.markov_order and in_jc:
        closed = jc_closed
    return CorollaryReport(kind=str(kind), rate=with_chains.rate, jc_rate=jc.rate,
                           gap=with_chains.rate - jc.rate, in_cc_region=in_cc,
                           in_jc_region=in_jc, closed_form=closed, jc_closed_form=jc_closed,
                           converged=with_chains.converged and jc.converged)
