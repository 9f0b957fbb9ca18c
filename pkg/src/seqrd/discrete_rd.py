"""Rate-distortion of small-alphabet sources, joint and C-NC(k) constrained.

A channel ``q(xhat | x)`` is stored as an array of shape ``sizes(x) + sizes(xhat)``.
The C-NC(k) chains ``Xhat_j - (X^{j+k}, Xhat^{j-1}) - X_{j+k+1}^T`` hold jointly
exactly when every marginal ``q(xhat^j | x)`` depends on ``x`` only through
``x^{j+k}``. Such a channel factors as ``prod_j q_j(xhat_j | xhat^{j-1}, x^{j+k})``
and the constraint set is linear in ``q``, so the constrained problem stays
convex. ``k = T - 1`` leaves the channel unrestricted (joint coding).

Solver outline, for per-frame multipliers ``s`` (nats per unit distortion):

* ``F(s) = min_q I(q) + s . E d(q)`` is found by alternating between the
  output pmf ``r`` and the channel; for fixed ``r`` the best factored channel
  comes from a backward pass over the stages.
* ``R(D) = max_s F(s) - s . D``; the concave outer problem is solved with a
  bounded quasi-Newton method whose gradient is ``E d(q_s) - D``.
* The reported rate is ``I(q)`` of a feasible channel (the final channel mixed
  with the zero-distortion channel just enough to meet ``D``); the
  reported lower bound is a weak-duality bound, so ``rate - lower_bound``
  certifies the result.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .errors import InfeasibleError
from .info import JointPmf, as_pmf
from .model import SourceSpec, as_distortion

LN2 = math.log(2)
SCAN_SCHEMA = "#schema=equivalence_scan.v1"
SCAN_COLUMNS = ["D1", "D2", "D3", "R_jc_bits", "R_cnc_bits", "gap_bits", "equal_flag",
                "iters_jc", "iters_cnc"]


def build_binary_markov(p1: float, p2: float) -> JointPmf:
    """Three binary frames ``X2 = X1 xor N1``, ``X3 = X2 xor N2``, ``X1 ~ Ber(1/2)``."""
    return binary_markov_pmf([p1, p2])


def binary_markov_pmf(crossovers) -> JointPmf:
    """Binary symmetric Markov chain with the given per-step crossover probabilities."""
    crossovers = [float(c) for c in crossovers]
    for c in crossovers:
        if not 0.0 <= c <= 0.5:
            raise ValueError(f"crossover probability {c} outside [0, 1/2]")
    T = len(crossovers) + 1
    p = np.zeros((2,) * T)
    for x in itertools.product((0, 1), repeat=T):
        prob = 0.5
        for j, c in enumerate(crossovers):
            prob *= c if x[j + 1] != x[j] else 1.0 - c
        p[x] = prob
    return JointPmf(p)


def source_pmf(spec: SourceSpec) -> JointPmf:
    if spec.is_gaussian:
        raise ValueError("discrete solvers need a binary source")
    return binary_markov_pmf(spec.crossovers)


def hamming(n: int, m: int | None = None) -> np.ndarray:
    """``d(x, xhat) = [x != xhat]`` for ``x < n``, ``xhat < m``."""
    m = n if m is None else m
    return (np.arange(n)[:, None] != np.arange(m)[None, :]).astype(float)


@dataclass
class DiscreteOptions:
    tol: float = 1e-6              # target duality gap, bits
    inner_tol: float = 1e-13       # Frank-Wolfe gap of the inner problem, nats
    max_inner: int = 20000
    max_outer: int = 300
    method: str = "auto"           # auto | alternating | conic | projected_gradient
    s_max: float = 60.0
    fallback: bool = True
    seed: int = 0


@dataclass
class DiscreteProblem:
    """Source pmf, per-frame targets and an optional C-NC delay.

    ``delay = None`` means no chain constraints. ``distortion`` is a list of
    per-frame matrices ``d_j[x_j, xhat_j]`` (Hamming by default).
    """

    pmf: JointPmf
    D: np.ndarray
    delay: int | None = None
    repro_sizes: tuple | None = None
    distortion: list | None = None
    options: DiscreteOptions = field(default_factory=DiscreteOptions)

    def __post_init__(self):
        self.pmf = as_pmf(self.pmf)
        T = self.pmf.arity
        self.D = as_distortion(self.D, T)
        sizes = self.pmf.sizes
        self.repro_sizes = tuple(sizes if self.repro_sizes is None else self.repro_sizes)
        if len(self.repro_sizes) != T:
            raise ValueError("need one reproduction alphabet size per frame")
        if self.distortion is None:
            self.distortion = [hamming(n, m) for n, m in zip(sizes, self.repro_sizes)]
        self.distortion = [np.asarray(d, dtype=float) for d in self.distortion]
        for j, d in enumerate(self.distortion):
            if d.shape != (sizes[j], self.repro_sizes[j]) or np.any(d < 0):
                raise ValueError(f"distortion matrix for frame {j + 1} has wrong shape or sign")
            if np.any(d.min(axis=1) > 0):
                raise ValueError(f"frame {j + 1}: every source symbol needs a zero-cost reproduction")
        if self.delay is not None and not 0 <= self.delay < T:
            raise ValueError(f"delay must satisfy 0 <= k < T = {T}")

    @property
    def T(self) -> int:
        return self.pmf.arity


@dataclass
class DiscreteRDResult:
    rate: float                # bits, I(q) of the returned feasible channel
    lower_bound: float         # bits, weak-duality bound
    channel: np.ndarray
    distortion: np.ndarray
    multipliers: np.ndarray    # nats per unit distortion; inf for D_j = 0
    active: np.ndarray
    iterations: int
    converged: bool
    method: str = "alternating"
    message: str = ""

    @property
    def duality_gap(self) -> float:
        return self.rate - self.lower_bound

    def joint_pmf(self, pmf) -> JointPmf:
        p = as_pmf(pmf).p
        extra = (None,) * (self.channel.ndim - p.ndim)
        joint = np.clip(p[(...,) + extra] * self.channel, 0.0, None)
        return JointPmf(joint / joint.sum())


R_FLOOR = 1e-250


def _lse_softmax(a, axis):
    """Log-sum-exp along ``axis`` (kept) and the matching softmax; ``-inf`` safe."""
    m = a.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(a - m)
    tot = e.sum(axis=axis, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        lse = np.log(tot) + m
        fac = np.where(tot > 0, e / np.where(tot > 0, tot, 1.0), 0.0)
    return lse, fac


# -- engine ------------------------------------------------------------------

class _Engine:
    """Tensors shared by every multiplier evaluation of one problem."""

    def __init__(self, prob: DiscreteProblem):
        self.prob = prob
        self.T = T = prob.T
        self.p = prob.pmf.p
        self.nx = prob.pmf.sizes
        self.ny = prob.repro_sizes
        k = T - 1 if prob.delay is None else prob.delay
        self.heads = [min(j + 1 + k, T) for j in range(T)]
        # per-frame distortion broadcast to the full (x, y) shape
        self.d = []
        for j, dj in enumerate(prob.distortion):
            shape = [1] * (2 * T)
            shape[j], shape[T + j] = dj.shape
            self.d.append(np.broadcast_to(dj.reshape(shape), self.nx + self.ny))
        self.zero = [np.isclose(D, 0.0) for D in prob.D]
        self.mask = np.zeros(self.nx + self.ny, dtype=bool)
        for j in range(T):
            if self.zero[j]:
                self.mask |= self.d[j] > 0
        self.px = self.p.reshape(self.nx + (1,) * T)
        self.free = [j for j in range(T) if not self.zero[j]]

    def cost(self, s):
        c = np.zeros(self.nx + self.ny)
        for j in self.free:
            c = c + s[j] * self.d[j]
        return np.where(self.mask, np.inf, c)

    def channel(self, r, s):
        """Best factored channel for output pmf ``r``; also returns ``G(r)``."""
        T = self.T
        with np.errstate(divide="ignore"):
            W = self.cost(s) - np.log(r)[(None,) * T]
        factors = []
        for j in reversed(range(T)):
            h = self.heads[j]
            if h < T:
                W = self._condition(W, h)
            lse, fac = _lse_softmax(-W, T + j)
            factors.append(fac)
            W = -lse
        q = np.ones(self.nx + self.ny)
        for fac in factors:
            q = q * fac
        G = float(np.sum(np.where(self.px[(...,)] > 0, self.px * W, 0.0)))
        return q, G

    def _condition(self, W, h):
        # E[W | x^h]; averages out x_{h+1..T} under the source pmf
        T = self.T
        axes = tuple(range(h, T))
        pw = np.where(self.px > 0, self.px * W, 0.0)
        num = pw.sum(axis=axes, keepdims=True)
        den = self.px.sum(axis=axes, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        return np.broadcast_to(out, W.shape)

    def output(self, q):
        return (self.px * q).sum(axis=tuple(range(self.T)))

    def distortions(self, q):
        J = self.px * q
        return np.array([float(np.sum(J * d)) for d in self.d])

    def rate(self, q):
        """``I(q)`` in nats."""
        J = self.px * q
        r = J.sum(axis=tuple(range(self.T)), keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(J > 0, J * np.log(np.where(J > 0, q, 1.0) / np.where(J > 0, r, 1.0)), 0.0)
        return max(float(terms.sum()), 0.0)

    def zero_channel(self):
        """A deterministic channel meeting every frame with zero distortion."""
        T = self.T
        q = np.zeros(self.nx + self.ny)
        choice = [np.argmin(dj, axis=1) for dj in self.prob.distortion]
        for x in itertools.product(*(range(n) for n in self.nx)):
            q[x + tuple(int(choice[j][x[j]]) for j in range(T))] = 1.0
        return q

    def _step(self, r, s):
        q, G = self.channel(r, s)
        r_new = np.maximum(self.output(q), R_FLOOR)
        r_new /= r_new.sum()
        # Frank-Wolfe gap of the convex function r -> G(r) at r
        fw = max(float((r_new / r).max()) - 1.0, 0.0)
        return q, G, r_new, fw

    def solve_inner(self, s, r, max_evals=None):
        """Minimize ``G(r)`` over output pmfs with SQUAREM-accelerated alternation.

        Returns the channel, ``G`` at the last ``r``, the next ``r``, a lower
        bound on ``min_r G`` and the number of channel evaluations.
        """
        opts = self.prob.options
        cap = opts.max_inner if max_evals is None else max_evals
        r = np.maximum(r, R_FLOOR)
        r = r / r.sum()
        it = 0
        while it < cap:
            q, G, r1, fw = self._step(r, s)
            it += 1
            if fw <= opts.inner_tol:
                return q, G, r1, G - fw, it
            q1, G1, r2, fw1 = self._step(r1, s)
            it += 1
            if fw1 <= opts.inner_tol:
                return q1, G1, r2, G1 - fw1, it
            d1 = r1 - r
            d2 = r2 - 2 * r1 + r
            n2 = float(np.sqrt((d2 * d2).sum()))
            if n2 == 0:
                r = r2
                continue
            alpha = min(-float(np.sqrt((d1 * d1).sum())) / n2, -1.0)
            r_x = np.maximum(r - 2 * alpha * d1 + alpha ** 2 * d2, R_FLOOR)
            r_x /= r_x.sum()
            qx, Gx, rx_next, fwx = self._step(r_x, s)
            it += 1
            if Gx <= G1:
                if fwx <= opts.inner_tol:
                    return qx, Gx, rx_next, Gx - fwx, it
                r = rx_next
            else:
                r = r2
        q, G, r1, fw = self._step(r, s)
        return q, G, r1, G - fw, it


def _feasible_mix(eng: _Engine, q):
    """Smallest mix with the zero-distortion channel that meets ``D``."""
    D = eng.prob.D
    d = eng.distortions(q)
    z = eng.zero_channel()
    dz = eng.distortions(z)
    lam = 0.0
    for j in range(eng.T):
        if d[j] > D[j] and d[j] > dz[j]:
            lam = max(lam, (d[j] - D[j]) / (d[j] - dz[j]))
    lam = min(1.0, lam * (1 + 1e-12) + (1e-300 if lam else 0.0))
    return (1 - lam) * q + lam * z if lam else q


def _solve_alternating(prob: DiscreteProblem):
    eng = _Engine(prob)
    opts = prob.options
    T = eng.T
    D = prob.D
    free = eng.free
    state = {"r": np.full(eng.ny, 1.0 / np.prod(eng.ny)), "iters": 0,
             "best_lb": -math.inf, "best": None}

    def evaluate(sf):
        s = np.zeros(T)
        s[free] = sf
        q, G, r, lower, it = eng.solve_inner(s, state["r"])
        state["r"] = r
        state["iters"] += it
        lb = lower - float(s @ np.where(eng.zero, 0.0, D))
        if lb > state["best_lb"]:
            state["best_lb"] = lb
        d = eng.distortions(q)
        dual = G - float(s[free] @ D[free])
        state["best"] = (s, q)
        return -dual, -(d[free] - D[free])

    if free:
        res = scipy.optimize.minimize(evaluate, np.ones(len(free)), jac=True, method="L-BFGS-B",
                                      bounds=[(0.0, opts.s_max)] * len(free),
                                      options={"maxiter": opts.max_outer, "ftol": 1e-16,
                                               "gtol": 1e-12})
        evaluate(res.x)
    else:
        evaluate(np.zeros(0))
    s, q = state["best"]
    q_feas = _feasible_mix(eng, q)
    rate = eng.rate(q_feas) / LN2
    lb = max(state["best_lb"], 0.0) / LN2
    mult = np.where(eng.zero, np.inf, s)
    dist = eng.distortions(q_feas)
    active = np.array([bool(eng.zero[j] or dist[j] >= D[j] - 1e-9) for j in range(T)])
    return eng, DiscreteRDResult(rate=rate, lower_bound=min(lb, rate), channel=q_feas,
                                 distortion=dist, multipliers=mult, active=active,
                                 iterations=state["iters"],
                                 converged=rate - lb <= opts.tol, method="alternating")


# -- projected gradient --------------------------------------------------------

def project_simplex(v, axis=-1):
    """Euclidean projection of each slice along ``axis`` onto the probability simplex."""
    v = np.moveaxis(np.asarray(v, dtype=float), axis, -1)
    n = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, n + 1)
    cond = u - css / ind > 0
    rho = n - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1)
    return np.moveaxis(np.maximum(v - theta, 0.0), -1, axis)


class _Feasible:
    """Euclidean projection onto the feasible channel polytope.

    The polytope is: rows on the simplex, masked entries zero, C-NC chain
    equalities and the distortion half-spaces.
    """

    def __init__(self, eng: _Engine):
        self.eng = eng
        T = eng.T
        self.shape = eng.nx + eng.ny
        nx, ny = int(np.prod(eng.nx)), int(np.prod(eng.ny))
        self.nx, self.ny = nx, ny
        rows = []
        xs = list(itertools.product(*(range(n) for n in eng.nx)))
        for j, h in enumerate(eng.heads):
            if h == T:
                continue
            # marginal over y^j must agree across x with the same x^h
            ys = list(itertools.product(*(range(m) for m in eng.ny[:j + 1])))
            groups = {}
            for xi, x in enumerate(xs):
                groups.setdefault(x[:h], []).append(xi)
            for members in groups.values():
                for a, b in zip(members, members[1:]):
                    for yj in ys:
                        row = np.zeros(self.shape)
                        row[xs[a] + yj] += 1.0
                        row[xs[b] + yj] -= 1.0
                        rows.append(row.ravel())
        self.A = np.array(rows) if rows else None
        free = [j for j in range(T) if not eng.zero[j]]
        self.H = np.array([(np.broadcast_to(eng.px, self.shape) * eng.d[j]).ravel() for j in free])
        self.D = eng.prob.D[free]
        self.allowed = ~eng.mask.reshape(nx, ny)

    def _rows(self, y, w=None):
        # each row onto the simplex over its allowed reproductions, metric diag(w)
        if w is None:
            return project_simplex(np.where(self.allowed, y, -1e30), axis=1)
        return _weighted_simplex(y, w, self.allowed)

    def project(self, v, w=None):
        """Projection in the metric ``diag(w)`` (Euclidean by default).

        For multipliers ``y`` of the chain equalities and distortion
        half-spaces the minimizer is a row-wise simplex projection of
        ``v - W^{-1} M^T y``; the concave dual is maximized with the
        half-space multipliers kept nonnegative.
        """
        v = np.asarray(v, dtype=float).reshape(self.nx, self.ny)
        if w is not None:
            w = np.asarray(w, dtype=float).reshape(self.nx, self.ny)
        na = 0 if self.A is None else len(self.A)
        nh = len(self.H)
        if na + nh == 0:
            return self._rows(v, w).reshape(self.shape)
        M = np.vstack([m for m in (self.A, self.H) if m is not None and len(m)])
        rhs = np.concatenate([np.zeros(na), self.D])
        wf = np.ones(v.size) if w is None else w.ravel()

        def neg_dual(y):
            z = self._rows(v - (M.T @ y).reshape(self.nx, self.ny) / wf.reshape(v.shape), w).ravel()
            dz = v.ravel() - z
            val = 0.5 * dz @ (wf * dz) + y @ (M @ z - rhs)
            return -val, -(M @ z - rhs)

        res = scipy.optimize.minimize(neg_dual, np.zeros(na + nh), jac=True, method="L-BFGS-B",
                                      bounds=[(None, None)] * na + [(0.0, None)] * nh,
                                      options={"maxiter": 5000, "ftol": 1e-20, "gtol": 1e-13,
                                               "maxcor": 30})
        z = self._rows(v - (M.T @ res.x).reshape(self.nx, self.ny) / wf.reshape(v.shape), w)
        return z.reshape(self.shape)


def _weighted_simplex(u, w, allowed, iters=200):
    """Row-wise ``argmin sum_i w_i (z_i - u_i)^2`` over the simplex, by bisection on the shift."""
    w = np.where(allowed, w, 1.0)
    u = np.where(allowed, u, -np.inf)
    lo = np.min(np.where(allowed, w * (u - 1.0), np.inf), axis=1, keepdims=True)
    hi = np.max(np.where(allowed, w * u, -np.inf), axis=1, keepdims=True)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        total = np.maximum(u - mid / w, 0.0).sum(axis=1, keepdims=True)
        big = total > 1.0
        lo = np.where(big, mid, lo)
        hi = np.where(big, hi, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(1.0, np.abs(hi))):
            break
    z = np.maximum(u - 0.5 * (lo + hi) / w, 0.0)
    return z / z.sum(axis=1, keepdims=True)


def projected_gradient(prob: DiscreteProblem, start=None, max_iter=3000, tol=1e-13):
    """Scaled projected gradient on ``I(q)`` over the feasible channel polytope.

    The metric is the diagonal of the Hessian, ``p(x) / q(xhat | x)``, which
    keeps steps sensible near small channel entries. Independent of the
    alternating and conic solvers; used as an oracle and a fallback.
    Returns a :class:`DiscreteRDResult` without a duality bound.
    """
    eng = _Engine(prob)
    feas = _Feasible(eng)
    if start is None:
        rng = np.random.default_rng(prob.options.seed)
        start = rng.random(feas.shape)
    q = feas.project(start)
    px = np.broadcast_to(eng.px, feas.shape)

    def grad(q):
        J = eng.px * q
        r = J.sum(axis=tuple(range(eng.T)), keepdims=True)
        return eng.px * np.log(np.maximum(q, 1e-300) / np.maximum(r, 1e-300))

    f = eng.rate(q)
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        g = grad(q)
        w = np.maximum(px, 1e-12) / np.maximum(q, 1e-12)
        while True:
            cand = feas.project(q - step * g / w, w)
            fc = eng.rate(cand)
            if fc <= f + 1e-4 * np.sum(g * (cand - q)) or step < 1e-14:
                break
            step *= 0.5
        done = f - fc < tol
        q, f = cand, min(fc, f)
        if done:
            break
        step = min(1.0, 2.0 * step)
    d = eng.distortions(q)
    active = d >= prob.D - 1e-9
    return DiscreteRDResult(rate=f / LN2, lower_bound=-math.inf, channel=q, distortion=d,
                            multipliers=np.full(eng.T, np.nan), active=active, iterations=it,
                            converged=bool(np.all(d <= prob.D + 1e-9)),
                            method="projected_gradient")


# -- conic primal ------------------------------------------------------------

def _solve_conic(prob: DiscreteProblem):
    """Interior-point solve of the primal, certified by the alternating engine.

    The conic solution supplies the multipliers and output pmf; the engine
    then recomputes an exactly factored channel and a weak-duality bound, so
    the reported numbers do not rest on solver tolerances.
    """
    import cvxpy as cp

    eng = _Engine(prob)
    feas = _Feasible(eng)
    nx, ny = feas.nx, feas.ny
    px = eng.p.ravel()
    Q = cp.Variable((nx, ny), nonneg=True)
    J = cp.multiply(px[:, None], Q)
    r = cp.sum(J, axis=0)
    outer = cp.reshape(px, (nx, 1), order="C") @ cp.reshape(r, (1, ny), order="C")
    cons = [cp.sum(Q, axis=1) == 1]
    dist = []
    for j, d in enumerate(eng.d):
        dist.append(cp.sum(cp.multiply(J, np.asarray(d).reshape(nx, ny))) <= prob.D[j])
    cons += dist
    if eng.mask.any():
        cons.append(cp.multiply(eng.mask.reshape(nx, ny).astype(float), Q) == 0)
    if feas.A is not None:
        cons.append(feas.A @ cp.vec(Q, order="C") == 0)
    problem = cp.Problem(cp.Minimize(cp.sum(cp.rel_entr(J, outer))), cons)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        problem.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12,
                      tol_feas=1e-12, tol_ktratio=1e-10)
    if Q.value is None:
        raise InfeasibleError(f"conic solve failed with status {problem.status}")

    s = np.zeros(eng.T)
    for j in eng.free:
        s[j] = max(float(dist[j].dual_value), 0.0)
    qc = np.clip(Q.value, 0.0, None).reshape(feas.shape)
    qc = qc / qc.sum(axis=tuple(range(eng.T, 2 * eng.T)), keepdims=True)
    q, G, _, lower, it = eng.solve_inner(s, eng.output(qc), max_evals=2000)
    lb = (lower - float(s @ np.where(eng.zero, 0.0, prob.D))) / LN2
    q_feas = _feasible_mix(eng, q)
    rate = eng.rate(q_feas) / LN2
    if rate - lb > prob.options.tol:
        alt = _feasible_mix(eng, feas.project(qc))
        alt_rate = eng.rate(alt) / LN2
        if alt_rate < rate:
            q_feas, rate = alt, alt_rate
    lb = min(max(lb, 0.0), rate)
    dist_v = eng.distortions(q_feas)
    active = np.array([bool(eng.zero[j] or dist_v[j] >= prob.D[j] - 1e-9) for j in range(eng.T)])
    iters = it + (problem.solver_stats.num_iters or 0 if problem.solver_stats else 0)
    return DiscreteRDResult(rate=rate, lower_bound=lb, channel=q_feas, distortion=dist_v,
                            multipliers=np.where(eng.zero, np.inf, s), active=active,
                            iterations=int(iters), converged=rate - lb <= prob.options.tol,
                            method="conic")


# -- public solvers -------------------------------------------------------

def _gap_message(res):
    if not res.converged:
        res.message = f"duality gap {res.duality_gap:.3g} bits above tolerance"
    return res


def _solve(prob: DiscreteProblem) -> DiscreteRDResult:
    method = prob.options.method
    if method == "auto":
        method = "conic"
    if method == "conic":
        res = _solve_conic(prob)
    elif method == "alternating":
        res = _solve_alternating(prob)[1]
    elif method == "projected_gradient":
        return projected_gradient(prob)
    else:
        raise ValueError(f"unknown method {method!r}")
    if res.converged or not prob.options.fallback:
        return _gap_message(res)
    other = _solve_conic(prob) if res.method == "alternating" else _solve_alternating(prob)[1]
    if other.duality_gap < res.duality_gap:
        res = other
    if not res.converged:
        pg = projected_gradient(prob, start=res.channel)
        if pg.converged and pg.rate < res.rate:
            res = DiscreteRDResult(rate=pg.rate, lower_bound=res.lower_bound, channel=pg.channel,
                                   distortion=pg.distortion, multipliers=res.multipliers,
                                   active=pg.active, iterations=res.iterations + pg.iterations,
                                   converged=pg.rate - res.lower_bound <= prob.options.tol,
                                   method="projected_gradient")
    return _gap_message(res)


def jc_rd_discrete(prob: DiscreteProblem) -> DiscreteRDResult:
    """Joint-coding rate-distortion function, ``min I(X; Xhat)`` under per-frame targets."""
    if prob.delay is not None and prob.delay != prob.T - 1:
        raise ValueError("jc_rd_discrete takes no chain constraints; use cnc_sum_rate_discrete")
    return _solve(prob)


def cnc_sum_rate_discrete(prob: DiscreteProblem) -> DiscreteRDResult:
    """Minimum C-NC(k) sum-rate (``prob.delay``, default 1).

    For ``T = 3`` and ``k = 1`` the only active chain is ``Xhat_1 - X^2 - X_3``.
    """
    if prob.delay is None:
        prob = DiscreteProblem(prob.pmf, prob.D, 1, prob.repro_sizes, prob.distortion,
                               prob.options)
    return _solve(prob)


def chain_violation(channel, sizes_x, delay: int) -> float:
    """Largest spread of ``q(xhat^j | x)`` across ``x_{>j+k}`` with ``x^{j+k}`` fixed."""
    q = np.asarray(channel, dtype=float)
    T = len(sizes_x)
    worst = 0.0
    for j in range(T):
        h = min(j + 1 + delay, T)
        if h == T:
            continue
        marg = q.sum(axis=tuple(range(T + j + 1, 2 * T))) if j + 1 < T else q
        spread = marg.max(axis=tuple(range(h, T))) - marg.min(axis=tuple(range(h, T)))
        worst = max(worst, float(spread.max()))
    return worst


# -- equivalence scan -------------------------------------------------------

@dataclass
class ScanRow:
    D: tuple
    R_jc: float
    R_cnc: float
    gap: float
    equal: bool
    iters_jc: int
    iters_cnc: int


def equivalence_scan(p1: float, p2: float, grid, tol: float = 1e-3,
                     options: DiscreteOptions | None = None, n_jobs: int = 1) -> list:
    """JC and C-NC(1) rates of the binary source at each grid point."""
    pmf = build_binary_markov(p1, p2)
    options = options or DiscreteOptions()

    def row(D):
        D = tuple(float(v) for v in D)
        jc = jc_rd_discrete(DiscreteProblem(pmf, D, options=options))
        cnc = cnc_sum_rate_discrete(DiscreteProblem(pmf, D, delay=1, options=options))
        gap = cnc.rate - jc.rate
        return ScanRow(D, jc.rate, cnc.rate, gap, gap <= tol, jc.iterations, cnc.iterations)

    grid = list(grid)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(row, grid))
    return [row(D) for D in grid]


def uniform_grid(lo: float, hi: float, n: int, T: int = 3) -> list:
    axis = np.linspace(lo, hi, n)
    return [tuple(float(v) for v in D) for D in itertools.product(axis, repeat=T)]


def scan_to_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(SCAN_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCAN_COLUMNS)
    for r in rows:
        w.writerow([f"{r.D[0]:.6g}", f"{r.D[1]:.6g}", f"{r.D[2]:.6g}", f"{r.R_jc:.9f}",
                    f"{r.R_cnc:.9f}", f"{round(r.gap, 9) + 0.0:.9f}", int(r.equal), r.iters_jc, r.iters_cnc])
    return buf.getvalue()
