"""Source models, distortion regions and architecture constraint lists.

Variables of the joint vector ``(X_1..X_T, Xhat_1..Xhat_T)`` are addressed by
integer index: ``X_j`` is ``j - 1`` and ``Xhat_j`` is ``T + j - 1``. This is
also the row/column layout of every joint covariance matrix in the package.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidSpecError

SYM_RTOL = 1e-12
PSD_RTOL = 1e-10
REGION_RTOL = 1e-12

GAUSS_MARKOV_1 = "gauss_markov_1"
GAUSS_MARKOV_K = "gauss_markov_k"
BINARY_MARKOV = "binary_markov"
SOURCE_KINDS = (GAUSS_MARKOV_1, GAUSS_MARKOV_K, BINARY_MARKOV)


def _floats(values) -> tuple:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(values, dtype=float)))


@dataclass(frozen=True)
class SourceSpec:
    """Parametric description of a T-frame Markov source.

    Use the constructors :meth:`gauss_markov`, :meth:`autoregressive` and
    :meth:`binary_markov` rather than filling fields directly.

    Attributes
    ----------
    T : int
        Number of frames, at least 2.
    kind : str
        One of ``gauss_markov_1``, ``gauss_markov_k`` or ``binary_markov``.
    variances : tuple of float
        Per-frame variances (first-order Gaussian).
    correlations : tuple of float
        Correlation between frames j and j+1, length T-1 (first-order Gaussian).
    ar_coefficients : tuple of float
        Regression coefficients ``a_1..a_k`` of the autoregression
        ``X_j = sum_m a_m X_{j-m} + N_j`` (order-k Gaussian).
    innovation_variances : tuple of float
        Variance of ``N_j`` for each recursion frame ``j = k+1..T``. The first
        k frames follow the stationary law driven by the first entry.
    crossovers : tuple of float
        ``P(X_{j+1} != X_j)`` for j = 1..T-1 (binary).
    """

    T: int
    kind: str
    variances: tuple = ()
    correlations: tuple = ()
    ar_coefficients: tuple = ()
    innovation_variances: tuple = ()
    crossovers: tuple = ()

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 2:
            raise InvalidSpecError(f"T must be an integer >= 2, got {self.T!r}")
        if self.kind not in SOURCE_KINDS:
            raise InvalidSpecError(f"unknown source kind {self.kind!r}")
        if self.kind == GAUSS_MARKOV_1:
            if len(self.variances) != self.T or len(self.correlations) != self.T - 1:
                raise InvalidSpecError("need T variances and T-1 correlations")
            if not all(v > 0 and np.isfinite(v) for v in self.variances):
                raise InvalidSpecError("variances must be positive")
            if not all(abs(r) <= 1 for r in self.correlations):
                raise InvalidSpecError("correlations must lie in [-1, 1]")
        elif self.kind == GAUSS_MARKOV_K:
            k = len(self.ar_coefficients)
            if k < 1 or k >= self.T:
                raise InvalidSpecError("need 1 <= len(ar_coefficients) < T")
            if len(self.innovation_variances) != self.T - k:
                raise InvalidSpecError("need T-k innovation variances")
            if not all(v > 0 and np.isfinite(v) for v in self.innovation_variances):
                raise InvalidSpecError("innovation variances must be positive")
            _check_stationary(self.ar_coefficients)
        else:
            if len(self.crossovers) != self.T - 1:
                raise InvalidSpecError("need T-1 crossover probabilities")
            if not all(0.0 <= p <= 0.5 for p in self.crossovers):
                raise InvalidSpecError("crossover probabilities must lie in [0, 0.5]")

    @classmethod
    def gauss_markov(cls, variances, correlations) -> "SourceSpec":
        variances, correlations = _floats(variances), _floats(correlations)
        return cls(T=len(variances), kind=GAUSS_MARKOV_1,
                   variances=variances, correlations=correlations)

    @classmethod
    def autoregressive(cls, coefficients, innovation_variances, T: int) -> "SourceSpec":
        """Order-k Gaussian source; a scalar innovation variance is broadcast."""
        coefficients = _floats(coefficients)
        innov = _floats(innovation_variances)
        if len(innov) == 1:
            innov = innov * (T - len(coefficients))
        return cls(T=T, kind=GAUSS_MARKOV_K, ar_coefficients=coefficients,
                   innovation_variances=innov)

    @classmethod
    def binary_markov(cls, crossovers) -> "SourceSpec":
        crossovers = _floats(crossovers)
        return cls(T=len(crossovers) + 1, kind=BINARY_MARKOV, crossovers=crossovers)

    @property
    def is_gaussian(self) -> bool:
        return self.kind != BINARY_MARKOV

    @property
    def markov_order(self) -> int:
        """Smallest k such that the frames form a k-th order Markov chain."""
        if self.kind == GAUSS_MARKOV_1:
            return 0 if all(r == 0 for r in self.correlations) else 1
        if self.kind == GAUSS_MARKOV_K:
            nz = [m + 1 for m, a in enumerate(self.ar_coefficients) if a != 0]
            return max(nz, default=0)
        return 0 if all(p == 0.5 for p in self.crossovers) else 1


def _check_stationary(coefficients):
    k = len(coefficients)
    companion = np.zeros((k, k))
    companion[0, :] = coefficients
    companion[1:, :-1] = np.eye(k - 1)
    radius = max(abs(np.linalg.eigvals(companion)))
    if radius >= 1:
        raise InvalidSpecError(
            f"autoregression is not stationary (spectral radius {radius:.6g} >= 1)")
    return companion


def build_covariance(spec: SourceSpec) -> np.ndarray:
    """Covariance matrix of a Gaussian source.

    First-order sources give ``S[i, j] = s_i s_j prod_{m=i}^{j-1} rho_m``.
    Order-k sources start from the stationary law of the autoregression and
    run the recursion forward.
    """
    if not spec.is_gaussian:
        raise InvalidSpecError("build_covariance needs a Gaussian source")
    T = spec.T
    if spec.kind == GAUSS_MARKOV_1:
        sd = np.sqrt(np.asarray(spec.variances))
        rho = np.asarray(spec.correlations)
        S = np.empty((T, T))
        for i in range(T):
            for j in range(i, T):
                S[i, j] = S[j, i] = sd[i] * sd[j] * np.prod(rho[i:j])
        return S

    a = np.asarray(spec.ar_coefficients)
    k = len(a)
    companion = _check_stationary(a)
    noise = np.zeros((k, k))
    noise[0, 0] = spec.innovation_variances[0]
    # state (X_t, X_{t-1}, ..., X_{t-k+1}); reverse for time order
    state_cov = scipy.linalg.solve_discrete_lyapunov(companion, noise)
    S = np.zeros((T, T))
    S[:k, :k] = state_cov[::-1, ::-1]
    for j in range(k, T):
        lags = S[:j, j - k:j][:, ::-1]
        S[:j, j] = S[j, :j] = lags @ a
        S[j, j] = S[j, j - k:j][::-1] @ a + spec.innovation_variances[j - k]
    S = 0.5 * (S + S.T)
    if not is_psd(S):
        raise InvalidSpecError("order-k parameters do not give a PSD covariance")
    return S


def is_psd(S, rtol: float = PSD_RTOL) -> bool:
    S = np.asarray(S, dtype=float)
    eig = np.linalg.eigvalsh(0.5 * (S + S.T))
    scale = max(eig[-1], 0.0)
    return bool(eig[0] >= -rtol * scale)


def as_covariance(S) -> np.ndarray:
    """Validate a covariance matrix: square, symmetric, numerically PSD."""
    S = np.array(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"covariance must be square, got shape {S.shape}")
    scale = max(np.max(np.abs(S)), np.finfo(float).tiny)
    if np.max(np.abs(S - S.T)) > SYM_RTOL * scale:
        raise ValueError("covariance is not symmetric")
    if not is_psd(S):
        raise ValueError("covariance is not positive semidefinite")
    return S


def as_distortion(D, T: int | None = None) -> np.ndarray:
    D = np.array(np.atleast_1d(D), dtype=float)
    if D.ndim != 1:
        raise ValueError("distortion tuple must be one-dimensional")
    if T is not None and len(D) != T:
        raise ValueError(f"expected {T} distortions, got {len(D)}")
    if np.any(D < 0) or not np.all(np.isfinite(D)):
        raise ValueError("distortions must be finite and nonnegative")
    return D


def in_region_cc(spec: SourceSpec, D) -> bool:
    """Whether every DPCM stage runs at a nonnegative rate for ``D``."""
    from .closed_forms import sigma_w

    D = as_distortion(D, spec.T)
    bound = np.asarray(sigma_w(spec, D))
    return bool(np.all(D <= bound * (1 + REGION_RTOL)))


def in_region_jc(S, D) -> bool:
    """Whether ``S - diag(D)`` is positive semidefinite."""
    S = as_covariance(S)
    D = as_distortion(D, S.shape[0])
    lam_max = np.linalg.eigvalsh(S)[-1]
    lam = np.linalg.eigvalsh(S - np.diag(D))[0]
    return bool(lam >= -PSD_RTOL * lam_max)


def jc_hypercube_bound(S) -> float:
    """Smallest eigenvalue of ``S``; every D in ``[0, bound]^T`` is JC-admissible."""
    S = as_covariance(S)
    return float(max(np.linalg.eigvalsh(S)[0], 0.0))


# -- architectures ---------------------------------------------------------

CC, CNC, NCC, NCNC, JC = "CC", "CNC", "NCC", "NCNC", "JC"


@dataclass(frozen=True)
class SystemKind:
    """A delayed sequential coding architecture.

    ``k1`` is the encoder frame-delay and ``k2`` the decoder frame-delay.
    """

    tag: str
    k1: int = 0
    k2: int = 0

    def __post_init__(self):
        if self.tag not in (CC, CNC, NCC, NCNC, JC):
            raise ValueError(f"unknown architecture {self.tag!r}")
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError("delays must be nonnegative")
        if self.tag in (CC, JC) and (self.k1 or self.k2):
            raise ValueError(f"{self.tag} takes no delay parameters")
        if self.tag == CNC and self.k1:
            raise ValueError("C-NC has a causal encoder (k1 = 0)")
        if self.tag == NCC and self.k2:
            raise ValueError("NC-C has a causal decoder (k2 = 0)")

    @classmethod
    def cnc(cls, k: int) -> "SystemKind":
        return cls(CNC, 0, k)

    @classmethod
    def ncc(cls, k: int) -> "SystemKind":
        return cls(NCC, k, 0)

    @classmethod
    def ncnc(cls, k1: int, k2: int) -> "SystemKind":
        return cls(NCNC, k1, k2)

    def total_delay(self, T: int) -> int:
        """Encoder plus decoder delay; JC counts as ``T - 1``."""
        if self.tag == JC:
            return T - 1
        delay = self.k1 + self.k2
        if delay >= T:
            raise ValueError(f"delay {delay} must be < T = {T}")
        return delay

    def __str__(self):
        if self.tag in (CC, JC):
            return self.tag
        if self.tag == CNC:
            return f"CNC{self.k2}"
        if self.tag == NCC:
            return f"NCC{self.k1}"
        return f"NCNC{self.k1}_{self.k2}"


_KIND_RE = re.compile(r"^(CC|JC|CNC|NCC|NCNC)\s*\(?\s*(\d*)\s*[,_]?\s*(\d*)\s*\)?$")


def parse_kind(text: str) -> SystemKind:
    """Parse ``CC``, ``JC``, ``CNC1``, ``CNC(2)``, ``NCC1``, ``NCNC(1,1)``, ``NCNC1_1``."""
    m = _KIND_RE.match(text.strip().upper().replace("-", ""))
    if not m:
        raise ValueError(f"cannot parse architecture {text!r}")
    tag, a, b = m.groups()
    if tag in (CC, JC):
        if a or b:
            raise ValueError(f"{tag} takes no delay parameters")
        return SystemKind(tag)
    if not a:
        raise ValueError(f"{tag} needs a delay, e.g. {tag}1")
    if tag == NCNC:
        if not b:
            raise ValueError("NCNC needs two delays, e.g. NCNC(1,1)")
        return SystemKind.ncnc(int(a), int(b))
    if b:
        raise ValueError(f"{tag} takes a single delay")
    return SystemKind.cnc(int(a)) if tag == CNC else SystemKind.ncc(int(a))


@dataclass(frozen=True)
class ChainConstraint:
    """Conditional independence ``left _|_ right | given`` over joint indices."""

    left: frozenset
    right: frozenset
    given: frozenset

    def __post_init__(self):
        for name in ("left", "right", "given"):
            object.__setattr__(self, name, frozenset(int(i) for i in getattr(self, name)))
        if not self.left or not self.right:
            raise ValueError("left and right sets must be nonempty")
        if (self.left & self.right) or (self.left & self.given) or (self.right & self.given):
            raise ValueError("constraint index sets must be disjoint")
        if min(self.left | self.right | self.given) < 0:
            raise ValueError("indices must be nonnegative")

    def check_range(self, T: int):
        if max(self.left | self.right | self.given) >= 2 * T:
            raise ValueError(f"constraint index out of range for T = {T}")

    def describe(self, T: int) -> str:
        def name(i):
            return f"X{i + 1}" if i < T else f"Xhat{i - T + 1}"

        def group(s):
            return "(" + ",".join(name(i) for i in sorted(s)) + ")"

        text = f"{group(self.left)} _|_ {group(self.right)}"
        return text + (f" | {group(self.given)}" if self.given else "")


def cnc_constraints(T: int, k: int) -> list:
    """Chains ``Xhat_j - (X^{j+k}, Xhat^{j-1}) - X_{j+k+1}^T`` for j = 1..T-k-1."""
    out = []
    for j in range(1, T - k):
        left = {T + j - 1}
        given = set(range(j + k)) | {T + i for i in range(j - 1)}
        right = set(range(j + k, T))
        out.append(ChainConstraint(left, right, given))
    return out


def markov_constraints(kind: SystemKind, T: int) -> list:
    """Markov-chain constraints of the minimum sum-rate problem for ``kind``.

    NC-C(k) and NC-NC(k1, k2) share the C-NC list of the same total delay;
    C-C is C-NC with zero delay and JC has no chain constraints.
    """
    if T < 2:
        raise ValueError("T must be >= 2")
    return cnc_constraints(T, kind.total_delay(T))
