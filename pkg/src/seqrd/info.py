"""Information measures on discrete joint pmfs and Gaussian covariances.

A joint pmf over N variables is an N-dimensional array whose axis ``i`` runs
over the alphabet of variable ``i``. Variable groups are passed as sequences
of axis indices. Inside sequence-valued measures an entry ``None`` stands for
a constant symbol, which is how zero-padded sequences are represented.
All results are in bits.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

PMF_ATOL = 1e-12
CLAMP = 1e-12
RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Probability array over a product alphabet."""

    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim == 0:
            raise ValueError("pmf needs at least one variable")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("pmf entries must be finite and nonnegative")
        if abs(p.sum() - 1.0) > PMF_ATOL:
            raise ValueError(f"pmf sums to {p.sum():.15g}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def sizes(self) -> tuple:
        return self.p.shape

    @property
    def arity(self) -> int:
        return self.p.ndim


def as_pmf(p) -> JointPmf:
    return p if isinstance(p, JointPmf) else JointPmf(p)


def _axes(group: Iterable) -> tuple:
    return tuple(sorted({int(a) for a in group if a is not None}))


def marginal(p, axes) -> np.ndarray:
    """Marginal pmf of the listed axes, in sorted axis order."""
    pmf = as_pmf(p)
    keep = _axes(axes)
    drop = tuple(i for i in range(pmf.arity) if i not in keep)
    return pmf.p.sum(axis=drop) if drop else pmf.p


def _h(arr: np.ndarray) -> float:
    q = arr[arr > 0]
    return float(-np.sum(q * np.log2(q)))


def entropy(p, axes=None) -> float:
    """Shannon entropy of the variables in ``axes`` (all variables by default)."""
    pmf = as_pmf(p)
    if axes is None:
        return _h(pmf.p)
    keep = _axes(axes)
    if not keep:
        return 0.0
    return _h(marginal(pmf, keep))


def _clamp(value: float) -> float:
    return 0.0 if -CLAMP <= value < 0 else value


def _cmi(p, A, B, C) -> float:
    # set semantics: duplicates and constants are harmless
    A, B, C = set(_axes(A)), set(_axes(B)), set(_axes(C))
    value = (entropy(p, A | C) + entropy(p, B | C)
             - entropy(p, A | B | C) - entropy(p, C))
    return _clamp(value)


def conditional_mi(p, A, B, C=()) -> float:
    """``I(A; B | C)`` for disjoint index groups."""
    pmf = as_pmf(p)
    sets = [set(_axes(g)) for g in (A, B, C)]
    for s in sets:
        if s and max(s) >= pmf.arity:
            raise ValueError("axis index out of range")
    if (sets[0] & sets[1]) or (sets[0] & sets[2]) or (sets[1] & sets[2]):
        raise ValueError("index groups must be disjoint")
    return _cmi(pmf, *sets)


def mutual_information(p, A, B) -> float:
    return conditional_mi(p, A, B)


def directed_information(p, A: Sequence, B: Sequence) -> float:
    """``I(A^N -> B^N) = sum_n I(A^n; B_n | B^{n-1})``."""
    if len(A) != len(B):
        raise ValueError("directed information needs sequences of equal length")
    pmf = as_pmf(p)
    total = 0.0
    for n in range(len(A)):
        total += _cmi(pmf, A[:n + 1], [B[n]], B[:n])
    return _clamp(total)


def padded_sequence(B: Sequence, k: int) -> list:
    """The length-N sequence ``(0, ..., 0, B_1, ..., B_{N-k})``."""
    N = len(B)
    if not 0 <= k <= N:
        raise ValueError(f"shift k must satisfy 0 <= k <= {N}")
    return [None] * k + list(B[:N - k])


def k_directed_information(p, A: Sequence, B: Sequence, k: int) -> float:
    """``I_k(A^N -> B^N) = I(A^N; B^N) - sum_{n=k+1}^N I(B^{n-k}; A_n | A^{n-1})``."""
    N = len(A)
    if len(B) != N:
        raise ValueError("k-directed information needs sequences of equal length")
    if not 0 <= k <= N:
        raise ValueError(f"k must satisfy 0 <= k <= {N}")
    pmf = as_pmf(p)
    feedback = 0.0
    for n in range(k, N):
        feedback += _cmi(pmf, B[:n - k + 1], [A[n]], A[:n])
    return _cmi(pmf, A, B, ()) - feedback


def kdirect_identity_residual(p, k: int) -> float:
    """Residual of ``I(X;Xhat) = I_{k+1}(X -> Xhat) + I(0^{k+1} Xhat^{T-k-1} -> X)``.

    ``p`` is a pmf over ``(X_1..X_T, Xhat_1..Xhat_T)``. The k-directed term is
    evaluated from its sum form and the padded directed information from an
    explicit zero-padded sequence, so the residual compares the two routes.
    """
    pmf = as_pmf(p)
    if pmf.arity % 2:
        raise ValueError("pmf must cover (X^T, Xhat^T)")
    T = pmf.arity // 2
    if not 0 <= k + 1 <= T:
        raise ValueError(f"need 0 <= k + 1 <= T = {T}")
    X, Xh = list(range(T)), list(range(T, 2 * T))
    lhs = _cmi(pmf, X, Xh, ())
    rhs = (k_directed_information(pmf, X, Xh, k + 1)
           + directed_information(pmf, padded_sequence(Xh, k + 1), X))
    return abs(lhs - rhs)


# -- Gaussian --------------------------------------------------------------

def gaussian_mi(S, A: Sequence, B: Sequence) -> float:
    """``1/2 log2(det S_AA det S_BB / det S_(A,B))`` for a Gaussian vector.

    A singular ``S_BB`` is handled by restricting ``B`` to the range of
    ``S_BB`` (eigenvalues above ``1e-10`` times the largest); a singular
    ``S_AA`` is an error.
    """
    S = np.asarray(S, dtype=float)
    A, B = list(A), list(B)
    if set(A) & set(B):
        raise ValueError("index groups must be disjoint")
    S_AA = S[np.ix_(A, A)]
    S_AB = S[np.ix_(A, B)]
    S_BB = S[np.ix_(B, B)]
    eig_a = np.linalg.eigvalsh(S_AA)
    if eig_a[0] <= RANK_RTOL * max(eig_a[-1], 0.0) or eig_a[-1] <= 0:
        raise ValueError("S_AA is singular")
    lam, U = np.linalg.eigh(0.5 * (S_BB + S_BB.T))
    if lam.size == 0 or lam[-1] <= 0:
        return 0.0
    keep = lam > RANK_RTOL * max(lam[-1], eig_a[-1])
    U, lam = U[:, keep], lam[keep]
    cross = S_AB @ U
    # det S_(A,B') = det diag(lam) * det(S_AA - cross diag(1/lam) cross^T)
    cond = S_AA - (cross / lam) @ cross.T
    sign, logdet_cond = np.linalg.slogdet(0.5 * (cond + cond.T))
    if sign <= 0:
        return math.inf
    _, logdet_a = np.linalg.slogdet(S_AA)
    return _clamp(float(0.5 * (logdet_a - logdet_cond) / math.log(2)))


# -- plain-text pmf tables -------------------------------------------------

def format_pmf_table(p) -> str:
    """One line per nonzero outcome: symbols, then probability."""
    pmf = as_pmf(p)
    lines = ["# sizes: " + " ".join(str(s) for s in pmf.sizes)]
    for idx in itertools.product(*(range(s) for s in pmf.sizes)):
        prob = pmf.p[idx]
        if prob > 0:
            lines.append(" ".join(str(i) for i in idx) + " " + repr(float(prob)))
    return "\n".join(lines) + "\n"


def parse_pmf_table(text: str) -> JointPmf:
    """Inverse of :func:`format_pmf_table`.

    The ``# sizes:`` line is optional; without it each alphabet is sized by its
    largest symbol.
    """
    sizes = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("sizes:"):
                sizes = tuple(int(t) for t in body[len("sizes:"):].split())
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ValueError(f"line {lineno}: need symbols and a probability")
        try:
            rows.append((tuple(int(t) for t in parts[:-1]), float(parts[-1])))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if not rows:
        raise ValueError("empty pmf table")
    arity = len(rows[0][0])
    if any(len(r[0]) != arity for r in rows):
        raise ValueError("rows have differing numbers of symbols")
    if sizes is None:
        sizes = tuple(max(r[0][i] for r in rows) + 1 for i in range(arity))
    if len(sizes) != arity:
        raise ValueError("sizes line does not match row arity")
    p = np.zeros(sizes)
    for idx, prob in rows:
        if any(s < 0 or s >= n for s, n in zip(idx, sizes)):
            raise ValueError(f"symbol tuple {idx} outside alphabet sizes {sizes}")
        p[idx] += prob
    return JointPmf(p)


def read_pmf_table(path) -> JointPmf:
    with open(path) as fh:
        return parse_pmf_table(fh.read())


def write_pmf_table(p, path):
    with open(path, "w") as fh:
        fh.write(format_pmf_table(p))
