"""Closed-form sum-rates for Gauss-Markov sources under MSE, in bits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoClosedFormError, OutOfRegionError, UnsupportedTransformError
from .model import (CC, CNC, JC, NCC, NCNC, PSD_RTOL, SourceSpec, SystemKind,
                    as_covariance, as_distortion, build_covariance, in_region_cc,
                    in_region_jc)


def _half_log2_ratio(num: float, den: float) -> float:
    if num == 0 and den == 0:
        return 0.0
    if den == 0:
        return math.inf
    return 0.5 * math.log2(num / den)


def first_order_params(spec: SourceSpec):
    """Per-frame variances and adjacent correlations of a first-order source."""
    if spec.kind == "gauss_markov_1":
        return np.asarray(spec.variances), np.asarray(spec.correlations)
    if not spec.is_gaussian or spec.markov_order > 1:
        raise NoClosedFormError("closed form needs a first-order Gaussian source")
    S = build_covariance(spec)
    var = np.diag(S).copy()
    rho = np.array([S[j, j + 1] / math.sqrt(var[j] * var[j + 1]) for j in range(spec.T - 1)])
    return var, rho


def sigma_w(spec: SourceSpec, D) -> list:
    """Innovation variances of idealized DPCM.

    ``sigma_W1^2 = sigma_1^2`` and, for j >= 2,
    ``sigma_Wj^2 = rho_{j-1}^2 (sigma_j^2 / sigma_{j-1}^2) D_{j-1} + (1 - rho_{j-1}^2) sigma_j^2``.
    """
    var, rho = first_order_params(spec)
    D = as_distortion(D, spec.T)
    out = [float(var[0])]
    for j in range(1, spec.T):
        r2 = rho[j - 1] ** 2
        out.append(float(r2 * var[j] / var[j - 1] * D[j - 1] + (1 - r2) * var[j]))
    return out


@dataclass(frozen=True)
class StageRates:
    """Per-frame DPCM rates (bits) and the innovation variance each stage codes."""

    rates: tuple
    innovation_variances: tuple

    @property
    def sum(self) -> float:
        return math.fsum(self.rates)


def dpcm_stage_rates(spec: SourceSpec, D) -> StageRates:
    D = as_distortion(D, spec.T)
    if not in_region_cc(spec, D):
        raise OutOfRegionError("D is outside the C-C region; some DPCM stage would idle")
    sw = sigma_w(spec, D)
    rates = tuple(max(_half_log2_ratio(s, d), 0.0) for s, d in zip(sw, D))
    return StageRates(rates=rates, innovation_variances=tuple(sw))


def cc_sum_rate_gm(spec: SourceSpec, D) -> float:
    """Minimum C-C sum-rate, ``sum_j 1/2 log2(sigma_Wj^2 / D_j)``, inside the C-C region."""
    return dpcm_stage_rates(spec, D).sum


def jc_rate_gm(S, D) -> float:
    """JC rate ``1/2 log2(det S / prod D)`` inside the region ``S - diag(D) >= 0``."""
    S = as_covariance(S)
    D = as_distortion(D, S.shape[0])
    eig = np.linalg.eigvalsh(S)
    if eig[0] <= PSD_RTOL * eig[-1]:
        raise OutOfRegionError("source covariance is singular; determinant formula undefined")
    if not in_region_jc(S, D):
        raise OutOfRegionError("D is outside the JC region (S - diag(D) not PSD)")
    if np.any(D == 0):
        return math.inf
    _, logdet = np.linalg.slogdet(S)
    return float(0.5 * (logdet - np.sum(np.log(D))) / math.log(2))


def jc_rate_gm_stagewise(spec: SourceSpec, D) -> float:
    """JC rate of a first-order source as a sum of per-frame terms."""
    var, rho = first_order_params(spec)
    D = as_distortion(D, spec.T)
    if not in_region_jc(build_covariance(spec), D):
        raise OutOfRegionError("D is outside the JC region")
    total = _half_log2_ratio(var[0], D[0])
    for j in range(1, spec.T):
        total += _half_log2_ratio(var[j] * (1 - rho[j - 1] ** 2), D[j])
    return total


def cnc_sum_rate_gm(spec: SourceSpec, D, k: int) -> float:
    """Minimum C-NC(k) sum-rate; equals the JC rate for order <= k sources in the JC region."""
    if not spec.is_gaussian:
        raise NoClosedFormError("closed form needs a Gaussian source")
    if not 0 <= k < spec.T:
        raise ValueError(f"delay k must satisfy 0 <= k < T, got {k}")
    S = build_covariance(spec)
    if k < spec.T - 1 and spec.markov_order > k:
        raise NoClosedFormError(
            f"source has Markov order {spec.markov_order} > delay {k}; use the numerical solver")
    try:
        return jc_rate_gm(S, D)
    except OutOfRegionError as exc:
        raise NoClosedFormError(str(exc)) from exc


def counter_example_gap(rho: float, D: float, D3: float, sigma: float = 1.0) -> float:
    """C-NC(1) minus JC sum-rate for the singular source with ``X_1 = X_2``.

    With ``D_1 = D_2 = D`` the C-NC system collapses to a two-stage C-C system
    on ``(X_1, X_3)`` and the JC system to a two-stage JC system, so the gap is
    the difference of the two-frame closed forms.
    """
    pair = SourceSpec.gauss_markov([sigma ** 2, sigma ** 2], [rho])
    cc = cc_sum_rate_gm(pair, [D, D3])
    jc = jc_rate_gm(build_covariance(pair), [D, D3])
    return cc - jc


def transform_rates(kind_from: SystemKind, kind_to: SystemKind, R) -> tuple:
    """Map an admissible rate tuple of one architecture to another.

    Supported moves keep the total delay ``k = k1 + k2`` fixed:

    * C-NC(k) -> NC-NC(k1, k2) (incl. NC-C when k2 = 0): merge the first
      ``k1 + 1`` rates and pad ``k1`` trailing zeros.
    * NC-NC(k1, k2) -> C-NC(k): ``k1`` leading zeros, then ``R_1..R_{T-k1-1}``,
      then the sum of the last ``k1 + 1`` rates.
    """
    R = tuple(R)
    T = len(R)
    zero = R[0] * 0
    if any(r < 0 for r in R):
        raise ValueError("rates must be nonnegative")
    src, dst = _as_cnc_family(kind_from, T), _as_cnc_family(kind_to, T)
    if src is None or dst is None or src[0] + src[1] != dst[0] + dst[1]:
        raise UnsupportedTransformError(f"no rate mapping from {kind_from} to {kind_to}")
    if src == dst:
        return R
    # go through C-NC(k1 + k2)
    k1 = src[0]
    if k1:
        R = (zero,) * k1 + R[:T - k1 - 1] + (sum(R[T - k1 - 1:], zero),)
    k1 = dst[0]
    if k1:
        R = (sum(R[:k1 + 1], zero),) + R[k1 + 1:] + (zero,) * k1
    return R


def _as_cnc_family(kind: SystemKind, T: int):
    if kind.tag == JC:
        return None
    if kind.total_delay(T) >= T:
        return None
    return {CC: (0, 0), CNC: (0, kind.k2), NCC: (kind.k1, 0), NCNC: (kind.k1, kind.k2)}[kind.tag]
