"""Network-level combining of per-radar CPI data.

Centralized fusion weighs each radar's return by its estimated amplitude
(maximal ratio combining: fused SNR is the sum of per-radar SNRs, and the
amplitude weights are the unique maximizer). Decentralized fusion takes the
per-bin maximum of the radars' statistics; the threshold solving
1 - (1 - exp(-t/2))^R = pfa keeps the network false-alarm rate nominal for
independent central chi-squared statistics. Both operate in reference-radar
bin order via the per-radar bin permutations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .detector import (
    StatisticVector,
    cfar_threshold,
    estimate_alpha,
    estimate_pd,
    marcum_q1,
    wald_statistic,
)
from .scenario import NetworkConfig, RadarParams

__all__ = [
    "FusedCpi",
    "fuse_centralized",
    "fuse_decentralized",
    "decentralized_threshold",
    "decentralized_threshold_quadrature",
    "fused_pd",
]

ZERO_SIGNAL_FLOOR = 1e-30


@dataclass(frozen=True)
class FusedCpi:
    mode: str
    statistic: StatisticVector
    weights_used: np.ndarray | None = None


def _check_network(n_items: int, net: NetworkConfig, what: str) -> None:
    if n_items != net.n_radars:
        raise ValueError(
            f"{what}: got {n_items} radars, network declares {net.n_radars}"
        )


def fuse_centralized(returns, steerings, params: RadarParams,
                     net: NetworkConfig) -> FusedCpi:
    """Amplitude-weighted signal combining, then a single detection pass.

    returns[i][q] / steerings[i][q] are radar i's data for its local bin q;
    reference bin l maps to local bin net.bin_mapping[i][l]. The combined
    steering sum_i |alpha_i|^2 v_i makes the noise-free fused return exactly
    proportional to it and collapses to the single-radar statistic at R = 1.
    """
    _check_network(len(returns), net, "fuse_centralized")
    _check_network(len(steerings), net, "fuse_centralized")
    n_bins = params.n_bins
    for i in range(net.n_radars):
        if len(returns[i]) != n_bins or len(steerings[i]) != n_bins:
            raise ValueError(f"radar {i} did not report all {n_bins} bins")

    lam = np.zeros(n_bins)
    weights = np.zeros((net.n_radars, n_bins), dtype=complex)
    cpi = getattr(returns[0][0], "cpi", 0)
    for l in range(n_bins):
        x_bar = None
        v_bar = None
        for i in range(net.n_radars):
            q = net.bin_mapping[i][l]
            ret = returns[i][q]
            st = steerings[i][q]
            alpha = estimate_alpha(ret, st)
            weights[i, l] = alpha
            xv = np.asarray(getattr(ret, "x", ret))
            vv = np.asarray(getattr(st, "v", st))
            contrib_x = np.conj(alpha) * xv
            contrib_v = (abs(alpha) ** 2) * vv
            x_bar = contrib_x if x_bar is None else x_bar + contrib_x
            v_bar = contrib_v if v_bar is None else v_bar + contrib_v
        if (np.linalg.norm(x_bar) < ZERO_SIGNAL_FLOOR
                or np.linalg.norm(v_bar) == 0.0):
            lam[l] = 0.0
            continue
        lam[l] = wald_statistic(x_bar, v_bar, params.kappa, params.kappa_cap)

    threshold = cfar_threshold(params.pfa_nominal)
    stat = StatisticVector.from_lam(lam, threshold, cpi=cpi)
    return FusedCpi(mode="centralized", statistic=stat, weights_used=weights)


def fuse_decentralized(stats, net: NetworkConfig) -> FusedCpi:
    """Per-bin maximum across radars, thresholded by the max-fusion rule.

    Each radar's StatisticVector is in its local bin order; reference bin l
    reads radar i's entry bin_mapping[i][l]. The single-radar design pfa is
    recovered from the per-radar threshold (exact inverse of the chi-squared
    rule), so the fused threshold needs no extra configuration.
    """
    _check_network(len(stats), net, "fuse_decentralized")
    n_bins = stats[0].lam.size
    for s in stats:
        if s.lam.size != n_bins:
            raise ValueError("per-radar statistic vectors differ in length")

    remapped = np.empty((net.n_radars, n_bins))
    for i, s in enumerate(stats):
        perm = np.asarray(net.bin_mapping[i])
        remapped[i] = s.lam[perm]
    fused_lam = remapped.max(axis=0)

    pfa = float(np.exp(-stats[0].threshold / 2.0))
    threshold = decentralized_threshold(pfa, net.n_radars)
    pd = np.array(
        [fused_pd(remapped[:, l], threshold) for l in range(n_bins)]
    )
    stat = StatisticVector(
        lam=fused_lam,
        threshold=threshold,
        decisions=fused_lam >= threshold,
        pd_estimates=pd,
        cpi=stats[0].cpi,
    )
    return FusedCpi(mode="decentralized", statistic=stat, weights_used=None)


def decentralized_threshold(pfa: float, n_radars: int) -> float:
    """Threshold keeping the max of R independent chi2_2 variables at pfa.

    Closed form of 1 - (1 - exp(-t/2))^R = pfa.
    """
    if not 0.0 < pfa < 1.0:
        raise ValueError(f"pfa must lie strictly inside (0,1), got {pfa}")
    if n_radars < 1:
        raise ValueError("n_radars must be at least 1")
    return -2.0 * np.log1p(-(1.0 - pfa) ** (1.0 / n_radars))


def decentralized_threshold_quadrature(pfa: float, n_radars: int) -> float:
    """Same threshold via numeric integration of the order statistic.

    Exists to regression-test the closed form; agreement is ~1e-10 relative.
    """
    if not 0.0 < pfa < 1.0:
        raise ValueError(f"pfa must lie strictly inside (0,1), got {pfa}")
    if n_radars < 1:
        raise ValueError("n_radars must be at least 1")

    def excess(t: float) -> float:
        cdf, _err = integrate.quad(lambda u: 0.5 * np.exp(-u / 2.0), 0.0, t,
                                   limit=200)
        return 1.0 - cdf ** n_radars - pfa

    hi = 10.0
    while excess(hi) > 0.0:
        hi *= 2.0
        if hi > 1e6:
            raise RuntimeError("threshold bracket failed")
    return float(optimize.brentq(excess, 1e-12, hi, xtol=1e-12, rtol=1e-13))


def fused_pd(stats_per_radar, threshold: float) -> float:
    """1 - prod_i (1 - Q1(sqrt(stat_i), sqrt(threshold)))."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    miss = 1.0
    for s in np.asarray(stats_per_radar, dtype=float).ravel():
        if s < 0:
            raise ValueError("statistics must be nonnegative")
        miss *= 1.0 - marcum_q1(np.sqrt(s), np.sqrt(threshold))
    return 1.0 - miss


def _unused_estimate_pd_alias():
    # estimate_pd re-exported through the detector module; kept imported here
    # so fused single-radar reductions can be cross-checked in tests.
    return estimate_pd
