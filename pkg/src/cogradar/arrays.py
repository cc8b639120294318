"""Steering vectors, transmit beamformers, and per-CPI return synthesis.

Uniform linear arrays at half-wavelength spacing, phase referenced to the
first element. The per-CPI virtual steering vector for a bin is the K-fold
repetition of the per-pulse kron((W^T a), b), so its norm carries the whole
spatial-temporal gain budget. All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import RadarParams

__all__ = [
    "SteeringPair",
    "Beamformer",
    "VirtualSteering",
    "CpiReturn",
    "steering",
    "bin_centers",
    "steering_pair",
    "make_beamformer",
    "virtual_steering",
    "synthesize_return",
]


def steering(angle_rad: float, n_elems: int) -> np.ndarray:
    """Unit-modulus array response: entry m is exp(j*pi*m*sin(angle))."""
    if n_elems < 1:
        raise ValueError("n_elems must be at least 1")
    phases = np.pi * np.arange(n_elems) * np.sin(angle_rad)
    return np.exp(1j * phases)


def bin_centers(n_bins: int) -> np.ndarray:
    """Centers of n_bins equal partitions of [-pi/2, pi/2)."""
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    return -np.pi / 2 + (np.arange(n_bins) + 0.5) * np.pi / n_bins


@dataclass(frozen=True)
class SteeringPair:
    tx_steering: np.ndarray
    rx_steering: np.ndarray
    angle_rad: float


def steering_pair(angle_rad: float, params: RadarParams) -> SteeringPair:
    return SteeringPair(
        tx_steering=steering(angle_rad, params.n_tx),
        rx_steering=steering(angle_rad, params.n_rx),
        angle_rad=float(angle_rad),
    )


@dataclass(frozen=True)
class Beamformer:
    """Transmit weight matrix with trace(W W^H) = total power, exactly."""

    weights: np.ndarray
    illuminated_bins: frozenset


def make_beamformer(bins, params: RadarParams) -> Beamformer:
    """Equal-power conjugate-steering columns toward `bins`.

    Empty set gives the flood configuration sqrt(P/n_tx)*I, which spreads
    power uniformly over the sector. A nonempty set of size B puts one
    column per bin, each scaled sqrt(P/(B*n_tx)); remaining columns are zero
    so the trace constraint holds without renormalization.
    """
    bins = frozenset(int(b) for b in bins)
    n_tx = params.n_tx
    if any(not 0 <= b < params.n_bins for b in bins):
        raise ValueError("illuminated bin outside [0, n_bins)")
    if len(bins) > n_tx:
        raise ValueError(
            f"cannot form {len(bins)} beams with {n_tx} transmit elements"
        )
    w = np.zeros((n_tx, n_tx), dtype=complex)
    if not bins:
        np.fill_diagonal(w, np.sqrt(params.total_power / n_tx))
    else:
        centers = bin_centers(params.n_bins)
        scale = np.sqrt(params.total_power / (len(bins) * n_tx))
        for col, b in enumerate(sorted(bins)):
            w[:, col] = scale * np.conj(steering(centers[b], n_tx))
    return Beamformer(weights=w, illuminated_bins=bins)


@dataclass(frozen=True)
class VirtualSteering:
    v: np.ndarray
    bin: int


def virtual_steering(bf: Beamformer, bin: int, params: RadarParams) -> VirtualSteering:
    """Per-CPI virtual array response toward a bin under a beamformer.

    Per pulse this is kron(W^T a, b); the block repeats identically over the
    K pulses because the transmit weights are held for the whole CPI.
    """
    if not 0 <= bin < params.n_bins:
        raise ValueError(f"bin {bin} outside [0, {params.n_bins})")
    center = bin_centers(params.n_bins)[bin]
    a = steering(center, params.n_tx)
    b = steering(center, params.n_rx)
    per_pulse = np.kron(bf.weights.T @ a, b)
    return VirtualSteering(v=np.tile(per_pulse, params.pulses_per_cpi), bin=int(bin))


@dataclass(frozen=True)
class CpiReturn:
    x: np.ndarray
    radar: int
    bin: int
    cpi: int


def synthesize_return(targets, bf: Beamformer, clutter: np.ndarray, bin: int,
                      params: RadarParams, radar: int = 0, cpi: int = 0) -> CpiReturn:
    """x = sum of alpha * v over targets in this bin, plus the clutter vector.

    `targets` is a list of (bin, alpha) pairs; entries for other bins are
    ignored (per-bin spatial filtering keeps each bin's return separate).
    """
    clutter = np.asarray(clutter, dtype=complex)
    if clutter.shape != (params.n,):
        raise ValueError(
            f"clutter length {clutter.shape} does not match n = {params.n}"
        )
    x = clutter.copy()
    for target_bin, alpha in targets:
        if int(target_bin) == int(bin):
            x += complex(alpha) * virtual_steering(bf, bin, params).v
    return CpiReturn(x=x, radar=int(radar), bin=int(bin), cpi=int(cpi))
