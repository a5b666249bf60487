"""
Narrowband mmWave channel model, ULA steering and DFT beam codebook.

Angles are measured from array broadside, elements are half a wavelength
apart, so the phase progression across the array is ``pi * n * sin(theta)``.
Elevation is carried on each path for completeness but a linear array does
not resolve it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError


@dataclass(frozen=True)
class ArrayConfig:
    num_antennas: int = 16
    num_beams: int = 64

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ParameterError(f"num_antennas must be >= 1, got {self.num_antennas}")
        if self.num_beams < self.num_antennas:
            raise ParameterError(
                f"num_beams ({self.num_beams}) must be >= num_antennas ({self.num_antennas})")


@dataclass(frozen=True)
class Path:
    gain: complex
    azimuth: float
    elevation: float = 0.0


@dataclass(frozen=True)
class PathSet:
    paths: tuple[Path, ...]

    def __post_init__(self):
        if len(self.paths) < 1:
            raise ParameterError("a PathSet needs at least one path")

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    @property
    def dominant(self) -> Path:
        return self.paths[0]


@dataclass
class ChannelRealization:
    h: np.ndarray
    paths: PathSet | None = None
    noise_var: float = 1.0
    tx_power: float = 1.0
    extra: dict = field(default_factory=dict)


def steering_vector(num_antennas: int, theta: float) -> np.ndarray:
    n = np.arange(num_antennas)
    return np.exp(1j * np.pi * n * np.sin(theta))


def dft_codebook(num_antennas: int, num_beams: int) -> np.ndarray:
    """Oversampled DFT codebook, ``W[n, m] = exp(j 2 pi n m / M) / sqrt(N)``.

    Beam ``m`` points at ``sin(theta) = 2 m / M`` (wrapped into [-1, 1)).
    """
    if num_beams < num_antennas:
        raise ParameterError(f"codebook needs M >= N, got M={num_beams}, N={num_antennas}")
    n = np.arange(num_antennas)[:, None]
    m = np.arange(num_beams)[None, :]
    return np.exp(2j * np.pi * n * m / num_beams) / np.sqrt(num_antennas)


def channel_realize(paths: PathSet, num_antennas: int, noise_var: float = 1.0,
                    tx_power: float = 1.0) -> ChannelRealization:
    h = np.zeros(num_antennas, dtype=complex)
    for p in paths.paths:
        h += p.gain * steering_vector(num_antennas, p.azimuth)
    return ChannelRealization(h=h, paths=paths, noise_var=noise_var, tx_power=tx_power)


def beam_gains(h: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    """``|h^H w_m|^2`` for every codebook column."""
    h = np.asarray(h)
    if h.ndim != 1 or codebook.ndim != 2 or codebook.shape[0] != h.shape[0]:
        raise DimensionError(f"beam_gains: channel {h.shape} vs codebook {codebook.shape}")
    return np.abs(h.conj() @ codebook) ** 2


def optimal_beam(h: np.ndarray, codebook: np.ndarray) -> int:
    """Exhaustive-search best beam; ``np.argmax`` resolves ties to the smallest index."""
    if codebook.shape[1] == 0:
        raise ParameterError("empty codebook")
    return int(np.argmax(beam_gains(h, codebook)))


def received_snr(h: np.ndarray, w: np.ndarray, tx_power: float, noise_var: float) -> float:
    if noise_var <= 0 or tx_power <= 0:
        raise ParameterError("tx_power and noise_var must be positive")
    return float(tx_power * np.abs(np.vdot(h, w)) ** 2 / noise_var)


def matched_filter_snr(h: np.ndarray, tx_power: float, noise_var: float) -> float:
    """Upper bound reached by ``w = h / ||h||``."""
    return float(tx_power * np.vdot(h, h).real / noise_var)
