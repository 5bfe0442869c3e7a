"""Rayleigh fading and additive white Gaussian noise.

Received symbols follow ``y = h * z + n`` with ``n ~ CN(0, noise_variance I)``.
Downstream rate formulas consume the power gain ``|h|**2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, UndefinedSNRError
from .rng import stream


@dataclass(frozen=True)
class ChannelRealization:
    gain: complex
    noise_variance: float = 1.0

    def __post_init__(self):
        if not self.noise_variance >= 0:
            raise InvalidParameterError("noise_variance must be >= 0")

    @property
    def power_gain(self) -> float:
        return float(abs(self.gain) ** 2)


@dataclass(frozen=True)
class SemanticSignal:
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128).reshape(-1)
        if vals.size == 0:
            raise InvalidParameterError("semantic signal must be non-empty")
        object.__setattr__(self, "values", vals)

    @property
    def length(self) -> int:
        return self.values.size

    def __len__(self):
        return self.values.size


def _complex_normal(rng: np.random.Generator, variance: float, size) -> np.ndarray:
    std = np.sqrt(variance / 2.0)
    return std * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def sample_rayleigh_gains(rng_seed: int, scale: float, size: int) -> np.ndarray:
    """Vector of i.i.d. ``CN(0, scale)`` gains from a single stream."""
    if not scale > 0:
        raise InvalidParameterError(f"scale must be positive, got {scale}")
    return _complex_normal(stream(rng_seed, "rayleigh"), scale, size)


def sample_rayleigh(rng_seed: int, scale: float = 1.0, noise_variance: float = 1.0) -> ChannelRealization:
    gain = sample_rayleigh_gains(rng_seed, scale, 1)[0]
    return ChannelRealization(gain=complex(gain), noise_variance=noise_variance)


def apply_awgn(signal: SemanticSignal, ch: ChannelRealization, rng_seed: int) -> SemanticSignal:
    if not isinstance(signal, SemanticSignal):
        signal = SemanticSignal(signal)
    x = signal.values
    out = ch.gain * x
    if ch.noise_variance > 0:
        out = out + _complex_normal(stream(rng_seed, "awgn"), ch.noise_variance, x.size)
    return SemanticSignal(out)


def snr_db(signal_power: float, ch: ChannelRealization) -> float:
    if not signal_power > 0:
        raise InvalidParameterError("signal_power must be positive")
    if ch.noise_variance == 0:
        raise UndefinedSNRError("SNR is undefined for a noiseless channel")
    return float(10.0 * np.log10(ch.power_gain * signal_power / ch.noise_variance))


def noise_variance_for_snr(snr: float, signal_power: float = 1.0) -> float:
    """Inverse of :func:`snr_db` at unit power gain."""
    return signal_power / 10.0 ** (snr / 10.0)


def transmit_real(features: np.ndarray, ch: ChannelRealization, rng: np.random.Generator,
                  equalize: bool = True) -> np.ndarray:
    """Send a real feature array through the channel.

    Consecutive pairs of real values ride on one complex symbol; the receiver
    divides by the known gain when ``equalize`` is set. Returns an array of
    the input shape.
    """
    flat = np.asarray(features, dtype=np.float64).reshape(-1)
    n = flat.size
    padded = np.concatenate([flat, np.zeros(n % 2)])
    symbols = padded[0::2] + 1j * padded[1::2]
    rx = ch.gain * symbols
    if ch.noise_variance > 0:
        rx = rx + _complex_normal(rng, ch.noise_variance, symbols.size)
    if equalize:
        rx = rx / ch.gain
    out = np.empty(padded.size)
    out[0::2] = rx.real
    out[1::2] = rx.imag
    return out[:n].reshape(np.shape(features))
