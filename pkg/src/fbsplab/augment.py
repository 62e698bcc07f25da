"""Waveform augmentation: time scaling, inversion, duration fitting.

All randomness flows through one generator seeded from the config, so a
pipeline run is a pure function of (waveform, config).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fbsplab.signals import Waveform

__all__ = [
    "AugmentConfig",
    "time_scale",
    "time_invert",
    "fit_duration",
    "draw_scale_factor",
    "augment_pipeline",
]


@dataclass(frozen=True)
class AugmentConfig:
    """Pipeline settings.

    The scale factor is 2**u with u drawn uniformly from
    scale_exponent_range, so the default range [-1.5, 1.5] covers slowdowns
    and speedups symmetrically without degenerate factors.
    """

    target_duration: float
    scale_exponent_range: tuple[float, float] = (-1.5, 1.5)
    invert_prob: float = 0.5
    seed: int = 0
    eval_mode: bool = False

    def __post_init__(self) -> None:
        if not (math.isfinite(self.target_duration) and self.target_duration > 0):
            raise ValueError(f"target_duration must be positive, got {self.target_duration}")
        lo, hi = self.scale_exponent_range
        if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
            raise ValueError(
                f"scale_exponent_range must be finite with lo <= hi, got {(lo, hi)}")
        if not 0.0 <= self.invert_prob <= 1.0:
            raise ValueError(f"invert_prob must be in [0, 1], got {self.invert_prob}")


def time_scale(signal: Waveform, factor: float) -> Waveform:
    """Resample by linear interpolation; factor > 1 compresses (speeds up).

    Output length is round(len / factor) and sample j reads position
    j * factor of the input. factor == 1 returns the samples bit-identically.
    """
    if not (math.isfinite(factor) and factor > 0):
        raise ValueError(f"scale factor must be positive and finite, got {factor}")
    if factor == 1.0:
        return Waveform(signal.samples, signal.sample_rate)
    out_len = int(round(len(signal) / factor))
    if out_len < 1:
        raise ValueError(
            f"scaling {len(signal)} samples by {factor} leaves no samples")
    positions = np.arange(out_len) * factor
    resampled = np.interp(positions, np.arange(len(signal)), signal.samples)
    return Waveform(resampled, signal.sample_rate)


def time_invert(signal: Waveform) -> Waveform:
    """Reverse the samples. Involution: applying twice is the identity."""
    return Waveform(signal.samples[::-1], signal.sample_rate)


def fit_duration(
    signal: Waveform,
    target_duration: float,
    rng: np.random.Generator | None = None,
) -> Waveform:
    """Crop or zero-pad to exactly round(target_duration * sample_rate) samples.

    With an rng, crop offset and pad split are drawn uniformly; without one,
    the crop is centered and padding splits evenly (deterministic eval path).
    """
    if not (math.isfinite(target_duration) and target_duration > 0):
        raise ValueError(f"target_duration must be positive, got {target_duration}")
    target = int(round(target_duration * signal.sample_rate))
    if target < 1:
        raise ValueError(
            f"target duration {target_duration} is shorter than one sample")
    n = len(signal)
    if n == target:
        return Waveform(signal.samples, signal.sample_rate)
    if n > target:
        slack = n - target
        offset = int(rng.integers(0, slack + 1)) if rng is not None else slack // 2
        return Waveform(signal.samples[offset:offset + target], signal.sample_rate)
    total = target - n
    left = int(rng.integers(0, total + 1)) if rng is not None else total // 2
    padded = np.zeros(target)
    padded[left:left + n] = signal.samples
    return Waveform(padded, signal.sample_rate)


def draw_scale_factor(rng: np.random.Generator,
                      exponent_range: tuple[float, float] = (-1.5, 1.5)) -> float:
    """Scale factor 2**u, u uniform over the exponent range."""
    return float(2.0 ** rng.uniform(*exponent_range))


def augment_pipeline(signal: Waveform, config: AugmentConfig) -> Waveform:
    """Scale, maybe invert, then fit duration, off one seeded generator.

    eval_mode skips the random stages and center-fits the duration, giving a
    deterministic view of the same clip.
    """
    if config.eval_mode:
        return fit_duration(signal, config.target_duration)
    rng = np.random.default_rng(config.seed)
    factor = draw_scale_factor(rng, config.scale_exponent_range)
    out = time_scale(signal, factor)
    if rng.uniform() < config.invert_prob:
        out = time_invert(out)
    return fit_duration(out, config.target_duration, rng)
