"""
Synthetic extracellular recordings with known ground truth.

Three neurons fire as dead-time Poisson processes (no two events closer
than 66 samples). The background is a superposition of every template
convolved with Gaussian random gains, scaled to exactly σ_N. Artefacts
are attenuated templates cut short before or after their peak.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.signal import fftconvolve

from .config import (
    ARTEFACT_GAIN,
    MAX_TRUNCATION,
    MIN_EVENT_GAP,
    NEURON_COUNT,
    SEGMENT_LENGTH,
    TEMPLATE_LENGTH,
    TEMPLATE_PEAK,
    SyntheticConfig,
    TemplateBank,
)
from .recording import GroundTruthEvent, Recording

logger = logging.getLogger(__name__)


class EventRateError(ValueError):
    """Requested spike and artefact rates do not fit the minimum event gap."""


# (amplitude, trough width, recovery height, recovery delay, recovery width, pre-peak bump)
_SHAPES: Dict[TemplateBank, Tuple[Tuple[float, ...], ...]] = {
    TemplateBank.EASY: (
        (1.00, 2.0, 0.45, 7.0, 4.0, 0.00),
        (0.85, 3.5, 0.15, 12.0, 6.0, 0.25),
        (0.70, 1.5, 0.70, 5.0, 2.5, 0.00),
    ),
    TemplateBank.DIFFICULT: (
        (1.00, 2.0, 0.40, 7.0, 4.0, 0.05),
        (0.95, 2.3, 0.45, 8.0, 4.5, 0.05),
        (0.90, 2.6, 0.50, 9.0, 5.0, 0.05),
    ),
}


def _template(amplitude: float, width: float, recovery: float, delay: float, recovery_width: float, bump: float) -> np.ndarray:
    t = np.arange(TEMPLATE_LENGTH, dtype=np.float64)
    wave = -amplitude * np.exp(-(((t - TEMPLATE_PEAK) / width) ** 2))
    after = t > TEMPLATE_PEAK
    wave[after] += recovery * np.exp(-(((t[after] - TEMPLATE_PEAK - delay) / recovery_width) ** 2))
    before = t < TEMPLATE_PEAK
    wave[before] += bump * np.exp(-(((t[before] - TEMPLATE_PEAK + 5.0) / 2.0) ** 2))
    return wave


def template_bank(bank: TemplateBank = TemplateBank.EASY) -> np.ndarray:
    """(3, 48) mean waveforms, negative peak at index 14."""
    return np.stack([_template(*shape) for shape in _SHAPES[TemplateBank(bank)]])


# ──────────────────────────────────────────────────────────────────────────────
# Building blocks
# ──────────────────────────────────────────────────────────────────────────────


def place_events(rate_hz: float, n_samples: int, sample_rate: float, rng: np.random.Generator) -> np.ndarray:
    """Peak indices of a dead-time Poisson process; one window of margin at each end."""
    usable = n_samples - 2 * SEGMENT_LENGTH
    expected = rate_hz * n_samples / sample_rate
    if usable <= 0 or expected * MIN_EVENT_GAP > usable:
        raise EventRateError(
            f"{rate_hz:.1f} events/s need {expected * MIN_EVENT_GAP:.0f} samples, only {max(usable, 0)} usable"
        )
    count = int(rng.poisson(expected))
    slack = usable - count * MIN_EVENT_GAP
    if slack < 0:
        raise EventRateError(f"{count} events do not fit {usable} samples at a {MIN_EVENT_GAP}-sample gap")
    offsets = np.sort(rng.integers(0, slack + 1, size=count))
    return SEGMENT_LENGTH + offsets + np.arange(count) * MIN_EVENT_GAP


def background(templates: np.ndarray, sigma: float, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    if sigma == 0 or n_samples == 0:
        return np.zeros(n_samples)
    noise = np.zeros(n_samples)
    for template in templates:
        gains = rng.normal(size=n_samples)
        noise += fftconvolve(gains, template, mode="same")
    noise -= noise.mean()
    return noise * (sigma / noise.std())


def artefact_wave(templates: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Attenuated template cut to zero either after the trough or before reaching it."""
    wave = templates[rng.integers(len(templates))] * rng.uniform(*ARTEFACT_GAIN)
    cut = int(rng.integers(1, MAX_TRUNCATION + 1))
    wave = wave.copy()
    if rng.random() < 0.5:
        wave[TEMPLATE_PEAK + cut :] = 0.0          # incomplete repolarization
    else:
        wave[TEMPLATE_PEAK - cut + 1 :] = 0.0      # depolarization stops short of the trough
    return wave


def add_waveform(signal: np.ndarray, wave: np.ndarray, peak_index: int) -> None:
    start = peak_index - TEMPLATE_PEAK
    signal[start : start + len(wave)] += wave


# ──────────────────────────────────────────────────────────────────────────────
# Recording synthesis
# ──────────────────────────────────────────────────────────────────────────────


def _channel(
    cfg: SyntheticConfig, templates: np.ndarray, active: bool, channel: int, rng: np.random.Generator
) -> Tuple[np.ndarray, List[GroundTruthEvent]]:
    n = cfg.n_samples
    signal = background(templates, cfg.noise_sigma, n, rng)
    if not active:
        return signal, []
    neurons = min(NEURON_COUNT, len(templates))
    rates = np.array([cfg.spike_rate_hz] * neurons + [cfg.artefact_rate_hz])
    total = float(rates.sum())
    if total == 0:
        return signal, []
    times = place_events(total, n, cfg.sample_rate, rng)
    sources = rng.choice(len(rates), size=len(times), p=rates / total)
    events = []
    for time_index, source in zip(times, sources):
        if source == neurons:
            add_waveform(signal, artefact_wave(templates, rng), int(time_index))
            events.append(GroundTruthEvent(int(time_index), 0, True, channel))
        else:
            add_waveform(signal, templates[source], int(time_index))
            events.append(GroundTruthEvent(int(time_index), int(source) + 1, False, channel))
    return signal, events


def generate_synthetic(cfg: SyntheticConfig, templates: Optional[np.ndarray] = None) -> Recording:
    """Reproducible recording from ``cfg.seed``; the first ``active_channels``
    channels carry spikes, the rest are background only."""
    templates = template_bank(cfg.bank) if templates is None else np.asarray(templates, dtype=np.float64)
    if templates.ndim != 2 or templates.shape[0] < NEURON_COUNT or templates.shape[1] != TEMPLATE_LENGTH:
        raise ValueError(f"need at least {NEURON_COUNT} templates of {TEMPLATE_LENGTH} samples, got {templates.shape}")
    active = cfg.channels if cfg.active_channels is None else cfg.active_channels
    streams = np.random.default_rng(cfg.seed).spawn(cfg.channels)

    signals, events = [], []
    for channel, rng in enumerate(streams):
        signal, channel_events = _channel(cfg, templates, channel < active, channel, rng)
        signals.append(signal)
        events.extend(channel_events)
    recording = Recording(np.stack(signals), cfg.sample_rate, events, cfg.noise_sigma, cfg.name)
    logger.info(
        "synthesized %s: %d channels (%d active), %.1f s, %d spikes, %d artefacts",
        cfg.name, cfg.channels, active, cfg.duration_s, recording.spike_count(),
        sum(e.is_artefact for e in events),
    )
    return recording


__all__ = [
    "EventRateError",
    "add_waveform",
    "artefact_wave",
    "background",
    "generate_synthetic",
    "place_events",
    "template_bank",
]
