"""Synthetic waveform builders shared by the test modules."""

import math
import random


def sine_wave(freq_hz, rate_hz, duration_s, amplitude=1.0, offset=0.0):
    """Plain sinusoid sampled at t = i / rate."""
    n = round(duration_s * rate_hz)
    return [
        offset + amplitude * math.sin(2 * math.pi * freq_hz * i / rate_hz)
        for i in range(n)
    ]


def pulse_train(rate_hz, duration_s, period_s=1.0, width_s=0.1, amplitude=1.0):
    """Zero baseline with triangular pulses every period_s seconds.

    Pulse k crests at t = period_s * (k + 0.5); crest sample index is
    round(rate_hz * period_s * (k + 0.5)).
    """
    n = round(duration_s * rate_hz)
    half = width_s / 2.0
    out = [0.0] * n
    for i in range(n):
        t = i / rate_hz
        k = round((t - period_s / 2.0) / period_s)
        center = period_s * (k + 0.5)
        dist = abs(t - center)
        if dist < half:
            out[i] = amplitude * (1.0 - dist / half)
    return out


def triangular_pulse(n, center, half_width=5, amplitude=1.0):
    """Single triangular bump at `center` in an otherwise zero baseline."""
    out = [0.0] * n
    for k in range(-half_width, half_width + 1):
        out[center + k] = amplitude * (1.0 - abs(k) / (half_width + 1))
    return out


def noisy_heartbeat(rate_hz, duration_s, bpm=72.0, seed=7):
    """Pulse train with period jitter and baseline noise, deterministic per seed."""
    rng = random.Random(seed)
    n = round(duration_s * rate_hz)
    out = [rng.gauss(0.0, 0.02) for _ in range(n)]
    t = 0.35
    period = 60.0 / bpm
    while t < duration_s:
        center = round(t * rate_hz)
        for k in range(-4, 5):
            i = center + k
            if 0 <= i < n:
                out[i] += 1.0 - abs(k) / 5.0
        t += period * (1.0 + rng.uniform(-0.03, 0.03))
    return out
