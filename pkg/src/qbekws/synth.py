"""Seeded synthetic corpus: tone-complex "keywords" and noisy filler speech.

A keyword is a fixed sequence of harmonic syllables. Each rendition jitters
syllable durations, pitch and level, and adds background noise, so no two
renditions are identical. Fillers are noise plus random distractor
syllables drawn from a pitch range disjoint from the keyword's.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import SAMPLE_RATE, AudioBuffer

# (f0 Hz, duration s) per keyword syllable
KEYWORD_SYLLABLES = ((220.0, 0.16), (330.0, 0.12), (165.0, 0.20), (262.0, 0.14))


def syllable(f0: float, duration: float, rng: np.random.Generator, *,
             timbre=(1.0, 0.6, 0.35, 0.2, 0.1), glide: float = 0.0,
             sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    n = int(duration * sample_rate)
    t = np.arange(n) / sample_rate
    freq = f0 * (1.0 + glide * t / max(duration, 1e-9))
    phase = 2 * np.pi * np.cumsum(freq) / sample_rate
    x = sum(a * np.sin((h + 1) * phase + rng.uniform(0, 2 * np.pi))
            for h, a in enumerate(timbre))
    env = np.sqrt(np.clip(np.sin(np.pi * np.arange(n) / max(n - 1, 1)), 0.0, 1.0))
    return x * env / sum(timbre)


def keyword_rendition(rng: np.random.Generator, syllables=KEYWORD_SYLLABLES, *,
                      noise: float = 0.01, jitter: float = 0.06,
                      sample_rate: int = SAMPLE_RATE) -> AudioBuffer:
    parts = []
    gain = 0.5 * rng.uniform(0.8, 1.2)
    for f0, dur in syllables:
        d = dur * rng.uniform(1 - jitter, 1 + jitter)
        f = f0 * rng.uniform(1 - jitter / 3, 1 + jitter / 3)
        parts.append(gain * syllable(f, d, rng, sample_rate=sample_rate))
        parts.append(np.zeros(int(rng.uniform(0.01, 0.03) * sample_rate)))
    x = np.concatenate(parts)
    x = x + noise * rng.standard_normal(x.size)
    return AudioBuffer(np.clip(x, -1, 1), sample_rate)


def filler(rng: np.random.Generator, duration: float | None = None, *, noise: float = 0.01,
           f0_range=(420.0, 700.0), sample_rate: int = SAMPLE_RATE) -> AudioBuffer:
    """Noise with a few distractor syllables whose pitch lies outside the keyword range."""
    duration = rng.uniform(0.6, 1.2) if duration is None else duration
    n = int(duration * sample_rate)
    x = noise * rng.standard_normal(n)
    for _ in range(int(rng.integers(1, 4))):
        s = 0.4 * syllable(rng.uniform(*f0_range), rng.uniform(0.08, 0.2), rng,
                           timbre=(1.0, 0.3, 0.1), glide=rng.uniform(-0.2, 0.2),
                           sample_rate=sample_rate)
        if s.size >= n:
            continue
        at = int(rng.integers(0, n - s.size))
        x[at:at + s.size] += s
    return AudioBuffer(np.clip(x, -1, 1), sample_rate)


@dataclass
class SyntheticCorpus:
    enrollment: list  # keyword renditions used to enroll
    keywords: list    # held-out renditions for dev positives
    fillers: list     # keyword-free material
    seed: int


def make_corpus(seed: int = 0, n_enroll: int = 5, n_keywords: int = 20,
                n_fillers: int = 20) -> SyntheticCorpus:
    rng = np.random.default_rng(seed)
    enrollment = [keyword_rendition(rng) for _ in range(n_enroll)]
    keywords = [keyword_rendition(rng) for _ in range(n_keywords)]
    fillers = [filler(rng) for _ in range(n_fillers)]
    return SyntheticCorpus(enrollment, keywords, fillers, seed)
