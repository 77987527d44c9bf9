"""WAV ingestion and frame-level spectral features (log mel filterbank, MFCC)."""
from __future__ import annotations

import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .errors import (
    AudioTooShortError,
    ChannelError,
    NotPCMError,
    SampleRateError,
    TruncatedWavError,
    WavError,
)

SAMPLE_RATE = 16000
PRE_EMPHASIS = 0.97
LOG_FLOOR = 1e-10
FEATURE_KINDS = ("fbank", "mfcc", "external", "embedding")

_WAVE_FORMAT_PCM = 1


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ValueError("audio samples must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __eq__(self, other):
        if not isinstance(other, AudioBuffer):
            return NotImplemented
        return (self.sample_rate == other.sample_rate
                and self.samples.tobytes() == other.samples.tobytes())

    __hash__ = None


@dataclass(frozen=True)
class FramingConfig:
    window_ms: float = 25.0
    shift_ms: float = 10.0
    n_mels: int = 64
    n_mfcc: int = 40

    def __post_init__(self):
        if not (self.window_ms >= self.shift_ms > 0):
            raise ValueError("need window_ms >= shift_ms > 0")
        if self.n_mels < 1 or self.n_mfcc < 1:
            raise ValueError("n_mels and n_mfcc must be positive")

    def window_samples(self, sample_rate: int = SAMPLE_RATE) -> int:
        return int(round(sample_rate * self.window_ms / 1000.0))

    def shift_samples(self, sample_rate: int = SAMPLE_RATE) -> int:
        return int(round(sample_rate * self.shift_ms / 1000.0))


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Time-major ``frames x dims`` feature sequence.

    Values are held as float32 (the on-disk scalar), so anything that has
    passed through a FeatureMatrix survives a file round trip bit for bit.
    Math downstream is done in float64.
    """

    data: np.ndarray
    shift_ms: float = 10.0
    window_ms: float = 25.0
    kind: str = "external"

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        if a.ndim != 2:
            raise ValueError(f"feature data must be 2-D, got shape {a.shape}")
        a = np.ascontiguousarray(a, dtype=np.float32)
        if not np.all(np.isfinite(a)):
            raise ValueError("feature matrix contains non-finite values")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        # metadata is stored as f32 on disk too
        object.__setattr__(self, "shift_ms", float(np.float32(self.shift_ms)))
        object.__setattr__(self, "window_ms", float(np.float32(self.window_ms)))

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.frames

    def slice(self, start: int, stop: int) -> FeatureMatrix:
        return self.with_data(self.data[start:stop])

    def with_data(self, data) -> FeatureMatrix:
        return FeatureMatrix(data, self.shift_ms, self.window_ms, self.kind)

    def __eq__(self, other):
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (self.kind == other.kind
                and self.shift_ms == other.shift_ms
                and self.window_ms == other.window_ms
                and self.data.shape == other.data.shape
                and self.data.tobytes() == other.data.tobytes())

    __hash__ = None


def load_wav(path) -> AudioBuffer:
    """Read a mono 16-bit PCM 16 kHz RIFF/WAVE file.

    Walks the chunk list directly so that each failure mode gets its own
    exception type instead of a generic parse error.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id, size = struct.unpack_from("<4sI", raw, pos)
        body = raw[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise TruncatedWavError(f"{path}: fmt chunk truncated")
            fmt = struct.unpack_from("<HHIIHH", body)
        elif chunk_id == b"data":
            if len(body) < size:
                raise TruncatedWavError(
                    f"{path}: data chunk declares {size} bytes, {len(body)} present")
            data = body
            break
        pos += 8 + size + (size & 1)

    if fmt is None:
        raise WavError(f"{path}: missing fmt chunk")
    if data is None:
        raise TruncatedWavError(f"{path}: missing data chunk")

    format_tag, channels, rate, _, block_align, bits = fmt
    if format_tag != _WAVE_FORMAT_PCM or bits != 16:
        raise NotPCMError(f"{path}: need 16-bit PCM, got format {format_tag} / {bits} bits")
    if channels != 1:
        raise ChannelError(f"{path}: need mono, got {channels} channels")
    if rate != SAMPLE_RATE:
        raise SampleRateError(f"{path}: need {SAMPLE_RATE} Hz, got {rate}")
    if len(data) % 2:
        raise TruncatedWavError(f"{path}: odd number of payload bytes")

    pcm = np.frombuffer(data, dtype="<i2")
    return AudioBuffer(pcm.astype(np.float64) / 32768.0, rate)


def write_wav(audio: AudioBuffer, path) -> None:
    pcm = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(audio.sample_rate)
        w.writeframes(pcm.tobytes())


def num_frames(n_samples: int, cfg: FramingConfig, sample_rate: int = SAMPLE_RATE) -> int:
    win = cfg.window_samples(sample_rate)
    if n_samples < win:
        return 0
    return 1 + (n_samples - win) // cfg.shift_samples(sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int = SAMPLE_RATE,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular filters on the HTK mel scale, shape ``(n_mels, n_fft//2 + 1)``.

    Triangles are evaluated at the FFT bin frequencies rather than snapped to
    bin indices, so narrow low-frequency bands never collapse onto one bin.
    """
    fmax = sample_rate / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def mel_center_frequencies(n_mels: int, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    return mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), n_mels + 2))[1:-1]


def _fft_size(window_samples: int) -> int:
    n = 1
    while n < window_samples:
        n *= 2
    return n


def _frames(audio: AudioBuffer, cfg: FramingConfig) -> np.ndarray:
    win = cfg.window_samples(audio.sample_rate)
    hop = cfg.shift_samples(audio.sample_rate)
    x = audio.samples
    if x.size < win:
        raise AudioTooShortError(
            f"audio has {x.size} samples, one window needs {win}")
    emphasized = np.append(x[0], x[1:] - PRE_EMPHASIS * x[:-1])
    n = 1 + (x.size - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(n)[:, None]
    return emphasized[idx] * np.hamming(win)


def _log_mel(audio: AudioBuffer, cfg: FramingConfig, n_mels: int) -> np.ndarray:
    frames = _frames(audio, cfg)
    n_fft = _fft_size(frames.shape[1])
    spectrum = np.abs(np.fft.rfft(frames, n=n_fft, axis=1))
    fb = mel_filterbank(n_mels, n_fft, audio.sample_rate)
    return np.log(np.maximum(spectrum @ fb.T, LOG_FLOOR))


def log_fbank(audio: AudioBuffer, cfg: FramingConfig = FramingConfig()) -> FeatureMatrix:
    """``T x n_mels`` log mel filterbank energies."""
    return FeatureMatrix(_log_mel(audio, cfg, cfg.n_mels), cfg.shift_ms, cfg.window_ms, "fbank")


def mfcc(audio: AudioBuffer, cfg: FramingConfig = FramingConfig()) -> FeatureMatrix:
    """``T x n_mfcc`` cepstra: orthonormal DCT-II of the log mel energies."""
    n_mels = max(cfg.n_mels, cfg.n_mfcc)
    cep = dct(_log_mel(audio, cfg, n_mels), type=2, axis=1, norm="ortho")
    return FeatureMatrix(cep[:, :cfg.n_mfcc], cfg.shift_ms, cfg.window_ms, "mfcc")


def extract(audio: AudioBuffer, kind: str, cfg: FramingConfig = FramingConfig()) -> FeatureMatrix:
    if kind == "fbank":
        return log_fbank(audio, cfg)
    if kind == "mfcc":
        return mfcc(audio, cfg)
    raise ValueError(f"cannot compute {kind!r} features from audio")
