"""Log-mel spectrogram frontend for 16 kHz speech.

Frame length 25 ms, shift 10 ms, periodic Hann window, 512-point radix-2
FFT, 80 triangular mel filters between 0 and 8000 Hz, natural log with a
1e-10 floor. All functions are pure and safe to call from many threads.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
FRAME_LENGTH = 400   # 25 ms
FRAME_SHIFT = 160    # 10 ms
N_FFT = 512
N_MELS = 80
LOG_FLOOR = 1e-10

__all__ = [
    "SAMPLE_RATE", "FRAME_LENGTH", "FRAME_SHIFT", "N_FFT", "N_MELS", "LOG_FLOOR",
    "AudioBuffer", "MelSpectrogram", "hz_to_mel", "mel_to_hz", "fft",
    "mel_filterbank", "filter_center_frequencies", "log_mel",
    "read_wav", "write_wav", "FeatureNorm",
]


@dataclass
class AudioBuffer:
    """Mono waveform in [-1, 1] at 16 kHz."""

    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"AudioBuffer expects a 1-d sample array, got shape {self.samples.shape}")
        if self.sample_rate_hz != SAMPLE_RATE:
            raise ValueError(f"unsupported sample rate {self.sample_rate_hz} Hz (pipeline requires {SAMPLE_RATE})")
        if not np.isfinite(self.samples).all():
            raise ValueError("AudioBuffer contains non-finite samples")
        peak = np.abs(self.samples).max() if self.samples.size else 0.0
        if peak > 1.0 + 1e-9:
            raise ValueError(f"AudioBuffer samples exceed [-1, 1] (peak {peak:.4f})")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass
class MelSpectrogram:
    """num_frames x 80 matrix of natural-log mel energies."""

    frames: np.ndarray
    frame_shift_ms: int = 10
    frame_length_ms: int = 25

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != N_MELS:
            raise ValueError(f"MelSpectrogram frames must be (n, {N_MELS}), got shape {self.frames.shape}")
        if not np.isfinite(self.frames).all():
            raise ValueError("MelSpectrogram contains non-finite values")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def hz_to_mel(f: float) -> float:
    """Mel value of a frequency: 1127 * ln(1 + f/700)."""
    if np.any(np.asarray(f) < 0):
        raise ValueError(f"frequency must be nonnegative, got {f}")
    return 1127.0 * np.log1p(np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m) -> float:
    return 700.0 * np.expm1(np.asarray(m, dtype=np.float64) / 1127.0)


def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 Cooley-Tukey FFT over the last axis.

    Accepts a 1-d signal or a (batch, n) matrix; n must be a power of two.
    """
    a = np.asarray(x, dtype=np.complex128)
    squeeze = a.ndim == 1
    if squeeze:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError(f"fft expects a 1-d or 2-d array, got shape {x.shape}")
    n = a.shape[1]
    if n == 0 or (n & (n - 1)) != 0:
        raise ValueError(f"fft length must be a power of two, got {n}")
    a = a[:, _bit_reversal(n)].copy()
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(a.shape[0], n // size, size)
        even = blocks[:, :, :half].copy()
        odd = blocks[:, :, half:] * twiddle
        blocks[:, :, :half] = even + odd
        blocks[:, :, half:] = even - odd
        size *= 2
    return a[0] if squeeze else a


def mel_filterbank(n_filters: int = N_MELS, n_fft: int = N_FFT, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Triangular mel filterbank, (n_filters, n_fft//2 + 1).

    Corner frequencies are uniformly spaced on the mel scale between 0 Hz
    and sample_rate/2, then snapped to FFT bin indices. Snapped centers are
    bumped to be strictly increasing (at 80 filters / 16 kHz the low-end mel
    spacing is narrower than one 31.25 Hz bin), which guarantees every
    filter owns at least one bin and peaks at exactly 1 at its center bin.
    """
    if n_filters < 1:
        raise ValueError(f"n_filters must be >= 1, got {n_filters}")
    if n_fft < 2 or (n_fft & (n_fft - 1)) != 0:
        raise ValueError(f"n_fft must be a power of two, got {n_fft}")
    n_bins = n_fft // 2 + 1
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_filters + 2)
    hz_points = mel_to_hz(mel_points)
    bins = np.floor((n_fft + 1) * hz_points / sample_rate).astype(int)
    for i in range(1, len(bins)):
        bins[i] = max(bins[i], bins[i - 1] + 1)
    if bins[-1] > n_bins - 1:
        raise ValueError(f"cannot place {n_filters} distinct filters in {n_bins} FFT bins")

    fb = np.zeros((n_filters, n_bins))
    for i in range(1, n_filters + 1):
        lo, center, hi = bins[i - 1], bins[i], bins[i + 1]
        rising = np.arange(lo, center + 1)
        fb[i - 1, rising] = (rising - lo) / (center - lo)
        falling = np.arange(center, hi + 1)
        fb[i - 1, falling] = (hi - falling) / (hi - center)
    return fb


def filter_center_frequencies(fb: np.ndarray, n_fft: int = N_FFT, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Center frequency in Hz of each filter (bin of the peak response)."""
    return fb.argmax(axis=1) * (sample_rate / n_fft)


_HANN = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(FRAME_LENGTH) / FRAME_LENGTH)
_FILTERBANK = mel_filterbank()


def log_mel(audio: AudioBuffer) -> MelSpectrogram:
    """Waveform -> log-mel frames; errors if shorter than one 25 ms frame."""
    x = audio.samples
    if x.size < FRAME_LENGTH:
        raise ValueError(f"audio too short: {x.size} samples < one {FRAME_LENGTH}-sample frame")
    n_frames = 1 + (x.size - FRAME_LENGTH) // FRAME_SHIFT
    offsets = np.arange(n_frames) * FRAME_SHIFT
    frames = x[offsets[:, None] + np.arange(FRAME_LENGTH)] * _HANN
    padded = np.zeros((n_frames, N_FFT))
    padded[:, :FRAME_LENGTH] = frames
    spectrum = fft(padded)[:, :N_FFT // 2 + 1]
    power = spectrum.real ** 2 + spectrum.imag ** 2
    mel = power @ _FILTERBANK.T
    return MelSpectrogram(frames=np.log(np.maximum(mel, LOG_FLOOR)))


def read_wav(path) -> AudioBuffer:
    """Read a mono 16-bit PCM 16 kHz RIFF WAV file."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
        if wf.getframerate() != SAMPLE_RATE:
            raise ValueError(f"{path}: expected {SAMPLE_RATE} Hz, got {wf.getframerate()} Hz")
        raw = wf.readframes(wf.getnframes())
    ints = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(samples=ints.astype(np.float64) / 32768.0)


def write_wav(path, audio: AudioBuffer) -> None:
    ints = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate_hz)
        wf.writeframes(ints.tobytes())


@dataclass
class FeatureNorm:
    """Per-mel-bin standardization statistics estimated on a training split."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != (N_MELS,) or self.std.shape != (N_MELS,):
            raise ValueError("FeatureNorm statistics must have one entry per mel bin")

    @classmethod
    def fit(cls, mels: list[MelSpectrogram]) -> "FeatureNorm":
        if not mels:
            raise ValueError("cannot fit feature statistics on an empty split")
        stacked = np.concatenate([m.frames for m in mels], axis=0)
        return cls(mean=stacked.mean(axis=0), std=np.maximum(stacked.std(axis=0), 1e-8))

    def apply(self, mel: MelSpectrogram) -> MelSpectrogram:
        return MelSpectrogram(frames=(mel.frames - self.mean) / self.std)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureNorm":
        return cls(mean=np.asarray(d["mean"]), std=np.asarray(d["std"]))
