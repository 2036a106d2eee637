"""
MFCC front end.

Audio is framed (25 ms window, 10 ms hop by default), each frame is
pre-emphasized and Hann-windowed, the power spectrum is pooled by a
triangular mel filterbank spanning 0 Hz to Nyquist, log-compressed with a
floor and decorrelated with an orthonormal DCT-II. The first ``n_coeffs``
cepstra are kept, c0 included.
"""

import wave
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .errors import DvecError


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64).ravel())
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise DvecError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class MfccConfig:
    """Front-end parameters.

    ``fft_size`` of ``None`` picks the smallest power of two holding one
    window. ``normalize`` applies per-utterance mean/variance normalization;
    ``energy_c0`` replaces c0 by the log frame energy. Both are off by default.
    """

    n_coeffs: int = 20
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mel_filters: int = 40
    fft_size: int | None = None
    preemphasis: float = 0.97
    log_floor: float = 1e-10
    normalize: bool = False
    energy_c0: bool = False

    def __post_init__(self):
        if self.window_ms <= 0 or self.hop_ms <= 0:
            raise DvecError("window_ms and hop_ms must be positive")
        if self.hop_ms > self.window_ms:
            raise DvecError("hop_ms must not exceed window_ms")
        if not 1 <= self.n_coeffs <= self.n_mel_filters:
            raise DvecError("need 1 <= n_coeffs <= n_mel_filters")
        if not 0.0 <= self.preemphasis < 1.0:
            raise DvecError("preemphasis must lie in [0, 1)")
        if self.log_floor <= 0:
            raise DvecError("log_floor must be positive")
        if self.fft_size is not None and self.fft_size & (self.fft_size - 1):
            raise DvecError("fft_size must be a power of two")

    def window_samples(self, sample_rate: int) -> int:
        return int(round(self.window_ms * sample_rate / 1000.0))

    def hop_samples(self, sample_rate: int) -> int:
        return int(round(self.hop_ms * sample_rate / 1000.0))

    def nfft(self, sample_rate: int) -> int:
        win = self.window_samples(sample_rate)
        if self.fft_size is None:
            return 1 << max(0, (win - 1).bit_length())
        if self.fft_size < win:
            raise DvecError(f"fft_size {self.fft_size} shorter than window ({win} samples)")
        return self.fft_size

    @property
    def frame_rate(self) -> float:
        return 1000.0 / self.hop_ms


@dataclass
class FeatureMatrix:
    frames: np.ndarray  # T x n_coeffs
    frame_rate: float = 100.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frames = np.atleast_2d(np.asarray(self.frames, dtype=np.float64))

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def width(self) -> int:
        return self.frames.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def n_frames(n_samples: int, window: int, hop: int) -> int:
    if n_samples < window:
        return 0
    return (n_samples - window) // hop + 1


def hann(n: int) -> np.ndarray:
    # periodic Hann, the usual choice for STFT analysis
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def mel_filterbank(n_filters: int, nfft: int, sample_rate: int):
    """Triangular filters on the mel scale, 0 Hz to Nyquist.

    Returns the (n_filters, nfft // 2 + 1) weight matrix and the filter
    center frequencies in Hz.
    """
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_filters + 2))
    bins = np.arange(nfft // 2 + 1) * sample_rate / nfft
    left, center, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins - left) / (center - left)
    falling = (right - bins) / (right - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    return weights, edges[1:-1]


def _check_clip(clip: AudioClip):
    if clip.samples.size == 0:
        raise DvecError("insufficient audio: empty clip")
    if not np.all(np.isfinite(clip.samples)):
        raise DvecError("invalid audio: non-finite samples")


def frame_signal(clip: AudioClip, config: MfccConfig = MfccConfig()) -> np.ndarray:
    """Split ``clip`` into pre-emphasized, Hann-windowed frames (T x W)."""
    _check_clip(clip)
    win = config.window_samples(clip.sample_rate)
    hop = config.hop_samples(clip.sample_rate)
    count = n_frames(clip.samples.size, win, hop)
    if count == 0:
        raise DvecError(
            f"insufficient audio: {clip.samples.size} samples, one window needs {win}"
        )
    idx = np.arange(win)[None, :] + hop * np.arange(count)[:, None]
    frames = clip.samples[idx]
    emphasized = frames.copy()
    emphasized[:, 1:] -= config.preemphasis * frames[:, :-1]
    return emphasized * hann(win)


def mel_energies(clip: AudioClip, config: MfccConfig = MfccConfig()) -> np.ndarray:
    frames = frame_signal(clip, config)
    nfft = config.nfft(clip.sample_rate)
    power = np.abs(np.fft.rfft(frames, n=nfft, axis=1)) ** 2
    weights, _ = mel_filterbank(config.n_mel_filters, nfft, clip.sample_rate)
    return power @ weights.T


def mfcc(clip: AudioClip, config: MfccConfig = MfccConfig(), return_mel: bool = False):
    """Compute MFCC frames for ``clip``.

    With ``return_mel=True`` the pre-log mel energies (T x n_mel_filters)
    are returned as well, as ``(features, mel)``.
    """
    mel = mel_energies(clip, config)
    log_mel = np.log(np.maximum(mel, config.log_floor))
    coeffs = dct(log_mel, type=2, norm="ortho", axis=1)[:, : config.n_coeffs]
    if config.energy_c0:
        frames = frame_signal(clip, config)
        coeffs[:, 0] = np.log(np.maximum(np.sum(frames**2, axis=1), config.log_floor))
    if config.normalize:
        std = coeffs.std(axis=0)
        coeffs = (coeffs - coeffs.mean(axis=0)) / np.where(std > 0, std, 1.0)
    feats = FeatureMatrix(coeffs, frame_rate=config.frame_rate)
    if return_mel:
        return feats, mel
    return feats


def extract_batch(clips: dict, config: MfccConfig = MfccConfig()) -> list:
    """MFCCs for a mapping ``utterance_id -> AudioClip``, ordered by id."""
    return [(uid, mfcc(clips[uid], config)) for uid in sorted(clips)]


def read_wav(path) -> AudioClip:
    """Read a 16-bit PCM mono WAV file into an AudioClip scaled to [-1, 1)."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise DvecError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise DvecError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples, rate)


def write_wav(path, clip: AudioClip) -> None:
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(pcm.tobytes())
