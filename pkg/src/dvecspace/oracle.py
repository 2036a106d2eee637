"""
Ground-truth generators.

``gen_space`` draws utterance embeddings as

    embedding = base[speaker] + alpha(n_words) * offset[language] + noise

with alpha(n) = min(1, n / attenuation_words), so short sentences sit
closer together across languages. All true parameters are returned next to
the records so tests can check recovered means and deltas against them.

``gen_audio`` renders harmonic tones shaped by per-speaker resonances, a
stand-in for recorded speech when training the encoder.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .encoder import Embedding
from .errors import DvecError
from .features import AudioClip
from .store import EmbeddingStore, UtteranceRecord


@dataclass(frozen=True)
class SpeakerSpec:
    speaker_id: str
    languages: tuple
    locales: tuple
    gender: str = ""


# Speakers of the 7-speaker English-Spanish corpus: one bilingual reference
# (voices 0 and 2) and six monolingual voices.
CORPUS_SPEAKERS = (
    SpeakerSpec("ref", ("en", "es"), ("US", "MX"), "M"),
    SpeakerSpec("v1", ("en",), ("US",), "F"),
    SpeakerSpec("v3", ("es",), ("MX",), "F"),
    SpeakerSpec("v4", ("en",), ("AU",), "M"),
    SpeakerSpec("v5", ("en",), ("AU",), "F"),
    SpeakerSpec("v6", ("es",), ("ES",), "M"),
    SpeakerSpec("v7", ("es",), ("ES",), "F"),
)

# Speakers shown in the 10-voice transfer plot: the reference, two English
# and two Spanish monolingual speakers.
PLOT_SPEAKERS = ("ref", "v1", "v4", "v3", "v6")


@dataclass(frozen=True)
class SpaceSpec:
    """Parameters of a synthetic embedding space.

    The default separation (6 noise standard deviations between the two
    language offsets) puts a two-class linear classifier on the bilingual
    speaker at roughly 99.5 % held-out accuracy: high, but short sentences
    keep it off 100 %.
    """

    speakers: tuple = CORPUS_SPEAKERS
    languages: tuple = ("en", "es")
    embedding_dim: int = 128
    speaker_sigma: float = 2.0
    utterance_sigma: float = 1.0
    language_separation: float = 6.0
    orthogonal_language: bool = True
    n_utterances: int = 400
    n_bilingual_utterances: int = 8350
    min_words: int = 3
    max_words: int = 15
    attenuation_words: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.embedding_dim < 2:
            raise DvecError("embedding_dim must be >= 2")
        if not (self.speaker_sigma > 0 and self.utterance_sigma > 0):
            raise DvecError("speaker_sigma and utterance_sigma must be positive")
        if len(set(self.languages)) != len(self.languages) or len(self.languages) < 2:
            raise DvecError("need at least two distinct languages")
        if self.language_separation < 0:
            raise DvecError("language_separation must be non-negative")
        if not 1 <= self.min_words <= self.max_words:
            raise DvecError("need 1 <= min_words <= max_words")
        if self.attenuation_words <= 0:
            raise DvecError("attenuation_words must be positive")
        if self.n_utterances < 1 or self.n_bilingual_utterances < 1:
            raise DvecError("utterance counts must be positive")
        ids = [s.speaker_id for s in self.speakers]
        if len(set(ids)) != len(ids):
            raise DvecError("speaker ids must be unique")
        for s in self.speakers:
            unknown = set(s.languages) - set(self.languages)
            if unknown or not s.languages or len(s.locales) != len(s.languages):
                raise DvecError(f"speaker {s.speaker_id}: bad languages/locales")

    @property
    def n_speakers(self) -> int:
        return len(self.speakers)

    def attenuation(self, n_words):
        return np.minimum(1.0, np.asarray(n_words, dtype=np.float64) / self.attenuation_words)

    def mean_attenuation(self) -> float:
        words = np.arange(self.min_words, self.max_words + 1)
        return float(np.mean(self.attenuation(words)))


@dataclass
class SpaceTruth:
    spec: SpaceSpec
    bases: dict = field(default_factory=dict)
    offsets: dict = field(default_factory=dict)

    def long_mean(self, speaker_id, language) -> np.ndarray:
        return self.bases[speaker_id] + self.offsets[language]

    def cluster_mean(self, speaker_id, language) -> np.ndarray:
        """Expected cluster mean under the word-count distribution."""
        return self.bases[speaker_id] + self.spec.mean_attenuation() * self.offsets[language]

    def delta(self, source, target) -> np.ndarray:
        return self.spec.mean_attenuation() * (self.offsets[target] - self.offsets[source])

    def to_json(self) -> dict:
        spec = asdict(self.spec)
        spec["speakers"] = [asdict(s) for s in self.spec.speakers]
        return {
            "spec": spec,
            "bases": {k: v.tolist() for k, v in self.bases.items()},
            "offsets": {k: v.tolist() for k, v in self.offsets.items()},
        }


def _language_offsets(spec, rng):
    g = rng.standard_normal((len(spec.languages), spec.embedding_dim))
    g -= g.mean(axis=0)
    diffs = [np.linalg.norm(g[i] - g[j]) for i in range(len(g)) for j in range(i + 1, len(g))]
    g *= spec.language_separation / np.mean(diffs)
    return {lang: g[i] for i, lang in enumerate(spec.languages)}


def gen_space(spec: SpaceSpec = SpaceSpec()):
    """Draw a synthetic store; returns ``(store, truth)``. Deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    offsets = _language_offsets(spec, rng)
    O = np.vstack(list(offsets.values())).T
    q, _ = np.linalg.qr(O)
    q = q[:, : np.linalg.matrix_rank(O)] if np.any(O) else q[:, :0]
    bases = {}
    for s in spec.speakers:
        b = spec.speaker_sigma * rng.standard_normal(spec.embedding_dim)
        if spec.orthogonal_language:
            b = b - q @ (q.T @ b)
        bases[s.speaker_id] = b
    truth = SpaceTruth(spec, bases, offsets)

    records = []
    for s in spec.speakers:
        n = spec.n_bilingual_utterances if len(s.languages) > 1 else spec.n_utterances
        for lang, locale in zip(s.languages, s.locales):
            words = rng.integers(spec.min_words, spec.max_words + 1, size=n)
            alpha = spec.attenuation(words)
            noise = spec.utterance_sigma * rng.standard_normal((n, spec.embedding_dim))
            X = (bases[s.speaker_id] + alpha[:, None] * offsets[lang]) + noise
            for k in range(n):
                records.append(UtteranceRecord(
                    utterance_id=f"{s.speaker_id}-{lang}-{k:05d}",
                    speaker_id=s.speaker_id,
                    language=lang,
                    locale=locale,
                    n_words=int(words[k]),
                    embedding=Embedding(X[k], normalized=False),
                    gender=s.gender or None,
                ))
    return EmbeddingStore(records), truth


@dataclass(frozen=True)
class AudioSpec:
    """Toy multi-speaker audio.

    ``formants`` and ``f0s`` may pin per-speaker resonance centers (Hz) and
    fundamentals; otherwise both are drawn from the seed.
    """

    n_speakers: int = 8
    utterances_per_speaker: int = 24
    duration_range: tuple = (0.5, 1.0)
    sample_rate: int = 16000
    f0_range: tuple = (90.0, 260.0)
    formants: tuple | None = None
    f0s: tuple | None = None
    bandwidth: float = 150.0
    noise_level: float = 0.01
    window_ms: float = 25.0
    seed: int = 0

    def __post_init__(self):
        if self.n_speakers < 1 or self.utterances_per_speaker < 1:
            raise DvecError("n_speakers and utterances_per_speaker must be positive")
        lo, hi = self.duration_range
        if not 0 < lo <= hi:
            raise DvecError("duration_range must satisfy 0 < min <= max")
        if lo * 1000.0 < self.window_ms:
            raise DvecError(f"durations must cover one {self.window_ms} ms analysis window")
        nyquist = self.sample_rate / 2.0
        if self.f0_range[1] >= nyquist:
            raise DvecError("f0 range must lie below Nyquist")
        if self.formants is not None:
            if len(self.formants) != self.n_speakers:
                raise DvecError("need one formant tuple per speaker")
            if max(max(f) for f in self.formants) >= nyquist:
                raise DvecError("formants must lie below Nyquist")
        if self.f0s is not None and len(self.f0s) != self.n_speakers:
            raise DvecError("need one f0 per speaker")


def _voice_params(spec, rng):
    voices = []
    for s in range(spec.n_speakers):
        f0 = rng.uniform(*spec.f0_range)
        formants = np.array([rng.uniform(300, 900), rng.uniform(1000, 2400),
                             rng.uniform(2500, 3800)])
        if spec.f0s is not None:
            f0 = float(spec.f0s[s])
        if spec.formants is not None:
            formants = np.asarray(spec.formants[s], dtype=np.float64)
        voices.append((f0, formants))
    return voices


def _render(f0, formants, duration, spec, rng):
    sr = spec.sample_rate
    t = np.arange(int(round(duration * sr))) / sr
    f0 = f0 * (1.0 + 0.04 * rng.uniform(-1, 1))
    glide = 1.0 + 0.05 * rng.uniform(-1, 1) * t / max(duration, 1e-9)
    centers = formants * (1.0 + 0.03 * rng.uniform(-1, 1, size=formants.size))
    n_harm = int((sr / 2.0) // (f0 * 1.06))
    k = np.arange(1, n_harm + 1)
    gains = np.exp(-0.5 * ((k[:, None] * f0 - centers[None, :]) / spec.bandwidth) ** 2).sum(1)
    gains = gains + 0.02
    phases = rng.uniform(0, 2 * np.pi, size=n_harm)
    phase_t = 2 * np.pi * f0 * np.cumsum(glide) / sr
    x = (gains[:, None] * np.sin(k[:, None] * phase_t[None, :] + phases[:, None])).sum(0)
    x *= rng.uniform(0.3, 0.8) / np.max(np.abs(x))
    x += spec.noise_level * rng.standard_normal(t.size)
    return np.clip(x, -1.0, 1.0)


def gen_audio(spec: AudioSpec = AudioSpec()) -> list:
    """Render ``utterances_per_speaker`` clips per speaker: ``[(clip, label)]``."""
    rng = np.random.default_rng(spec.seed)
    voices = _voice_params(spec, rng)
    out = []
    for label, (f0, formants) in enumerate(voices):
        for _ in range(spec.utterances_per_speaker):
            duration = rng.uniform(*spec.duration_range)
            samples = _render(f0, formants, duration, spec, rng)
            out.append((AudioClip(samples, spec.sample_rate), label))
    return out
