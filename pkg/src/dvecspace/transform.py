"""
Cross-lingual translation of speaker embeddings.

A bilingual reference speaker r has cluster means mu_r[A] and mu_r[B].
The language-pair delta is ``delta_A2B = mu_r[B] - mu_r[A]``, and a
monolingual speaker's mean is carried into language B by

    mu_x[B] = mu_x[A] + epsilon * delta_A2B,   0 <= epsilon <= 1

where epsilon sets how much of the shift (and so how little native accent)
is applied. With this sign convention epsilon = 1 maps mu_r[A] onto mu_r[B].
"""

from dataclasses import dataclass, field

import numpy as np

from .analysis import LdaModel, cosine_similarity
from .container import StreamTag, read_container, write_container
from .encoder import Embedding
from .errors import ContainerError, DvecError
from .store import EmbeddingStore, SpeakerProfile, build_profiles


@dataclass
class TranslationDelta:
    source_language: str
    target_language: str
    delta: np.ndarray
    reference_speaker_id: str = ""
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.float64).ravel()
        if self.source_language == self.target_language:
            raise DvecError("source and target languages must differ")
        if not np.all(np.isfinite(self.delta)):
            raise DvecError("delta has non-finite entries")

    @property
    def dim(self) -> int:
        return self.delta.size

    def reversed(self) -> "TranslationDelta":
        return TranslationDelta(self.target_language, self.source_language, -self.delta,
                                self.reference_speaker_id, dict(self.counts))

    def oriented(self, source, target) -> "TranslationDelta":
        if (source, target) == (self.source_language, self.target_language):
            return self
        if (source, target) == (self.target_language, self.source_language):
            return self.reversed()
        raise DvecError(f"delta is for {self.source_language}->{self.target_language}, "
                        f"not {source}->{target}")


@dataclass(frozen=True)
class AccentSetting:
    epsilon: float = 1.0
    allow_extrapolation: bool = False

    def __post_init__(self):
        if not np.isfinite(self.epsilon):
            raise DvecError("epsilon must be finite")
        if not self.allow_extrapolation and not 0.0 <= self.epsilon <= 1.0:
            raise DvecError(f"epsilon {self.epsilon} outside [0, 1]; pass "
                            "allow_extrapolation=True to extrapolate")


def compute_delta(profile: SpeakerProfile, lang_a, lang_b) -> TranslationDelta:
    """Shift taking the reference speaker's ``lang_a`` mean to its ``lang_b`` mean."""
    if lang_a not in profile.clusters or lang_b not in profile.clusters:
        raise DvecError(f"reference not bilingual in requested pair ({lang_a}, {lang_b}): "
                        f"speaker {profile.speaker_id!r} has {profile.languages}")
    mu_a = profile.clusters[lang_a].mean.values
    mu_b = profile.clusters[lang_b].mean.values
    if mu_a.shape != mu_b.shape:
        raise DvecError("language means differ in dimension")
    counts = {lang_a: profile.clusters[lang_a].count, lang_b: profile.clusters[lang_b].count}
    return TranslationDelta(lang_a, lang_b, mu_b - mu_a, profile.speaker_id, counts)


def _accent(accent) -> AccentSetting:
    return accent if isinstance(accent, AccentSetting) else AccentSetting(float(accent))


def translate(embedding, delta: TranslationDelta, accent=1.0, normalize=False) -> Embedding:
    """``embedding + epsilon * delta``; not re-normalized unless asked."""
    setting = _accent(accent)
    x = np.asarray(embedding, dtype=np.float64).ravel()
    if x.size != delta.dim:
        raise DvecError(f"dimension mismatch: embedding {x.size}, delta {delta.dim}")
    out = x.copy() if setting.epsilon == 0 else x + setting.epsilon * delta.delta
    if normalize:
        norm = np.linalg.norm(out)
        if norm == 0:
            raise DvecError("cannot normalize a zero vector")
        return Embedding(out / norm, normalized=True)
    return Embedding(out, normalized=False)


def accent_sweep(embedding, delta: TranslationDelta, epsilons, allow_extrapolation=False) -> list:
    return [translate(embedding, delta, AccentSetting(float(e), allow_extrapolation))
            for e in epsilons]


def transfer_report(store: EmbeddingStore, delta: TranslationDelta, lda: LdaModel,
                    accent=1.0, profiles=None) -> dict:
    """Translate every monolingual speaker's mean into the other language of
    the pair and check it.

    Per speaker: the LDA label and signed score toward the target language,
    cosine similarity between the original and translated mean, and the
    rank of the speaker's own original mean among all original means when
    ordered by distance to the translated mean (1 = identity preserved).
    """
    setting = _accent(accent)
    pair = (delta.source_language, delta.target_language)
    if set(lda.classes) != set(pair):
        raise DvecError(f"LDA classes {lda.classes} do not match delta languages {pair}")
    profiles = build_profiles(store) if profiles is None else profiles
    originals = [(p.speaker_id, lang, p.clusters[lang].mean.values)
                 for p in profiles for lang in p.languages]
    orig_ids = [s for s, _, _ in originals]
    orig_X = np.vstack([v for _, _, v in originals])
    entries = []
    for p in profiles:
        if len(p.languages) != 1 or p.languages[0] not in pair:
            continue
        src = p.languages[0]
        tgt = pair[1] if src == pair[0] else pair[0]
        mean = p.clusters[src].mean.values
        moved = translate(mean, delta.oriented(src, tgt), setting).values
        label = lda.predict(moved)[0]
        score = float(lda.score_toward(moved, tgt)[0])
        dist = np.linalg.norm(orig_X - moved, axis=1)
        per_speaker = {}
        for sid, d in zip(orig_ids, dist):
            per_speaker[sid] = min(d, per_speaker.get(sid, np.inf))
        ranking = sorted(per_speaker, key=lambda s: (per_speaker[s], s))
        try:
            cos = cosine_similarity(mean, moved)
        except DvecError:
            cos = None
        entries.append({
            "speaker_id": p.speaker_id,
            "source_language": src,
            "target_language": tgt,
            "lda_label": str(label),
            "lda_score_toward_target": score,
            "is_target": str(label) == tgt,
            "cosine_to_original": cos,
            "nearest_speaker": ranking[0],
            "identity_rank": ranking.index(p.speaker_id) + 1,
        })
    n = len(entries)
    return {
        "source_language": delta.source_language,
        "target_language": delta.target_language,
        "reference_speaker_id": delta.reference_speaker_id,
        "epsilon": setting.epsilon,
        "speakers": entries,
        "fraction_target": sum(e["is_target"] for e in entries) / n if n else None,
        "fraction_identity_preserved": (
            sum(e["identity_rank"] == 1 for e in entries) / n if n else None),
    }


def transfer_voices(store: EmbeddingStore, delta: TranslationDelta, speakers,
                    per_voice=100, seed=0):
    """Utterance-level point set for the two-languages-per-speaker plot.

    Bilingual speakers contribute their own utterances in both languages.
    A monolingual speaker contributes native utterances plus a disjoint
    draw of native utterances translated by the full delta, standing in for
    speech synthesized in the other language. Returns ``(X, voice_labels,
    speaker_of)`` with voice labels like ``"v1/en"`` and ``"v1/es*"`` (the
    star marks a translated voice).
    """
    rng = np.random.default_rng(seed)
    pair = (delta.source_language, delta.target_language)
    rows, labels, speaker_of = [], [], {}

    def sample(recs, k):
        idx = rng.permutation(len(recs))[:k]
        return [recs[i] for i in sorted(idx)]

    for spk in speakers:
        recs = [r for r in store if r.speaker_id == spk and r.language in pair]
        langs = sorted({r.language for r in recs})
        if not langs:
            raise DvecError(f"speaker {spk!r} has no utterances in {pair}")
        if len(langs) == 2:
            for lang in langs:
                chosen = sample([r for r in recs if r.language == lang], per_voice)
                rows += [r.embedding.values for r in chosen]
                labels += [f"{spk}/{lang}"] * len(chosen)
                speaker_of[f"{spk}/{lang}"] = spk
            continue
        src = langs[0]
        tgt = pair[1] if src == pair[0] else pair[0]
        shift = delta.oriented(src, tgt)
        order = rng.permutation(len(recs))
        native = [recs[i] for i in sorted(order[:per_voice])]
        moved = [recs[i] for i in sorted(order[per_voice: 2 * per_voice])]
        if not moved:
            moved = native
        rows += [r.embedding.values for r in native]
        labels += [f"{spk}/{src}"] * len(native)
        rows += [translate(r.embedding, shift, 1.0).values for r in moved]
        labels += [f"{spk}/{tgt}*"] * len(moved)
        speaker_of[f"{spk}/{src}"] = spk
        speaker_of[f"{spk}/{tgt}*"] = spk
    return np.vstack(rows), np.array(labels), speaker_of


def save_delta(delta: TranslationDelta, path, header=None) -> None:
    head = {
        "kind": "delta",
        "source_language": delta.source_language,
        "target_language": delta.target_language,
        "reference_speaker_id": delta.reference_speaker_id,
        "counts": delta.counts,
    }
    head.update(header or {})
    write_container(path, StreamTag.EMBEDDING, delta.delta[None, :], head, [])


def load_delta(path) -> TranslationDelta:
    box = read_container(path)
    if box.header.get("kind") != "delta" or box.data.shape[0] != 1:
        raise ContainerError(f"unsupported container: {path} does not hold a delta")
    h = box.header
    return TranslationDelta(h["source_language"], h["target_language"], box.data[0].copy(),
                            h.get("reference_speaker_id", ""), dict(h.get("counts", {})))
