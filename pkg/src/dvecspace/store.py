"""Utterance metadata, embeddings and speaker profiles, with JSON-lines
manifests, DVEC containers and CSV export."""

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .container import (
    StreamTag,
    atomic_write_bytes,
    dumps_json,
    read_container,
    write_container,
)
from .encoder import Embedding, mean_embedding
from .errors import ContainerError, DvecError
from .features import FeatureMatrix

_REQUIRED = ("utterance_id", "speaker_id", "language", "locale", "n_words")


@dataclass(eq=False)
class UtteranceRecord:
    utterance_id: str
    speaker_id: str
    language: str
    locale: str = ""
    n_words: int = 1
    embedding: Embedding | None = None
    source: str | None = None
    gender: str | None = None

    def __post_init__(self):
        if not self.utterance_id:
            raise DvecError("utterance_id must be non-empty")
        if not self.language:
            raise DvecError(f"{self.utterance_id}: language must be non-empty")
        if int(self.n_words) != self.n_words or self.n_words < 1:
            raise DvecError(f"{self.utterance_id}: n_words must be an integer >= 1")
        self.n_words = int(self.n_words)
        if self.embedding is not None and not isinstance(self.embedding, Embedding):
            self.embedding = Embedding(self.embedding)

    def meta(self) -> dict:
        out = {k: getattr(self, k) for k in _REQUIRED}
        for k in ("source", "gender"):
            if getattr(self, k) is not None:
                out[k] = getattr(self, k)
        return out

    def to_json(self) -> dict:
        out = self.meta()
        if self.embedding is not None:
            out["embedding"] = self.embedding.values.tolist()
            if self.embedding.normalized:
                out["normalized"] = True
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "UtteranceRecord":
        missing = [k for k in ("utterance_id", "speaker_id", "language") if k not in obj]
        if missing:
            raise DvecError(f"missing field(s) {missing}")
        emb = obj.get("embedding")
        if emb is not None:
            emb = Embedding(emb, normalized=bool(obj.get("normalized", False)))
            if not np.all(np.isfinite(emb.values)):
                raise DvecError("embedding has non-finite entries")
        return cls(
            utterance_id=str(obj["utterance_id"]),
            speaker_id=str(obj["speaker_id"]),
            language=str(obj["language"]),
            locale=str(obj.get("locale", "")),
            n_words=obj.get("n_words", 1),
            embedding=emb,
            source=obj.get("source"),
            gender=obj.get("gender"),
        )

    def __eq__(self, other):
        if not isinstance(other, UtteranceRecord):
            return NotImplemented
        return self.meta() == other.meta() and self.embedding == other.embedding


class EmbeddingStore:
    """An immutable, id-unique collection of utterance records."""

    def __init__(self, records=()):
        self._records = tuple(records)
        seen = set()
        for rec in self._records:
            if rec.utterance_id in seen:
                raise DvecError(f"duplicate id: {rec.utterance_id}")
            seen.add(rec.utterance_id)
        self._index = {rec.utterance_id: i for i, rec in enumerate(self._records)}

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __getitem__(self, utterance_id) -> UtteranceRecord:
        return self._records[self._index[utterance_id]]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return len(self) == len(other) and all(a == b for a, b in zip(self, other))

    @property
    def records(self):
        return self._records

    def speakers(self) -> list:
        return sorted({r.speaker_id for r in self._records})

    def languages(self, speaker_id=None) -> list:
        return sorted({r.language for r in self._records
                       if speaker_id is None or r.speaker_id == speaker_id})

    def voices(self) -> list:
        """Distinct (speaker_id, language) pairs."""
        return sorted({(r.speaker_id, r.language) for r in self._records})

    def bilingual_speakers(self) -> list:
        return [s for s in self.speakers() if len(self.languages(s)) >= 2]

    def select(self, predicate) -> "EmbeddingStore":
        return EmbeddingStore(r for r in self._records if predicate(r))

    def matrix(self, records=None) -> np.ndarray:
        recs = self._records if records is None else records
        missing = [r.utterance_id for r in recs if r.embedding is None]
        if missing:
            raise DvecError(f"missing embedding: {missing[0]}")
        if not recs:
            return np.zeros((0, 0))
        return np.vstack([r.embedding.values for r in recs])


@dataclass
class LanguageCluster:
    mean: Embedding
    count: int
    dispersion: float  # mean cosine similarity of members to the cluster mean


@dataclass
class SpeakerProfile:
    speaker_id: str
    clusters: dict = field(default_factory=dict)  # language -> LanguageCluster

    @property
    def languages(self) -> list:
        return sorted(self.clusters)

    def mean(self, language) -> Embedding:
        return self.clusters[language].mean


# -- manifests ------------------------------------------------------------

def parse_manifest(text: str, origin="<manifest>") -> EmbeddingStore:
    records, seen = [], set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise DvecError("expected a JSON object")
            rec = UtteranceRecord.from_json(obj)
        except (json.JSONDecodeError, DvecError, TypeError, ValueError) as exc:
            raise DvecError(f"{origin}:{lineno}: malformed record: {exc}") from None
        if rec.utterance_id in seen:
            raise DvecError(f"{origin}:{lineno}: duplicate id: {rec.utterance_id}")
        seen.add(rec.utterance_id)
        records.append(rec)
    return EmbeddingStore(records)


def ingest_manifest(path) -> EmbeddingStore:
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh.read(), origin=str(path))


def write_manifest(store: EmbeddingStore, path) -> None:
    text = "".join(dumps_json(r.to_json()) + "\n" for r in store)
    atomic_write_bytes(path, text.encode("utf-8"))


def voice_table_store() -> EmbeddingStore:
    """The bundled voice table of the English-Spanish corpus (8 voices)."""
    text = resources.files("dvecspace").joinpath("data/voices.jsonl").read_text("utf-8")
    return parse_manifest(text, origin="voices.jsonl")


# -- profiles -------------------------------------------------------------

def build_profiles(store: EmbeddingStore) -> list:
    """Per-speaker, per-language cluster means, sorted by speaker id."""
    groups = {}
    for rec in store:
        if rec.embedding is None:
            raise DvecError(f"missing embedding: {rec.utterance_id}")
        groups.setdefault(rec.speaker_id, {}).setdefault(rec.language, []).append(
            rec.embedding.values)
    profiles = []
    for speaker in sorted(groups):
        prof = SpeakerProfile(speaker)
        for lang in sorted(groups[speaker]):
            members = groups[speaker][lang]
            mean = mean_embedding(members)
            X = np.vstack(members)
            mnorm = np.linalg.norm(mean.values)
            norms = np.linalg.norm(X, axis=1)
            if mnorm > 0 and np.all(norms > 0):
                cos = X @ mean.values / (norms * mnorm)
                dispersion = math.fsum(cos) / len(cos)
            else:
                dispersion = float("nan")
            prof.clusters[lang] = LanguageCluster(mean, len(members), dispersion)
        profiles.append(prof)
    return profiles


def find_profile(profiles, speaker_id) -> SpeakerProfile:
    for p in profiles:
        if p.speaker_id == speaker_id:
            return p
    raise DvecError(f"no profile for speaker {speaker_id!r}")


def profiles_to_json(profiles) -> list:
    return [
        {
            "speaker_id": p.speaker_id,
            "clusters": {
                lang: {"mean": c.mean.values.tolist(), "count": c.count,
                       "dispersion": None if np.isnan(c.dispersion) else c.dispersion}
                for lang, c in p.clusters.items()
            },
        }
        for p in profiles
    ]


def save_profiles(profiles, path, header=None) -> None:
    rows, means = [], []
    for p in profiles:
        for lang in p.languages:
            c = p.clusters[lang]
            rows.append({"speaker_id": p.speaker_id, "language": lang, "count": c.count,
                         "dispersion": None if np.isnan(c.dispersion) else c.dispersion})
            means.append(c.mean.values)
    dim = means[0].size if means else 0
    data = np.vstack(means) if means else np.zeros((0, dim))
    head = {"kind": "profiles"}
    head.update(header or {})
    write_container(path, StreamTag.EMBEDDING, data, head, rows)


def load_profiles(path) -> list:
    box = read_container(path)
    if box.header.get("kind") != "profiles":
        raise ContainerError(f"unsupported container: {path} does not hold profiles")
    by_speaker = {}
    for row, vec in zip(box.rows, box.data):
        prof = by_speaker.setdefault(row["speaker_id"], SpeakerProfile(row["speaker_id"]))
        disp = row.get("dispersion")
        prof.clusters[row["language"]] = LanguageCluster(
            Embedding(vec, normalized=False), int(row["count"]),
            float("nan") if disp is None else float(disp))
    return [by_speaker[s] for s in sorted(by_speaker)]


# -- containers -------------------------------------------------------------

def save_embeddings(store: EmbeddingStore, path, header=None) -> None:
    """Write every record; embedding rows are packed for records that have one."""
    rows, vecs = [], []
    for rec in store:
        row = rec.meta()
        if rec.embedding is not None:
            row["row"] = len(vecs)
            row["normalized"] = rec.embedding.normalized
            vecs.append(rec.embedding.values)
        rows.append(row)
    dims = {v.size for v in vecs}
    if len(dims) > 1:
        raise DvecError(f"embeddings of mixed dimension {sorted(dims)}")
    dim = dims.pop() if dims else 0
    data = np.vstack(vecs) if vecs else np.zeros((0, dim))
    head = {"kind": "utterances"}
    head.update(header or {})
    write_container(path, StreamTag.EMBEDDING, data, head, rows)


def load_embeddings(path) -> EmbeddingStore:
    box = read_container(path)
    if box.tag != StreamTag.EMBEDDING or box.header.get("kind") != "utterances":
        raise ContainerError(f"unsupported container: {path} does not hold utterances")
    records = []
    for row in box.rows:
        row = dict(row)
        idx = row.pop("row", None)
        normalized = bool(row.pop("normalized", False))
        rec = UtteranceRecord.from_json(row)
        if idx is not None:
            if not 0 <= idx < box.data.shape[0]:
                raise ContainerError(f"corrupt payload: row index {idx} out of range")
            rec.embedding = Embedding(box.data[idx].copy(), normalized=normalized)
        records.append(rec)
    return EmbeddingStore(records)


def save_features(items, path, header=None) -> None:
    """``items``: sequence of (utterance_id, FeatureMatrix), stored frame-stacked."""
    rows, blocks, start = [], [], 0
    widths = {f.width for _, f in items}
    if len(widths) > 1:
        raise DvecError(f"feature matrices of mixed width {sorted(widths)}")
    for uid, feats in items:
        rows.append({"utterance_id": uid, "start": start, "n_frames": feats.n_frames,
                     "frame_rate": feats.frame_rate, **feats.meta})
        blocks.append(feats.frames)
        start += feats.n_frames
    width = widths.pop() if widths else 0
    data = np.vstack(blocks) if blocks else np.zeros((0, width))
    head = {"kind": "features"}
    head.update(header or {})
    write_container(path, StreamTag.FEATURE, data, head, rows)


def load_features(path) -> list:
    box = read_container(path)
    if box.tag != StreamTag.FEATURE:
        raise ContainerError(f"unsupported container: {path} does not hold features")
    out = []
    for row in box.rows:
        row = dict(row)
        uid, start, n = row.pop("utterance_id"), row.pop("start"), row.pop("n_frames")
        if start < 0 or start + n > box.data.shape[0]:
            raise ContainerError(f"corrupt payload: frames of {uid} out of range")
        rate = row.pop("frame_rate")
        out.append((uid, FeatureMatrix(box.data[start: start + n].copy(), rate, row)))
    return out


def export_csv(store: EmbeddingStore, path, comment=None) -> None:
    """One row per embedded record: metadata columns then e0..e{dim-1}."""
    recs = [r for r in store if r.embedding is not None]
    dim = recs[0].embedding.dim if recs else 0
    buf = io.StringIO()
    if comment is not None:
        buf.write(f"# {comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(_REQUIRED) + [f"e{j}" for j in range(dim)])
    for r in recs:
        writer.writerow([r.utterance_id, r.speaker_id, r.language, r.locale, r.n_words]
                        + [repr(float(x)) for x in r.embedding.values])
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))
