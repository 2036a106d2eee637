"""
Embedding-space analyses: PCA projection, two-class LDA, cosine similarity,
silhouette and nearest-centroid cluster diagnostics, and the
sentence-length overlap report.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DvecError


# -- PCA -------------------------------------------------------------------

@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # k x dim, orthonormal rows
    explained_variance_ratio: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) @ self.components + self.mean


def pca_fit(X, k=2):
    """Top-``k`` principal axes of ``X`` (rows are observations) via SVD.

    Each component's sign is fixed so its largest-magnitude entry is
    positive. Returns ``(model, projected)``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DvecError("PCA needs a 2-d array with at least two rows")
    n, dim = X.shape
    if not 1 <= k <= min(n - 1, dim):
        raise DvecError(f"rank exceeded: k={k} but at most {min(n - 1, dim)} components exist")
    mean = X.mean(axis=0)
    centered = X - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:k].copy()
    pivots = np.argmax(np.abs(comps), axis=1)
    comps *= np.sign(comps[np.arange(k), pivots])[:, None]
    var = s**2
    total = var.sum()
    ratios = var[:k] / total if total > 0 else np.zeros(k)
    model = PcaModel(mean, comps, ratios)
    return model, centered @ comps.T


def unit_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise DvecError("cannot normalize a zero vector")
    return X / norms


# -- LDA -------------------------------------------------------------------

@dataclass
class LdaModel:
    w: np.ndarray
    b: float
    classes: tuple          # (negative class, positive class)
    means: np.ndarray       # 2 x dim, in ``classes`` order
    shrinkage: float
    train_accuracy: float
    test_accuracy: float
    n_train: int = 0
    n_test: int = 0

    def scores(self, X) -> np.ndarray:
        """Signed distance to the decision boundary; positive means ``classes[1]``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.w.size:
            raise DvecError(f"dimension mismatch: model has {self.w.size}, got {X.shape[1]}")
        return (X @ self.w + self.b) / np.linalg.norm(self.w)

    def predict(self, X) -> np.ndarray:
        s = self.scores(X)
        return np.where(s > 0, self.classes[1], self.classes[0])

    def score_toward(self, X, target) -> np.ndarray:
        if target not in self.classes:
            raise DvecError(f"{target!r} is not one of {self.classes}")
        s = self.scores(X)
        return s if target == self.classes[1] else -s

    def to_json(self) -> dict:
        return {
            "w": self.w.tolist(), "b": self.b, "classes": list(self.classes),
            "means": self.means.tolist(), "shrinkage": self.shrinkage,
            "train_accuracy": self.train_accuracy,
            "test_accuracy": None if math.isnan(self.test_accuracy) else self.test_accuracy,
            "n_train": self.n_train, "n_test": self.n_test,
        }

    @classmethod
    def from_json(cls, obj) -> "LdaModel":
        test = obj.get("test_accuracy")
        return cls(np.asarray(obj["w"], float), float(obj["b"]), tuple(obj["classes"]),
                   np.asarray(obj["means"], float), float(obj["shrinkage"]),
                   float(obj["train_accuracy"]), float("nan") if test is None else float(test),
                   int(obj.get("n_train", 0)), int(obj.get("n_test", 0)))


def stratified_split(labels, fraction=0.75, seed=0):
    """Shuffle by ``seed`` and take ``round(fraction * n)`` rows for training,
    allocated across classes by largest remainder.

    Ties in the remainder go to the class that shows up first in the
    shuffled order, so the split does not depend on how classes are named.
    """
    labels = np.asarray(labels)
    n = labels.size
    if not 0.0 < fraction <= 1.0:
        raise DvecError("split fraction must lie in (0, 1]")
    perm = np.random.default_rng(seed).permutation(n)
    shuffled = labels[perm]
    classes, first = np.unique(shuffled, return_index=True)
    total = int(math.floor(fraction * n + 0.5))
    members = {c: perm[shuffled == c] for c in classes}
    quota = {c: fraction * members[c].size for c in classes}
    take = {c: int(math.floor(quota[c])) for c in classes}
    leftover = total - sum(take.values())
    ranked = sorted(classes, key=lambda c: (-(quota[c] - take[c]), first[classes == c][0]))
    for c in ranked[:max(leftover, 0)]:
        take[c] += 1
    train = np.concatenate([members[c][: take[c]] for c in classes]) if n else perm
    test = np.concatenate([members[c][take[c]:] for c in classes]) if n else perm
    return np.sort(train), np.sort(test)


def default_shrinkage(scatter) -> float:
    return 1e-3 * float(np.trace(scatter)) / scatter.shape[0]


def lda_fit(X, y, split_fraction=0.75, seed=0, shrinkage=None, classes=None) -> LdaModel:
    """Two-class Fisher LDA with ridge shrinkage on the pooled scatter.

    ``w = (S_w + lam I)^-1 (mu_1 - mu_0)`` with the threshold halfway
    between the projected class means (equal priors). Accuracy is reported
    on both the training rows and the held-out rows.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if classes is None:
        classes = tuple(np.unique(y).tolist())
    classes = tuple(classes)
    if len(classes) != 2 or set(np.unique(y).tolist()) != set(classes):
        raise DvecError(f"LDA needs exactly two classes, got {sorted(set(y.tolist()))}")
    train, test = stratified_split(y, split_fraction, seed)
    Xtr, ytr = X[train], y[train]
    for c in classes:
        if not np.any(ytr == c):
            raise DvecError(f"degenerate split: class {c!r} absent from the training split")
    dim = X.shape[1]
    means = np.vstack([Xtr[ytr == c].mean(axis=0) for c in classes])
    scatter = np.zeros((dim, dim))
    for i, c in enumerate(classes):
        centered = Xtr[ytr == c] - means[i]
        scatter += centered.T @ centered
    lam = default_shrinkage(scatter) if shrinkage is None else float(shrinkage)
    if lam == 0 and min(np.sum(ytr == c) for c in classes) < dim / 2:
        raise DvecError("too few samples per class for unregularized LDA; set shrinkage > 0")
    w = np.linalg.solve(scatter + lam * np.eye(dim), means[1] - means[0])
    if not np.all(np.isfinite(w)) or not np.any(w):
        raise DvecError("LDA direction is zero or non-finite; classes are indistinguishable")
    b = -0.5 * float(w @ (means[0] + means[1]))
    model = LdaModel(w, b, classes, means, lam, float("nan"), float("nan"),
                     int(train.size), int(test.size))
    model.train_accuracy = float(np.mean(model.predict(Xtr) == ytr))
    if test.size:
        model.test_accuracy = float(np.mean(model.predict(X[test]) == y[test]))
    return model


def lda_predict(model: LdaModel, x):
    """Label and signed boundary distance for a single embedding."""
    x = np.asarray(x, dtype=np.float64).ravel()
    score = float(model.scores(x)[0])
    return (model.classes[1] if score > 0 else model.classes[0]), score


# -- similarities and cluster diagnostics --------------------------------------

def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DvecError(f"dimension mismatch: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DvecError("undefined similarity: zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def cosine_matrix(X) -> np.ndarray:
    U = unit_rows(X)
    return np.clip(U @ U.T, -1.0, 1.0)


def silhouette_score(X, labels, chunk=1024) -> float:
    """Mean silhouette with Euclidean distances, computed in row chunks."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    classes, inv = np.unique(labels, return_inverse=True)
    if classes.size < 2:
        raise DvecError("silhouette needs at least two clusters")
    onehot = np.zeros((labels.size, classes.size))
    onehot[np.arange(labels.size), inv] = 1.0
    counts = onehot.sum(axis=0)
    sq = np.sum(X * X, axis=1)
    values = np.empty(labels.size)
    for start in range(0, labels.size, chunk):
        stop = min(start + chunk, labels.size)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * X[start:stop] @ X.T
        D = np.sqrt(np.maximum(d2, 0.0))
        sums = D @ onehot
        own = inv[start:stop]
        rows = np.arange(stop - start)
        own_count = counts[own] - 1
        a = np.where(own_count > 0, sums[rows, own] / np.maximum(own_count, 1), 0.0)
        other = sums / counts
        other[rows, own] = np.inf
        b = other.min(axis=1)
        s = (b - a) / np.maximum(a, b)
        values[start:stop] = np.where(own_count > 0, s, 0.0)
    return float(values.mean())


def centroids(X, labels):
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    keys = sorted(set(labels.tolist()))
    return keys, np.vstack([X[labels == k].mean(axis=0) for k in keys])


def nearest_centroid_purity(X, labels) -> float:
    """Fraction of points whose nearest label centroid is their own label."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    keys, C = centroids(X, labels)
    d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    assigned = np.asarray(keys, dtype=object)[np.argmin(d2, axis=1)]
    return float(np.mean(assigned == labels.astype(object)))


def mutual_nearest_pairs(X, voice_labels, speaker_of) -> dict:
    """For every speaker with two voices, whether the two voice centroids
    are each other's nearest neighbour among all voice centroids."""
    keys, C = centroids(X, voice_labels)
    D = np.linalg.norm(C[:, None, :] - C[None, :, :], axis=2)
    np.fill_diagonal(D, np.inf)
    nearest = {keys[i]: keys[int(np.argmin(D[i]))] for i in range(len(keys))}
    by_speaker = {}
    for v in keys:
        by_speaker.setdefault(speaker_of[v], []).append(v)
    out = {}
    for spk, voices in sorted(by_speaker.items()):
        if len(voices) == 2:
            a, b = voices
            out[spk] = nearest[a] == b and nearest[b] == a
    return out


# -- sentence-length overlap ------------------------------------------------------

def overlap_by_length(store, speaker_id=None, word_threshold=5, languages=None,
                      split_fraction=0.75, seed=0) -> dict:
    """Compare short (< ``word_threshold`` words) and long utterances of one
    bilingual speaker.

    For each group: mean distance of each utterance to its own-language mean
    and to the other language's mean (means over all of the speaker's
    utterances), the distance between the group's two language means, and
    held-out LDA accuracy within the group. An empty group is reported as
    ``{"present": False}``.
    """
    if speaker_id is None:
        bilingual = store.bilingual_speakers()
        if not bilingual:
            raise DvecError("no bilingual speaker in store")
        speaker_id = bilingual[0]
    recs = [r for r in store if r.speaker_id == speaker_id]
    langs = tuple(languages) if languages else tuple(sorted({r.language for r in recs}))
    if len(langs) != 2 or any(not any(r.language == l for r in recs) for l in langs):
        raise DvecError(f"speaker {speaker_id!r} needs utterances in exactly two languages")
    recs = [r for r in recs if r.language in langs]
    X = store.matrix(recs)
    y = np.array([r.language for r in recs])
    words = np.array([r.n_words for r in recs])
    lang_means = {l: X[y == l].mean(axis=0) for l in langs}

    def group_report(mask):
        if not np.any(mask):
            return {"present": False}
        Xg, yg = X[mask], y[mask]
        own = np.array([np.linalg.norm(x - lang_means[l]) for x, l in zip(Xg, yg)])
        other_lang = {langs[0]: langs[1], langs[1]: langs[0]}
        other = np.array([np.linalg.norm(x - lang_means[other_lang[l]]) for x, l in zip(Xg, yg)])
        rep = {
            "present": True,
            "n": int(mask.sum()),
            "counts": {l: int(np.sum(yg == l)) for l in langs},
            "mean_distance_own": float(own.mean()),
            "mean_distance_other": float(other.mean()),
            "cluster_distance": None,
            "lda_accuracy": None,
        }
        if all(np.any(yg == l) for l in langs):
            rep["cluster_distance"] = float(np.linalg.norm(
                Xg[yg == langs[1]].mean(axis=0) - Xg[yg == langs[0]].mean(axis=0)))
            try:
                lda = lda_fit(Xg, yg, split_fraction, seed, classes=langs)
                rep["lda_accuracy"] = None if math.isnan(lda.test_accuracy) else lda.test_accuracy
            except DvecError:
                pass
        return rep

    return {
        "speaker_id": speaker_id,
        "languages": list(langs),
        "word_threshold": word_threshold,
        "short": group_report(words < word_threshold),
        "long": group_report(words >= word_threshold),
        "all": group_report(np.ones(words.size, dtype=bool)),
    }
