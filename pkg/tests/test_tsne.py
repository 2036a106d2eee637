import warnings

import numpy as np
import pytest

from dvecspace.analysis import mutual_nearest_pairs, nearest_centroid_purity
from dvecspace.errors import DvecError
from dvecspace.tsne import TsneConfig, conditional_probabilities, squared_distances, tsne


def blobs(rng, n_per=40, dim=10, gap=20.0):
    a = rng.standard_normal((n_per, dim))
    b = rng.standard_normal((n_per, dim))
    b[:, 0] += gap
    return np.vstack([a, b]), np.repeat(["a", "b"], n_per)


def test_conditional_perplexity_matches_target(rng):
    X = rng.standard_normal((120, 8))
    P, perps = conditional_probabilities(squared_distances(X), 20.0)
    assert np.max(np.abs(perps - 20.0)) < 1e-3
    # recompute the perplexity of each returned row from scratch
    with np.errstate(divide="ignore", invalid="ignore"):
        H = -np.nansum(np.where(P > 0, P * np.log(P), 0.0), axis=1)
    np.testing.assert_allclose(np.exp(H), 20.0, atol=1e-3)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.diag(P) == 0)


def test_two_blobs_separate(rng):
    X, y = blobs(rng)
    res = tsne(X, TsneConfig(perplexity=10, iterations=400))
    assert nearest_centroid_purity(res.embedding, y) == 1.0


def test_kl_non_increasing_after_exaggeration(rng):
    X, _ = blobs(rng, 30)
    res = tsne(X, TsneConfig(perplexity=8, iterations=500, seed=2))
    tail = res.kl[249:]
    assert np.all(np.diff(tail) <= 0)
    assert res.kl.shape == (500,)
    assert np.all(np.isfinite(res.kl))


def test_deterministic(rng):
    X, _ = blobs(rng, 15)
    cfg = TsneConfig(perplexity=5, iterations=100, seed=9)
    assert tsne(X, cfg).embedding.tobytes() == tsne(X, cfg).embedding.tobytes()


def test_duplicates_warn_and_jitter(rng):
    X = rng.standard_normal((20, 3))
    X[5] = X[4]
    with pytest.warns(RuntimeWarning, match="duplicate"):
        res = tsne(X, TsneConfig(perplexity=5, iterations=50))
    assert np.all(np.isfinite(res.embedding))


def test_preconditions(rng):
    with pytest.raises(DvecError):
        tsne(rng.standard_normal((9, 3)), TsneConfig(perplexity=2))
    with pytest.raises(DvecError, match="perplexity"):
        tsne(rng.standard_normal((30, 3)), TsneConfig(perplexity=10))
    with pytest.raises(DvecError):
        TsneConfig(iterations=0)


def test_small_voice_set_structure(small_space):
    from dvecspace.store import build_profiles, find_profile
    from dvecspace.transform import compute_delta, transfer_voices
    store, _ = small_space
    delta = compute_delta(find_profile(build_profiles(store), "ref"), "en", "es")
    X, voices, speaker_of = transfer_voices(store, delta, ("ref", "v1", "v3"), per_voice=40)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        res = tsne(X, TsneConfig(perplexity=15, iterations=600))
    assert nearest_centroid_purity(res.embedding, [speaker_of[v] for v in voices]) >= 0.9
    assert all(mutual_nearest_pairs(res.embedding, voices, speaker_of).values())
