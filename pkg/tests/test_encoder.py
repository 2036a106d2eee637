import math

import numpy as np
import pytest

from dvecspace.encoder import (
    Embedding,
    EncoderConfig,
    batch_loss_and_grads,
    embed,
    gradient_check,
    init_model,
    l2norm_backward,
    l2norm_forward,
    linear_backward,
    linear_forward,
    load_model,
    lstm_backward,
    lstm_forward,
    mean_embedding,
    pool_backward,
    pool_forward,
    softmax_xent,
    train,
)
from dvecspace.errors import DvecError
from dvecspace.oracle import SpaceSpec, gen_space

TINY = EncoderConfig(input_dim=5, n_recurrent_layers=1, recurrent_units=8, embedding_dim=6,
                     n_speakers=3, seed=3)


def numeric_grad(f, arr, step=1e-5):
    g = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), g.reshape(-1)
    for j in range(flat.size):
        saved = flat[j]
        flat[j] = saved + step
        up = f()
        flat[j] = saved - step
        down = f()
        flat[j] = saved
        gflat[j] = (up - down) / (2 * step)
    return g


def rel_err(a, n, floor=1e-6):
    return np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor))


# -- per-layer gradient checks --------------------------------------------

def test_lstm_layer_gradients(rng):
    T, B, D, H = 6, 2, 3, 4
    x = rng.standard_normal((T, B, D))
    Wx, Wh, b = rng.uniform(-0.5, 0.5, (D, 4 * H)), rng.uniform(-0.5, 0.5, (H, 4 * H)), rng.standard_normal(4 * H) * 0.1
    R = rng.standard_normal((T, B, H))

    def f():
        return float(np.sum(lstm_forward(x, Wx, Wh, b)[0] * R))

    _, cache = lstm_forward(x, Wx, Wh, b)
    dx, dWx, dWh, db = lstm_backward(R, cache)
    for analytic, arr in [(dx, x), (dWx, Wx), (dWh, Wh), (db, b)]:
        assert rel_err(analytic, numeric_grad(f, arr)) < 1e-4


def test_linear_layer_gradients(rng):
    h, W, b = rng.standard_normal((4, 3, 5)), rng.standard_normal((2, 5)), rng.standard_normal(2)
    R = rng.standard_normal((4, 3, 2))

    def f():
        return float(np.sum(linear_forward(h, W, b) * R))

    dh, dW, db = linear_backward(R, h, W)
    for analytic, arr in [(dh, h), (dW, W), (db, b)]:
        assert rel_err(analytic, numeric_grad(f, arr)) < 1e-4


@pytest.mark.parametrize("mode", ["mean", "last"])
def test_pool_layer_gradients(rng, mode):
    p = rng.standard_normal((5, 3, 4))
    lengths = np.array([5, 2, 3])
    R = rng.standard_normal((3, 4))

    def f():
        return float(np.sum(pool_forward(p, lengths, mode) * R))

    analytic = pool_backward(R, p.shape, lengths, mode)
    assert rel_err(analytic, numeric_grad(f, p)) < 1e-4
    # padded frames carry no gradient
    assert np.all(analytic[3:, 1] == 0) and np.all(analytic[3:, 2] == 0) if mode == "mean" else True


def test_l2norm_layer_gradients(rng):
    e = rng.standard_normal((3, 6))
    R = rng.standard_normal((3, 6))

    def f():
        return float(np.sum(l2norm_forward(e)[0] * R))

    u, norm = l2norm_forward(e)
    assert rel_err(l2norm_backward(R, u, norm), numeric_grad(f, e)) < 1e-4


def test_softmax_xent_gradients(rng):
    logits = rng.standard_normal((4, 5))
    labels = np.array([0, 3, 4, 1])
    _, analytic = softmax_xent(logits, labels)
    assert rel_err(analytic, numeric_grad(lambda: softmax_xent(logits, labels)[0], logits)) < 1e-4


# -- whole-model checks ----------------------------------------------------

def test_tiny_model_gradient_check(rng):
    model = init_model(TINY)
    assert model.n_params <= 5000
    err = gradient_check(model, rng.standard_normal((7, 5)), label=1)
    assert err < 1e-4


def test_two_layer_last_pooling_gradient_check(rng):
    cfg = EncoderConfig(input_dim=4, n_recurrent_layers=2, recurrent_units=5, embedding_dim=4,
                        n_speakers=3, pooling="last", seed=5)
    assert gradient_check(init_model(cfg), rng.standard_normal((6, 4)), label=2) < 1e-4


def test_empty_model_rejected(rng):
    with pytest.raises(DvecError, match="empty model"):
        gradient_check(init_model(TINY), rng.standard_normal((3, 5)), 0, names=[])


def test_large_model_rejected(rng):
    with pytest.raises(DvecError):
        gradient_check(init_model(EncoderConfig()), rng.standard_normal((3, 20)), 0)


def test_classifier_bias_shift_has_zero_gradient(rng):
    model = init_model(TINY)
    batch = [(rng.standard_normal((5, 5)), 0), (rng.standard_normal((8, 5)), 2)]
    _, grads = batch_loss_and_grads(model, batch)
    assert abs(grads["cls.b"].sum()) < 1e-12
    loss0, _ = batch_loss_and_grads(model, batch)
    model.params["cls.b"] += 3.7
    loss1, _ = batch_loss_and_grads(model, batch)
    assert loss1 == pytest.approx(loss0, abs=1e-12)


def test_batch_permutation_invariance(rng):
    model = init_model(TINY)
    batch = [(rng.standard_normal((int(rng.integers(2, 9)), 5)), int(rng.integers(0, 3)))
             for _ in range(6)]
    _, g1 = batch_loss_and_grads(model, batch)
    _, g2 = batch_loss_and_grads(model, [batch[i] for i in rng.permutation(6)])
    for k in g1:
        assert np.max(np.abs(g1[k] - g2[k])) < 1e-10


# -- embed -----------------------------------------------------------------

def test_embed_is_unit_norm_and_deterministic(rng):
    model = init_model(EncoderConfig(seed=1))
    feats = rng.standard_normal((30, 20))
    a, b = embed(model, feats), embed(model, feats)
    assert a.normalized and a.dim == 128
    assert abs(np.linalg.norm(a.values) - 1.0) < 1e-6
    assert a.values.tobytes() == b.values.tobytes()


def test_embed_width_mismatch(rng):
    with pytest.raises(DvecError, match="feature dimension mismatch"):
        embed(init_model(EncoderConfig()), rng.standard_normal((10, 13)))


# -- training ----------------------------------------------------------------

def test_degenerate_dataset(rng):
    data = [(rng.standard_normal((4, 5)), 1) for _ in range(3)]
    with pytest.raises(DvecError, match="degenerate dataset"):
        train(data, TINY)


def test_label_out_of_range(rng):
    data = [(rng.standard_normal((4, 5)), lab) for lab in (0, 7)]
    with pytest.raises(DvecError):
        train(data, TINY)


def test_seed_determinism(rng):
    data = [(rng.standard_normal((int(rng.integers(3, 8)), 5)), i % 3) for i in range(12)]
    cfg = EncoderConfig(**{**TINY.__dict__, "max_steps": 15, "batch_size": 4})
    _, l1 = train(data, cfg)
    _, l2 = train(data, cfg)
    _, l3 = train(data, EncoderConfig(**{**cfg.__dict__, "seed": 4}))
    assert l1.tobytes() == l2.tobytes()
    assert not np.array_equal(l1, l3)


def test_divergence_is_reported(rng):
    from dvecspace.errors import TrainingDiverged
    data = [(rng.standard_normal((4, 5)), i % 2) for i in range(4)]
    data[0] = (np.full((4, 5), 1e308), 0)
    with pytest.raises((TrainingDiverged, FloatingPointError, DvecError)):
        with np.errstate(all="ignore"):
            train(data, EncoderConfig(**{**TINY.__dict__, "max_steps": 3, "batch_size": 4}))


def test_checkpoint_round_trip(tmp_path, rng):
    from dvecspace.encoder import save_model
    model = init_model(TINY)
    model.input_mean = rng.standard_normal(5)
    save_model(model, tmp_path / "m.dvec")
    back = load_model(tmp_path / "m.dvec")
    assert back.config == model.config
    for k in model.params:
        assert back.params[k].tobytes() == model.params[k].tobytes()
    assert back.input_mean.tobytes() == model.input_mean.tobytes()


# -- mean_embedding ----------------------------------------------------------

def test_mean_of_single_embedding(rng):
    v = Embedding(rng.standard_normal(8), normalized=True)
    m = mean_embedding([v])
    assert m.values.tobytes() == v.values.tobytes() and not m.normalized


def test_mean_of_opposites_is_zero(rng):
    v = rng.standard_normal(16)
    assert np.all(mean_embedding([v, -v]).values == 0.0)


@pytest.mark.parametrize("k", [1, 2, 3, 7, 10, 33])
def test_mean_of_copies_is_exact(rng, k):
    v = rng.standard_normal(128)
    assert mean_embedding([v] * k).values.tobytes() == v.tobytes()


def test_mean_is_order_invariant(rng):
    X = list(rng.standard_normal((50, 12)))
    a = mean_embedding(X).values
    b = mean_embedding([X[i] for i in rng.permutation(50)]).values
    assert a.tobytes() == b.tobytes()


def test_empty_cluster():
    with pytest.raises(DvecError, match="empty cluster"):
        mean_embedding([])


def test_mean_of_100_oracle_samples_near_truth():
    store, truth = gen_space(SpaceSpec(n_utterances=100, n_bilingual_utterances=100,
                                       min_words=5, seed=21))
    spec = truth.spec
    recs = list(store.select(lambda r: r.speaker_id == "v1"))
    assert len(recs) == 100
    lang = recs[0].language
    mean = mean_embedding([r.embedding for r in recs]).values
    tol = 3 * spec.utterance_sigma / math.sqrt(100)
    assert np.all(np.abs(mean - truth.long_mean("v1", lang)) <= tol + 1e-12)
