"""
d-vector speaker encoder in plain numpy.

Architecture: stacked LSTM layers over MFCC frames, a linear projection to
``embedding_dim`` applied per frame, pooling over time (mean by default),
L2 normalization, and a softmax speaker classifier used only for training.
Gradients are computed by full backpropagation through time; training uses
Adam. Everything runs in float64.
"""

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from .container import StreamTag, read_container, write_container
from .errors import ContainerError, DvecError, TrainingDiverged
from .features import FeatureMatrix

MAX_CHECK_PARAMS = 5000


@dataclass(eq=False)
class Embedding:
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, Embedding):
            return NotImplemented
        return self.normalized == other.normalized and (
            self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
        )

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int = 20
    n_recurrent_layers: int = 2
    recurrent_units: int = 64
    embedding_dim: int = 128
    n_speakers: int = 64
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_steps: int = 1000
    seed: int = 0
    pooling: str = "mean"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        for name in ("input_dim", "n_recurrent_layers", "recurrent_units",
                     "embedding_dim", "n_speakers", "batch_size"):
            if getattr(self, name) <= 0:
                raise DvecError(f"{name} must be positive")
        if self.max_steps < 0:
            raise DvecError("max_steps must be non-negative")
        if not self.learning_rate > 0:
            raise DvecError("learning_rate must be positive")
        if self.pooling not in ("mean", "last"):
            raise DvecError(f"unknown pooling {self.pooling!r}")


@dataclass
class EncoderModel:
    config: EncoderConfig
    params: "OrderedDict[str, np.ndarray]"
    input_mean: np.ndarray = None
    input_std: np.ndarray = None

    def __post_init__(self):
        d = self.config.input_dim
        if self.input_mean is None:
            self.input_mean = np.zeros(d)
        if self.input_std is None:
            self.input_std = np.ones(d)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "EncoderModel":
        return EncoderModel(
            self.config,
            OrderedDict((k, v.copy()) for k, v in self.params.items()),
            self.input_mean.copy(),
            self.input_std.copy(),
        )


def init_model(config: EncoderConfig) -> EncoderModel:
    """Weights uniform in +-1/sqrt(fan_in) per matrix, biases zero."""
    rng = np.random.default_rng(config.seed)
    H, E = config.recurrent_units, config.embedding_dim

    def uniform(fan_in, shape):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    params = OrderedDict()
    d_in = config.input_dim
    for layer in range(config.n_recurrent_layers):
        params[f"lstm{layer}.Wx"] = uniform(d_in, (d_in, 4 * H))
        params[f"lstm{layer}.Wh"] = uniform(H, (H, 4 * H))
        params[f"lstm{layer}.b"] = np.zeros(4 * H)
        d_in = H
    params["proj.W"] = uniform(H, (E, H))
    params["proj.b"] = np.zeros(E)
    params["cls.W"] = uniform(E, (config.n_speakers, E))
    params["cls.b"] = np.zeros(config.n_speakers)
    return EncoderModel(config, params)


# -- layers --------------------------------------------------------------
# Arrays are time-major: x is (T, B, D).

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_forward(x, Wx, Wh, b):
    T, B, _ = x.shape
    H = Wh.shape[0]
    xz = x @ Wx + b
    hs = np.zeros((T + 1, B, H))
    cs = np.zeros((T + 1, B, H))
    gates = np.empty((T, B, 4 * H))
    for t in range(T):
        z = xz[t] + hs[t] @ Wh
        ifo = _sigmoid(z[:, : 3 * H])
        g = np.tanh(z[:, 3 * H:])
        cs[t + 1] = ifo[:, H: 2 * H] * cs[t] + ifo[:, :H] * g
        hs[t + 1] = ifo[:, 2 * H:] * np.tanh(cs[t + 1])
        gates[t, :, : 3 * H] = ifo
        gates[t, :, 3 * H:] = g
    return hs[1:], (x, Wx, Wh, hs, cs, gates)


def lstm_backward(dhs, cache):
    x, Wx, Wh, hs, cs, gates = cache
    T, B, H = dhs.shape
    dz = np.empty((T, B, 4 * H))
    dWh = np.zeros_like(Wh)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in reversed(range(T)):
        i, f, o = gates[t, :, :H], gates[t, :, H: 2 * H], gates[t, :, 2 * H: 3 * H]
        g = gates[t, :, 3 * H:]
        tc = np.tanh(cs[t + 1])
        dh = dhs[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz[t, :, :H] = dc * g * i * (1.0 - i)
        dz[t, :, H: 2 * H] = dc * cs[t] * f * (1.0 - f)
        dz[t, :, 2 * H: 3 * H] = dh * tc * o * (1.0 - o)
        dz[t, :, 3 * H:] = dc * i * (1.0 - g * g)
        dWh += hs[t].T @ dz[t]
        dh_next = dz[t] @ Wh.T
        dc_next = dc * f
    flat = dz.reshape(T * B, 4 * H)
    dWx = x.reshape(T * B, -1).T @ flat
    db = flat.sum(axis=0)
    dx = dz @ Wx.T
    return dx, dWx, dWh, db


def linear_forward(h, W, b):
    return h @ W.T + b


def linear_backward(dout, h, W):
    dW = np.tensordot(dout, h, axes=(tuple(range(dout.ndim - 1)),) * 2)
    db = dout.reshape(-1, dout.shape[-1]).sum(axis=0)
    return dout @ W, dW, db


def pool_forward(p, lengths, mode="mean"):
    T, B, _ = p.shape
    if mode == "last":
        return p[lengths - 1, np.arange(B)]
    mask = (np.arange(T)[:, None] < lengths[None, :]).astype(np.float64)
    return np.einsum("tbe,tb->be", p, mask) / lengths[:, None]


def pool_backward(de, shape, lengths, mode="mean"):
    T, B, E = shape
    dp = np.zeros(shape)
    if mode == "last":
        dp[lengths - 1, np.arange(B)] = de
        return dp
    mask = (np.arange(T)[:, None] < lengths[None, :]).astype(np.float64)
    return mask[:, :, None] * (de / lengths[:, None])[None, :, :]


def l2norm_forward(e):
    norm = np.maximum(np.linalg.norm(e, axis=-1, keepdims=True), 1e-300)
    return e / norm, norm


def l2norm_backward(du, u, norm):
    return (du - u * np.sum(u * du, axis=-1, keepdims=True)) / norm


def softmax_xent(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    B = logits.shape[0]
    loss = -logp[np.arange(B), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(B), labels] -= 1.0
    return loss, dlogits / B


# -- model-level passes --------------------------------------------------

def _pad(feature_list, model):
    lengths = np.array([f.shape[0] for f in feature_list])
    T, D = lengths.max(), model.config.input_dim
    x = np.zeros((T, len(feature_list), D))
    for j, f in enumerate(feature_list):
        x[: f.shape[0], j] = (f - model.input_mean) / model.input_std
    return x, lengths


def _as_frames(features, model):
    frames = features.frames if isinstance(features, FeatureMatrix) else np.asarray(features, float)
    frames = np.atleast_2d(frames)
    if frames.shape[1] != model.config.input_dim:
        raise DvecError(
            f"feature dimension mismatch: model expects {model.config.input_dim}, "
            f"got {frames.shape[1]}"
        )
    if frames.shape[0] < 1:
        raise DvecError("features need at least one frame")
    return frames


def _encode(params, config, x, lengths):
    caches = []
    h = x
    for layer in range(config.n_recurrent_layers):
        h, cache = lstm_forward(h, params[f"lstm{layer}.Wx"], params[f"lstm{layer}.Wh"],
                                params[f"lstm{layer}.b"])
        caches.append(cache)
    p = linear_forward(h, params["proj.W"], params["proj.b"])
    e = pool_forward(p, lengths, config.pooling)
    u, norm = l2norm_forward(e)
    return u, (caches, h, p.shape, e, u, norm)


def loss_and_grads(model, x, lengths, labels):
    """Mean speaker cross-entropy over a padded batch and its gradients."""
    params, config = model.params, model.config
    u, (caches, h_top, p_shape, e, _, norm) = _encode(params, config, x, lengths)
    logits = linear_forward(u, params["cls.W"], params["cls.b"])
    loss, dlogits = softmax_xent(logits, labels)
    grads = OrderedDict()
    du, grads["cls.W"], grads["cls.b"] = linear_backward(dlogits, u, params["cls.W"])
    de = l2norm_backward(du, u, norm)
    dp = pool_backward(de, p_shape, lengths, config.pooling)
    dh, grads["proj.W"], grads["proj.b"] = linear_backward(dp, h_top, params["proj.W"])
    for layer in reversed(range(config.n_recurrent_layers)):
        dh, dWx, dWh, db = lstm_backward(dh, caches[layer])
        grads[f"lstm{layer}.Wx"], grads[f"lstm{layer}.Wh"], grads[f"lstm{layer}.b"] = dWx, dWh, db
    return loss, OrderedDict((k, grads[k]) for k in params)


def batch_loss_and_grads(model, batch):
    """``batch`` is a list of (frames, label); frames are raw (un-normalized)."""
    feats = [_as_frames(f, model) for f, _ in batch]
    labels = np.array([lab for _, lab in batch])
    x, lengths = _pad(feats, model)
    return loss_and_grads(model, x, lengths, labels)


def embed(model: EncoderModel, features) -> Embedding:
    """Unit-norm d-vector for one utterance's feature frames."""
    frames = _as_frames(features, model)
    x, lengths = _pad([frames], model)
    u, _ = _encode(model.params, model.config, x, lengths)
    return Embedding(u[0], normalized=True)


def embed_many(model: EncoderModel, feature_list) -> list:
    return [embed(model, f) for f in feature_list]


def mean_embedding(embeddings) -> Embedding:
    """Arithmetic mean of a cluster of embeddings, not re-normalized.

    The sum is exactly rounded (``math.fsum``) around the coordinate-wise
    minimum, so the result does not depend on the order of the inputs and
    k copies of v average to v bit for bit.
    """
    rows = [np.asarray(e, dtype=np.float64).ravel() for e in embeddings]
    if not rows:
        raise DvecError("empty cluster")
    dims = {r.size for r in rows}
    if len(dims) != 1:
        raise DvecError(f"embedding dimensions differ: {sorted(dims)}")
    X = np.vstack(rows)
    ref = X.min(axis=0)
    dev = X - ref
    n = X.shape[0]
    mean = ref + np.array([math.fsum(dev[:, j]) for j in range(X.shape[1])]) / n
    return Embedding(mean, normalized=False)


# -- training ------------------------------------------------------------

def _input_stats(frame_list, dim):
    stacked = np.vstack(frame_list)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    return mean, np.where(std > 1e-12, std, 1.0)


def train(dataset, config: EncoderConfig = EncoderConfig()):
    """Train an encoder by speaker classification.

    ``dataset`` is a sequence of ``(features, speaker_label)`` with integer
    labels in ``[0, n_speakers)``. Returns ``(model, losses)`` where
    ``losses[k]`` is the mean minibatch cross-entropy at step ``k``.
    Identical data and config (seed included) reproduce the same trace.
    """
    labels = [int(lab) for _, lab in dataset]
    if len(set(labels)) < 2:
        raise DvecError("degenerate dataset: need at least two distinct speakers")
    if max(labels) >= config.n_speakers or min(labels) < 0:
        raise DvecError(f"speaker labels must lie in [0, {config.n_speakers})")
    model = init_model(config)
    frames = [_as_frames(f, model) for f, _ in dataset]
    model.input_mean, model.input_std = _input_stats(frames, config.input_dim)

    rng = np.random.default_rng([config.seed, 1])
    m = OrderedDict((k, np.zeros_like(v)) for k, v in model.params.items())
    v = OrderedDict((k, np.zeros_like(p)) for k, p in model.params.items())
    b1, b2, lr = config.beta1, config.beta2, config.learning_rate
    order = np.empty(0, dtype=int)
    losses = []
    for step in range(1, config.max_steps + 1):
        if order.size < config.batch_size:
            order = np.concatenate([order, rng.permutation(len(frames))])
        idx, order = order[: config.batch_size], order[config.batch_size:]
        x, lengths = _pad([frames[i] for i in idx], model)
        loss, grads = loss_and_grads(model, x, lengths, np.array([labels[i] for i in idx]))
        if not np.isfinite(loss):
            raise TrainingDiverged(f"training diverged at step {step}: loss={loss}")
        losses.append(float(loss))
        corr1, corr2 = 1.0 - b1**step, 1.0 - b2**step
        for k, g in grads.items():
            m[k] = b1 * m[k] + (1.0 - b1) * g
            v[k] = b2 * v[k] + (1.0 - b2) * g * g
            model.params[k] -= lr * (m[k] / corr1) / (np.sqrt(v[k] / corr2) + config.adam_eps)
    return model, np.array(losses)


def gradient_check(model: EncoderModel, features, label: int, step: float = 1e-5,
                   names=None, floor: float = 1e-6):
    """Largest relative error between analytic and central-difference gradients.

    Every scalar parameter (of the tensors in ``names``, default all) is
    perturbed by +-``step``. The relative error of one entry is
    ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps vanishing gradients
    from turning rounding noise into large ratios.
    """
    names = list(model.params) if names is None else list(names)
    total = sum(model.params[k].size for k in names)
    if total == 0:
        raise DvecError("empty model: no parameters to check")
    if total > MAX_CHECK_PARAMS:
        raise DvecError(f"model has {total} parameters; finite differencing is capped at "
                        f"{MAX_CHECK_PARAMS}")
    frames = _as_frames(features, model)
    x, lengths = _pad([frames], model)
    labels = np.array([label])
    probe = model.copy()
    _, grads = loss_and_grads(probe, x, lengths, labels)
    worst = 0.0
    for k in names:
        p = probe.params[k]
        flat = p.reshape(-1)
        analytic = grads[k].reshape(-1)
        for j in range(flat.size):
            saved = flat[j]
            flat[j] = saved + step
            up, _ = loss_and_grads(probe, x, lengths, labels)
            flat[j] = saved - step
            down, _ = loss_and_grads(probe, x, lengths, labels)
            flat[j] = saved
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(analytic[j]), abs(numeric), floor)
            worst = max(worst, abs(analytic[j] - numeric) / denom)
    return worst


# -- checkpoints ---------------------------------------------------------

def save_model(model: EncoderModel, path, extra=None) -> None:
    tensors = [("input_mean", model.input_mean), ("input_std", model.input_std)]
    tensors += list(model.params.items())
    rows, offset = [], 0
    for name, arr in tensors:
        rows.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
    flat = np.concatenate([arr.ravel() for _, arr in tensors])
    header = dict(extra or {})
    header.update(kind="encoder", encoder=asdict(model.config))
    write_container(path, StreamTag.MODEL, flat, header, rows)


def load_model(path) -> EncoderModel:
    box = read_container(path)
    if box.tag != StreamTag.MODEL or box.header.get("kind") != "encoder":
        raise ContainerError(f"unsupported container: {path} is not an encoder checkpoint")
    config = EncoderConfig(**box.header["encoder"])
    tensors = {}
    for row in box.rows:
        size = int(np.prod(row["shape"], dtype=np.int64))
        tensors[row["name"]] = box.data[row["offset"]: row["offset"] + size].reshape(row["shape"])
    ref = init_model(config)
    params = OrderedDict()
    for name, arr in ref.params.items():
        if name not in tensors or tensors[name].shape != arr.shape:
            raise ContainerError(f"corrupt payload: tensor {name} missing or misshapen")
        params[name] = tensors[name].copy()
    return EncoderModel(config, params, tensors["input_mean"].copy(), tensors["input_std"].copy())
