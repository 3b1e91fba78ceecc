"""Feed-forward autoencoder trained with reconstruction + prototype-contrastive loss.

Encoder and decoder are stacks of dense layers (ReLU on hidden layers, linear
outputs). Weights are stored ``(out, in)``. Gradients are computed by hand and
optimized with Adam; everything is float64 numpy.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyBatch, InvalidArchitecture, UnknownLabel, ZeroVector

logger = logging.getLogger(__name__)

EMBEDDING_DIM = 32


@dataclass(frozen=True)
class Architecture:
    layer_dims: tuple[int, ...] = (72, 64, EMBEDDING_DIM)
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if len(self.layer_dims) < 2:
            raise InvalidArchitecture("need at least an input and an embedding dimension")
        if any(d < 1 for d in self.layer_dims):
            raise InvalidArchitecture("layer dimensions must be positive")
        if self.activation != "relu":
            raise InvalidArchitecture(f"unsupported activation {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def embedding_dim(self) -> int:
        return self.layer_dims[-1]


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0


@dataclass
class EmbeddingModel:
    arch: Architecture
    encoder: list[tuple[np.ndarray, np.ndarray]]
    decoder: list[tuple[np.ndarray, np.ndarray]]
    opt_state: AdamState
    rng_seed: int = 0

    def parameters(self) -> list[np.ndarray]:
        """All tensors in declared order: encoder (W, b) pairs, then decoder."""
        out = []
        for W, b in self.encoder + self.decoder:
            out += [W, b]
        return out

    @property
    def n_encoder_params(self) -> int:
        return 2 * len(self.encoder)

    def set_parameters(self, params: list[np.ndarray]) -> None:
        pairs = [(params[i], params[i + 1]) for i in range(0, len(params), 2)]
        n = len(self.encoder)
        self.encoder, self.decoder = pairs[:n], pairs[n:]

    def copy(self) -> "EmbeddingModel":
        return copy.deepcopy(self)


def _zeros_like(params):
    return [np.zeros_like(p) for p in params]


def init_model(arch: Architecture | tuple[int, ...] | list[int], seed: int = 0) -> EmbeddingModel:
    """Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)), for weights and biases."""
    if not isinstance(arch, Architecture):
        arch = Architecture(tuple(arch))
    rng = np.random.default_rng(seed)
    dims = arch.layer_dims

    def layer(n_in, n_out):
        bound = 1.0 / np.sqrt(n_in)
        return rng.uniform(-bound, bound, size=(n_out, n_in)), rng.uniform(-bound, bound, size=n_out)

    encoder = [layer(a, b) for a, b in zip(dims[:-1], dims[1:])]
    rdims = dims[::-1]
    decoder = [layer(a, b) for a, b in zip(rdims[:-1], rdims[1:])]
    model = EmbeddingModel(arch, encoder, decoder, AdamState([], []), seed)
    model.opt_state = AdamState(_zeros_like(model.parameters()), _zeros_like(model.parameters()))
    return model


def _forward(layers, X):
    acts, pre = [X], []
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = acts[-1] @ W.T + b
        pre.append(z)
        acts.append(np.maximum(z, 0.0) if i < last else z)
    return acts, pre


def _backward(layers, acts, pre, grad_out):
    """Backprop ``grad_out`` through a layer stack; returns (param grads, input grad)."""
    grads = []
    g = grad_out
    last = len(layers) - 1
    for i in range(last, -1, -1):
        if i < last:
            g = g * (pre[i] > 0)
        W, _ = layers[i]
        grads.append(g.sum(axis=0))
        grads.append(g.T @ acts[i])
        g = g @ W
    return grads[::-1], g


def _as_batch(x, dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != dim:
        raise DimensionMismatch(f"expected inputs of dimension {dim}, got shape {x.shape}")
    return X, single


def encode(model: EmbeddingModel, x: np.ndarray) -> np.ndarray:
    X, single = _as_batch(x, model.arch.input_dim)
    h = _forward(model.encoder, X)[0][-1]
    return h[0] if single else h


def decode(model: EmbeddingModel, h: np.ndarray) -> np.ndarray:
    H, single = _as_batch(h, model.arch.embedding_dim)
    out = _forward(model.decoder, H)[0][-1]
    return out[0] if single else out


def encode_vjp(model: EmbeddingModel, X: np.ndarray, grad_h: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the inputs of ``sum(grad_h * encode(X))``."""
    X, single = _as_batch(X, model.arch.input_dim)
    acts, pre = _forward(model.encoder, X)
    _, gx = _backward(model.encoder, acts, pre, np.atleast_2d(grad_h))
    return gx[0] if single else gx


def mse_loss(model: EmbeddingModel, X: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean over the batch of ||g(h(x)) - x||^2, with gradients for every parameter."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise EmptyBatch("mse_loss on an empty batch")
    X, _ = _as_batch(X, model.arch.input_dim)
    enc_acts, enc_pre = _forward(model.encoder, X)
    loss, g_dec, g_h = _mse_from_embedding(model, X, enc_acts[-1])
    g_enc, _ = _backward(model.encoder, enc_acts, enc_pre, g_h)
    return loss, g_enc + g_dec


def _mse_from_embedding(model, X, H):
    dec_acts, dec_pre = _forward(model.decoder, H)
    diff = dec_acts[-1] - X
    n = len(X)
    loss = float(np.sum(diff * diff) / n)
    g_dec, g_h = _backward(model.decoder, dec_acts, dec_pre, 2.0 * diff / n)
    return loss, g_dec, g_h


def scaled_cosine(h: np.ndarray, v: np.ndarray, tau: float) -> float:
    h = np.asarray(h, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nh, nv = np.linalg.norm(h), np.linalg.norm(v)
    if nh == 0.0 or nv == 0.0:
        raise ZeroVector("cosine similarity of a zero vector")
    if tau <= 0:
        raise ValueError("tau must be positive")
    return float(np.dot(h, v) / (nh * nv) / tau)


@dataclass
class ClassRepresentations:
    """Unit-norm per-class target vectors, updated as an EMA of batch class means."""

    v: dict[int, np.ndarray] = field(default_factory=dict)
    momentum: float = 0.9

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        ids = np.array(sorted(self.v), dtype=np.int64)
        return ids, np.stack([self.v[int(k)] for k in ids])

    def copy(self) -> "ClassRepresentations":
        return ClassRepresentations({k: v.copy() for k, v in self.v.items()}, self.momentum)


def _unit(x):
    n = np.linalg.norm(x)
    if n == 0.0:
        raise ZeroVector("cannot normalize a zero vector")
    return x / n


def update_class_reps(reps: ClassRepresentations, H: np.ndarray, y: np.ndarray) -> ClassRepresentations:
    out = reps.copy()
    m = reps.momentum
    H = np.asarray(H, dtype=np.float64)
    y = np.asarray(y)
    for k in np.unique(y):
        mean = H[y == k].mean(axis=0)
        k = int(k)
        if k in out.v:
            out.v[k] = _unit(m * out.v[k] + (1.0 - m) * mean)
        else:
            out.v[k] = _unit(mean)
    return out


def _contrastive_from_embedding(H, y, reps, tau):
    """Loss and dL/dH for a batch of embeddings."""
    ids, V = reps.matrix()
    pos = np.searchsorted(ids, y)
    pos = np.minimum(pos, len(ids) - 1)
    if np.any(ids[pos] != y):
        missing = sorted(set(np.asarray(y).tolist()) - set(ids.tolist()))
        raise UnknownLabel(f"labels {missing} have no class representation")
    norms = np.linalg.norm(H, axis=1, keepdims=True)
    # zero embeddings (all hidden units dead) get similarity 0 to every class
    # and no gradient
    dead = norms[:, 0] == 0.0
    norms = np.where(norms == 0.0, 1.0, norms)
    Hn = H / norms
    V = V / np.linalg.norm(V, axis=1, keepdims=True)
    cos = Hn @ V.T
    S = cos / tau
    S_max = S.max(axis=1, keepdims=True)
    E = np.exp(S - S_max)
    Z = E.sum(axis=1, keepdims=True)
    rows = np.arange(len(H))
    loss = float(np.sum(np.log(Z[:, 0]) + S_max[:, 0] - S[rows, pos]))
    G = E / Z
    G[rows, pos] -= 1.0  # dL/dS
    # dS_j/dH = (v_j - cos_j * h_hat) / (|h| tau)
    gH = (G @ V - np.sum(G * cos, axis=1, keepdims=True) * Hn) / (norms * tau)
    gH[dead] = 0.0
    return loss, gH


def contrastive_loss(model: EmbeddingModel, X: np.ndarray, y: np.ndarray,
                     reps: ClassRepresentations, tau: float) -> tuple[float, list[np.ndarray]]:
    """Summed softmax cross-entropy over scaled cosines to class representations.

    Representations are constants here; gradients cover encoder parameters only.
    """
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise EmptyBatch("contrastive_loss on an empty batch")
    X, _ = _as_batch(X, model.arch.input_dim)
    acts, pre = _forward(model.encoder, X)
    loss, gH = _contrastive_from_embedding(acts[-1], np.asarray(y), reps, tau)
    g_enc, _ = _backward(model.encoder, acts, pre, gH)
    return loss, g_enc


def joint_loss(model: EmbeddingModel, X: np.ndarray, y: np.ndarray, reps: ClassRepresentations,
               tau: float, beta: float = 1.0):
    """L_MSE + beta * L_contrastive. Returns (total, mse, contrastive, grads, embeddings)."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise EmptyBatch("joint_loss on an empty batch")
    X, _ = _as_batch(X, model.arch.input_dim)
    acts, pre = _forward(model.encoder, X)
    H = acts[-1]
    mse, g_dec, g_h = _mse_from_embedding(model, X, H)
    con = 0.0
    if beta != 0.0:
        con, g_con = _contrastive_from_embedding(H, np.asarray(y), reps, tau)
        g_h = g_h + beta * g_con
    g_enc, _ = _backward(model.encoder, acts, pre, g_h)
    return mse + beta * con, mse, con, g_enc + g_dec, H


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    epochs: int = 300
    batch_size: int = 256
    tau: float = 0.1
    beta_contrastive: float = 1.0
    seed: int = 0
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        from .errors import ConfigError

        if self.lr <= 0 or self.tau <= 0:
            raise ConfigError("lr and tau must be positive")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.beta_contrastive < 0:
            raise ConfigError("beta_contrastive must be >= 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")


def adam_step(model: EmbeddingModel, grads: list[np.ndarray], cfg: TrainConfig) -> None:
    st = model.opt_state
    st.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1 ** st.step
    c2 = 1.0 - b2 ** st.step
    params = model.parameters()
    new = []
    for i, (p, g) in enumerate(zip(params, grads)):
        st.m[i] = b1 * st.m[i] + (1.0 - b1) * g
        st.v[i] = b2 * st.v[i] + (1.0 - b2) * g * g
        new.append(p - cfg.lr * (st.m[i] / c1) / (np.sqrt(st.v[i] / c2) + cfg.adam_eps))
    model.set_parameters(new)


def stratified_order(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Shuffled order that interleaves classes so every chunk is roughly stratified."""
    y = np.asarray(y)
    key = np.empty(len(y))
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        key[idx[rng.permutation(len(idx))]] = (np.arange(len(idx)) + rng.random()) / len(idx)
    return np.argsort(key, kind="stable")


def initial_reps(model: EmbeddingModel, X: np.ndarray, y: np.ndarray, momentum: float) -> ClassRepresentations:
    return update_class_reps(ClassRepresentations({}, momentum), encode(model, X), y)


def train(model: EmbeddingModel, X: np.ndarray, y: np.ndarray, config: TrainConfig,
          reps: ClassRepresentations | None = None):
    """Train a copy of ``model``. Returns (model, reps, history).

    ``history`` is a list of per-epoch dicts with mean ``mse`` and
    ``contrastive`` batch losses.
    """
    model = model.copy()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise EmptyBatch("empty training set")
    rng = np.random.default_rng(config.seed)
    if reps is None:
        reps = initial_reps(model, X, y, config.momentum)
    else:
        reps = ClassRepresentations({k: v.copy() for k, v in reps.v.items()}, config.momentum)
        missing = [c for c in np.unique(y) if int(c) not in reps.v]
        if missing:
            sel = np.isin(y, missing)
            reps = update_class_reps(reps, encode(model, X[sel]), y[sel])
    history = []
    for epoch in range(config.epochs):
        order = stratified_order(y, rng)
        mse_sum = con_sum = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            b = order[start:start + config.batch_size]
            _, mse, con, grads, H = joint_loss(model, X[b], y[b], reps, config.tau, config.beta_contrastive)
            adam_step(model, grads, config)
            reps = update_class_reps(reps, H, y[b])
            mse_sum += mse
            con_sum += con
            n_batches += 1
        history.append({"epoch": epoch, "mse": mse_sum / n_batches, "contrastive": con_sum / n_batches})
        if epoch % 50 == 0:
            logger.debug("epoch %d mse %.5f contrastive %.5f", epoch, history[-1]["mse"], history[-1]["contrastive"])
    return model, reps, history
