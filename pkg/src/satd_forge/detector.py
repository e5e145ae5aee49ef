"""Technical-debt detectors over token sequences: the LSTM classifier,
multinomial naive Bayes, a linear hinge-loss SVM, and the
averaged-embedding feature path.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor_core as tc
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import CheckpointError, DataError, TrainingError
from .textpipe import Vocabulary, build_vocabulary, pad_batch
from .vsm import TfIdfModel, bow_counts, fit_tfidf, transform


@dataclass
class DetectorHp:
    latent: int = 32
    layers: int = 1
    batch_size: int = 32
    pooling: str = "mean"  # last | mean | max
    epochs: int = 100
    learning_rate: float = 1e-3
    dropout: float = 0.2
    seq_cap: int = 1500
    threshold: float = 0.5

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "DetectorHp":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in known})


class DetectorNetwork:
    """Embedding -> stacked LSTM -> pooling -> dense + sigmoid."""

    def __init__(self, vocab_size: int, latent: int, n_layers: int, pooling: str, seed: int):
        rng = np.random.default_rng(seed)
        sizes = tc.detector_layer_sizes(latent, n_layers)
        self.pooling = pooling
        self.embedding = tc.Embedding(vocab_size, latent, rng)
        self.lstms = []
        prev = latent
        for size in sizes:
            self.lstms.append(tc.LstmLayer(prev, size, rng))
            prev = size
        self.dense = tc.Dense(prev, 1, rng)

    def named_params(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        named = {"embedding.M": (self.embedding.p["M"], self.embedding.g["M"])}
        for k, lstm in enumerate(self.lstms):
            for key in ("Wx", "Wh", "b"):
                named[f"lstm{k}.{key}"] = (lstm.p[key], lstm.g[key])
        for key in ("W", "b"):
            named[f"dense.{key}"] = (self.dense.p[key], self.dense.g[key])
        return named

    def zero_grads(self):
        for _, grad in self.named_params().values():
            grad[...] = 0.0

    def forward(self, idx: np.ndarray, mask: np.ndarray, drop_rng=None, drop_rate: float = 0.0):
        caches: dict = {"idx": idx, "mask": mask, "drops": []}
        X = self.embedding.forward(idx)
        if drop_rng is not None and drop_rate > 0.0:
            dmask = tc.dropout_mask(X.shape, drop_rate, drop_rng)
            X = X * dmask
            caches["drops"].append(dmask)
        caches["lstm"] = []
        for lstm in self.lstms:
            X, _, cache = lstm.forward(X, mask)
            caches["lstm"].append(cache)
            if drop_rng is not None and drop_rate > 0.0:
                dmask = tc.dropout_mask(X.shape, drop_rate, drop_rng)
                X = X * dmask
                caches["drops"].append(dmask)
        pooled, pool_cache = tc.pool_forward(X, mask, self.pooling)
        caches["pool"] = pool_cache
        logits, dense_cache = self.dense.forward(pooled)
        caches["dense"] = dense_cache
        probs = tc.sigmoid(logits[:, 0])
        return probs, caches

    def backward(self, dlogits: np.ndarray, caches: dict):
        drops = list(caches["drops"])
        dpooled = self.dense.backward(dlogits[:, None], caches["dense"])
        dstates = tc.pool_backward(dpooled, caches["pool"])
        for k in range(len(self.lstms) - 1, -1, -1):
            if drops:
                dstates = dstates * drops.pop()
            dstates, _, _ = self.lstms[k].backward(dstates, None, None, caches["lstm"][k])
        if drops:
            dstates = dstates * drops.pop()
        self.embedding.backward(dstates, caches["idx"])

    def loss_and_grads(self, idx, mask, labels, drop_rng=None, drop_rate=0.0) -> float:
        """Mean binary log-loss over the batch; fills parameter gradients."""
        self.zero_grads()
        probs, caches = self.forward(idx, mask, drop_rng, drop_rate)
        losses, _ = tc.bce_loss(labels, probs)
        dlogits = (probs - labels) / len(labels)
        self.backward(dlogits, caches)
        return float(losses.mean())


@dataclass
class DetectorModel:
    kind: str  # dl | mnb | svm | pretrained_embed_svm
    vocab: Vocabulary
    hp: DetectorHp
    threshold: float = 0.5
    network: DetectorNetwork | None = None
    class_log_prior: np.ndarray | None = None
    feature_log_prob: np.ndarray | None = None
    weights: np.ndarray | None = None
    bias: float = 0.0
    embedding: np.ndarray | None = None
    tfidf: TfIdfModel | None = None
    features: str = "bow"  # bow | tfidf | embed_average
    alpha: float = 1.0
    final_loss: float | None = None
    objective_history: list[float] = field(default_factory=list)
    seed: int = 0


def _encode_for_training(sequences, vocab, cap: int) -> list[list[int]]:
    encoded = [vocab.encode(s) for s in sequences]
    for seq in encoded:
        if len(seq) > cap:
            raise DataError(f"sequence of length {len(seq)} exceeds cap {cap}")
        if not seq:
            raise DataError("empty sequence in training data")
    return encoded


def _iter_batches(encoded, y, batch_size: int, cap: int, rng):
    order = rng.permutation(len(encoded))
    for start in range(0, len(encoded), batch_size):
        chunk = order[start : start + batch_size]
        matrix, mask = pad_batch([encoded[j] for j in chunk], cap)
        yield matrix, mask, y[chunk]


def train_dl_detector(
    sequences,
    labels,
    hp: DetectorHp,
    seed: int,
    vocab: Vocabulary | None = None,
    vocab_kind: str = "code",
    init_blocks: dict[str, np.ndarray] | None = None,
    init_mode: str = "end2end",
) -> DetectorModel:
    """Train the LSTM classifier with Adam on binary log-loss.

    The vocabulary is built from the training sequences unless one is
    passed in; pre-trained blocks may seed the embedding/LSTM weights.
    """
    labels = [int(v) for v in labels]
    if len(sequences) != len(labels):
        raise DataError("sequences and labels differ in length")
    if not sequences:
        raise DataError("empty training set")
    if len(set(labels)) < 2:
        raise TrainingError("training data contains a single class")
    if vocab is None:
        vocab = build_vocabulary(sequences, vocab_kind)
    network = DetectorNetwork(vocab.size, hp.latent, hp.layers, hp.pooling, seed)
    if init_blocks is not None:
        from .pretrainer import transplant_blocks

        transplant_blocks(network, init_blocks, init_mode)
    optimizer = tc.Adam(lr=hp.learning_rate)
    rng = np.random.default_rng(seed + 1)
    drop_rng = np.random.default_rng(seed + 2)
    encoded = _encode_for_training(sequences, vocab, hp.seq_cap)
    y_all = np.asarray(labels, dtype=np.float64)
    final_loss = 0.0
    for _ in range(hp.epochs):
        epoch_losses = []
        for matrix, mask, y in _iter_batches(encoded, y_all, hp.batch_size, hp.seq_cap, rng):
            loss = network.loss_and_grads(matrix, mask, y, drop_rng, hp.dropout)
            if not np.isfinite(loss):
                raise TrainingError("divergent loss")
            optimizer.step(network.named_params())
            epoch_losses.append(loss)
        final_loss = float(np.mean(epoch_losses))
    return DetectorModel(
        kind="dl",
        vocab=vocab,
        hp=hp,
        threshold=hp.threshold,
        network=network,
        final_loss=final_loss,
        seed=seed,
    )


def _featurize(model: DetectorModel, sequence) -> dict[int, float]:
    if model.features == "tfidf":
        if model.tfidf is None:
            raise DataError("model has no fitted TF-IDF state")
        return transform(sequence, model.vocab, model.tfidf)
    return bow_counts(sequence, model.vocab)


def _sparse_dot(weights: np.ndarray, vec: dict[int, float]) -> float:
    return float(sum(weights[i] * v for i, v in vec.items()))


def predict(model: DetectorModel, sequence) -> tuple[float, bool]:
    """Probability and label for one token sequence.

    The DL detector calls ties at the threshold positive; the SVM calls a
    zero margin negative.
    """
    if not sequence:
        raise DataError("cannot classify an empty sequence")
    if model.kind == "dl":
        if len(sequence) > model.hp.seq_cap:
            raise DataError(f"sequence of length {len(sequence)} exceeds cap {model.hp.seq_cap}")
        matrix, mask = pad_batch([model.vocab.encode(sequence)], model.hp.seq_cap)
        probs, _ = model.network.forward(matrix, mask)
        p = float(probs[0])
        return p, p >= model.threshold
    if model.kind == "mnb":
        vec = _featurize(model, sequence)
        scores = model.class_log_prior.copy()
        for c in range(2):
            scores[c] += sum(model.feature_log_prob[c, i] * v for i, v in vec.items())
        shifted = scores - scores.max()
        probs = np.exp(shifted) / np.exp(shifted).sum()
        return float(probs[1]), bool(scores[1] > scores[0])
    if model.kind in ("svm", "pretrained_embed_svm"):
        if model.kind == "pretrained_embed_svm":
            feats = embed_average(sequence, model.vocab, model.embedding)
            margin = float(model.weights @ feats + model.bias)
        else:
            margin = _sparse_dot(model.weights, _featurize(model, sequence)) + model.bias
        return float(tc.sigmoid(margin)), margin > 0
    raise DataError(f"unknown detector kind: {model.kind!r}")


def train_mnb(vectors, labels, alpha: float = 1.0, vocab_size: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Laplace-smoothed multinomial naive Bayes over sparse count vectors.

    Returns (class_log_prior, feature_log_prob) for classes (0, 1).
    """
    if alpha <= 0:
        raise DataError(f"smoothing parameter must be positive, got {alpha}")
    labels = [int(v) for v in labels]
    if not vectors or len(vectors) != len(labels):
        raise DataError("empty or mismatched training vectors")
    n_class = np.array([labels.count(0), labels.count(1)], dtype=np.float64)
    if (n_class == 0).any():
        raise DataError("both classes must be present to fit naive Bayes")
    counts = np.zeros((2, vocab_size))
    for vec, y in zip(vectors, labels):
        for idx, value in vec.items():
            counts[y, idx] += value
    totals = counts.sum(axis=1, keepdims=True)
    feature_log_prob = np.log(counts + alpha) - np.log(totals + alpha * vocab_size)
    class_log_prior = np.log(n_class / n_class.sum())
    return class_log_prior, feature_log_prob


def train_linear_svm(
    vectors,
    labels,
    lam: float = 1e-2,
    epochs: int = 20,
    seed: int = 0,
    dim: int = 0,
) -> tuple[np.ndarray, float, list[float]]:
    """Stochastic sub-gradient descent on the L2-regularized hinge loss.

    Labels are -1/+1; the unregularized bias moves only on margin
    violations. Returns (weights, bias, per-epoch objective values).
    """
    labels = [int(v) for v in labels]
    if any(y not in (-1, 1) for y in labels):
        raise DataError("SVM labels must be -1 or +1")
    w = np.zeros(dim)
    b = 0.0
    rng = np.random.default_rng(seed)
    t = 0
    history: list[float] = []

    def objective() -> float:
        hinge = 0.0
        for vec, y in zip(vectors, labels):
            hinge += max(0.0, 1.0 - y * (_sparse_dot(w, vec) + b))
        return 0.5 * lam * float(w @ w) + hinge / len(vectors)

    for _ in range(epochs):
        for j in rng.permutation(len(vectors)):
            t += 1
            eta = 1.0 / (lam * t)
            vec, y = vectors[j], labels[j]
            margin = y * (_sparse_dot(w, vec) + b)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                for idx, value in vec.items():
                    w[idx] += eta * y * value
                b += eta * y
        history.append(objective())
    return w, b, history


def embed_average(sequence, vocab: Vocabulary, embedding: np.ndarray) -> np.ndarray:
    """Mean embedding of the in-vocabulary tokens of a sequence."""
    indices = [i for i in vocab.encode(sequence) if i != 0]
    if not indices:
        warnings.warn("sequence has no in-vocabulary tokens; using a zero vector", stacklevel=2)
        return np.zeros(embedding.shape[1])
    return embedding[indices].mean(axis=0)


def fit_traditional(
    sequences,
    labels,
    kind: str,
    hp: DetectorHp,
    features: str = "bow",
    alpha: float = 1.0,
    lam: float = 1e-2,
    epochs: int = 20,
    seed: int = 0,
    vocab: Vocabulary | None = None,
    vocab_kind: str = "code",
    embedding: np.ndarray | None = None,
) -> DetectorModel:
    """Fit MNB or the SVM on featurized sequences (bow/tfidf/embed_average)."""
    labels = [int(v) for v in labels]
    if vocab is None:
        vocab = build_vocabulary(sequences, vocab_kind)
    model = DetectorModel(
        kind=kind, vocab=vocab, hp=hp, features=features, alpha=alpha, seed=seed
    )
    if kind == "pretrained_embed_svm":
        if embedding is None:
            raise DataError("pretrained_embed_svm requires an embedding matrix")
        model.embedding = embedding
        feats = [embed_average(s, vocab, embedding) for s in sequences]
        dense = [{i: float(v) for i, v in enumerate(f) if v != 0.0} for f in feats]
        svm_labels = [1 if y == 1 else -1 for y in labels]
        w, b, history = train_linear_svm(
            dense, svm_labels, lam=lam, epochs=epochs, seed=seed, dim=embedding.shape[1]
        )
        model.weights, model.bias, model.objective_history = w, b, history
        model.features = "embed_average"
        return model

    if features == "tfidf":
        model.tfidf = fit_tfidf(sequences, vocab)
        vectors = [transform(s, vocab, model.tfidf) for s in sequences]
    else:
        vectors = [bow_counts(s, vocab) for s in sequences]

    if kind == "mnb":
        prior, log_prob = train_mnb(vectors, labels, alpha=alpha, vocab_size=vocab.size)
        model.class_log_prior, model.feature_log_prob = prior, log_prob
    elif kind == "svm":
        svm_labels = [1 if y == 1 else -1 for y in labels]
        w, b, history = train_linear_svm(
            vectors, svm_labels, lam=lam, epochs=epochs, seed=seed, dim=vocab.size
        )
        model.weights, model.bias, model.objective_history = w, b, history
    else:
        raise DataError(f"unknown traditional detector kind: {kind!r}")
    return model


def save_detector(model: DetectorModel, path):
    header = {
        "hp": model.hp.to_dict(),
        "vocab_words": model.vocab.words,
        "vocab_kind": model.vocab.kind,
        "threshold": model.threshold,
        "features": model.features,
        "alpha": model.alpha,
        "seed": model.seed,
    }
    blocks: list[tuple[str, np.ndarray]] = []
    if model.kind == "dl":
        net = model.network
        blocks.append(("embedding.M", net.embedding.p["M"]))
        for k, lstm in enumerate(net.lstms):
            for key in ("Wx", "Wh", "b"):
                blocks.append((f"lstm{k}.{key}", lstm.p[key]))
        blocks.append(("dense.W", net.dense.p["W"]))
        blocks.append(("dense.b", net.dense.p["b"]))
    elif model.kind == "mnb":
        blocks.append(("class_log_prior", model.class_log_prior))
        blocks.append(("feature_log_prob", model.feature_log_prob))
    elif model.kind in ("svm", "pretrained_embed_svm"):
        if model.kind == "pretrained_embed_svm":
            blocks.append(("embedding.M", model.embedding))
        blocks.append(("svm.w", model.weights))
        blocks.append(("svm.b", np.array([model.bias])))
    else:
        raise DataError(f"cannot save detector of kind {model.kind!r}")
    if model.tfidf is not None:
        header["tfidf_n_documents"] = model.tfidf.n_documents
        df = np.zeros(model.vocab.size)
        for idx, value in model.tfidf.df.items():
            df[idx] = value
        blocks.append(("tfidf.df", df))
    save_checkpoint(path, model.kind, header, blocks)


def load_detector(path) -> DetectorModel:
    header, blocks = load_checkpoint(path)
    kind = header["kind"]
    vocab = Vocabulary(words=list(header["vocab_words"]), kind=header["vocab_kind"])
    hp = DetectorHp.from_dict(header["hp"])
    model = DetectorModel(
        kind=kind,
        vocab=vocab,
        hp=hp,
        threshold=header.get("threshold", 0.5),
        features=header.get("features", "bow"),
        alpha=header.get("alpha", 1.0),
        seed=header.get("seed", 0),
    )
    if kind == "dl":
        network = DetectorNetwork(vocab.size, hp.latent, hp.layers, hp.pooling, model.seed)
        network.embedding.p["M"][...] = blocks["embedding.M"]
        for k, lstm in enumerate(network.lstms):
            for key in ("Wx", "Wh", "b"):
                lstm.p[key][...] = blocks[f"lstm{k}.{key}"]
        network.dense.p["W"][...] = blocks["dense.W"]
        network.dense.p["b"][...] = blocks["dense.b"]
        model.network = network
    elif kind == "mnb":
        model.class_log_prior = blocks["class_log_prior"]
        model.feature_log_prob = blocks["feature_log_prob"]
    elif kind in ("svm", "pretrained_embed_svm"):
        model.weights = blocks["svm.w"]
        model.bias = float(blocks["svm.b"][0])
        if kind == "pretrained_embed_svm":
            model.embedding = blocks["embedding.M"]
    else:
        raise CheckpointError(f"unknown detector kind in checkpoint: {kind!r}")
    if "tfidf.df" in blocks:
        df = {i: int(v) for i, v in enumerate(blocks["tfidf.df"]) if v > 0}
        model.tfidf = TfIdfModel(
            vocab_size=vocab.size, n_documents=int(header["tfidf_n_documents"]), df=df
        )
    return model
