"""Merge-model caption generator.

Wiring::

    features -> dropout -> dense(relu) ---------------+
                                                      add -> dense(relu) -> dense(softmax)
    word ids -> embedding -> dropout -> LSTM -> h_T --+
"""

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import nn_core as nn
from .errors import InvalidConfig, NonFiniteLoss, ShapeMismatch, VocabMismatch
from .optim import OptimizerConfig

log = logging.getLogger(__name__)

PARAM_NAMES = (
    "img_W", "img_b",
    "embed_E",
    "lstm_W_f", "lstm_W_i", "lstm_W_o", "lstm_W_c",
    "lstm_b_f", "lstm_b_i", "lstm_b_o", "lstm_b_c",
    "dec_W", "dec_b",
    "out_W", "out_b",
)  # fmt: skip

# dropout layer ids, mixed into the per-batch mask seed
IMAGE_DROPOUT, TEXT_DROPOUT = 0, 1


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    feature_dim: int = 4096
    max_len: int = 34
    embed_dim: int = 256
    hidden_dim: int = 256
    dropout_rate: float = 0.5

    def validate(self):
        for name in ("feature_dim", "max_len", "embed_dim", "hidden_dim"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.vocab_size < 3:
            raise InvalidConfig(f"vocab_size must be >= 3 (pad + two sentinels), got {self.vocab_size}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfig(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        return self

    def param_shapes(self):
        F, E, H, V = self.feature_dim, self.embed_dim, self.hidden_dim, self.vocab_size
        shapes = {"img_W": (H, F), "img_b": (H,), "embed_E": (V, E)}
        for g in nn.LSTM_GATES:
            shapes[f"lstm_W_{g}"] = (H, H + E)
        for g in nn.LSTM_GATES:
            shapes[f"lstm_b_{g}"] = (H,)
        shapes.update({"dec_W": (H, H), "dec_b": (H,), "out_W": (V, H), "out_b": (V,)})
        return shapes

    def param_count(self):
        return sum(int(np.prod(s)) for s in self.param_shapes().values())


@dataclass
class MergeModel:
    config: ModelConfig
    params: dict
    vocab: object = None

    @property
    def dtype(self):
        return self.params["img_W"].dtype

    def astype(self, dtype):
        return MergeModel(self.config, {k: v.astype(dtype) for k, v in self.params.items()}, self.vocab)

    def lstm_cell(self):
        p = self.params
        return nn.LstmCell(*(p[f"lstm_W_{g}"] for g in nn.LSTM_GATES), *(p[f"lstm_b_{g}"] for g in nn.LSTM_GATES))

    def _check_inputs(self, features, seqs):
        cfg = self.config
        if features.ndim != 2 or features.shape[1] != cfg.feature_dim:
            raise ShapeMismatch(f"features {features.shape}, expected (batch, {cfg.feature_dim})")
        if seqs.shape != (features.shape[0], cfg.max_len):
            raise ShapeMismatch(f"seqs {seqs.shape}, expected ({features.shape[0]}, {cfg.max_len})")

    def forward(self, features, seqs, mode="infer", dropout_key=(0,)):
        """Next-word distribution, shape (batch, vocab_size).

        ``dropout_key`` seeds the masks in train mode; each dropout layer
        appends its own id so the two masks are independent.
        """
        probs, _ = self._forward(features, seqs, mode, dropout_key)
        return probs

    def _forward(self, features, seqs, mode, dropout_key):
        p, rate = self.params, self.config.dropout_rate
        features = np.asarray(features, dtype=self.dtype)
        seqs = np.asarray(seqs)
        self._check_inputs(features, seqs)
        key = tuple(dropout_key)

        x_img, img_mask = nn.dropout(features, rate, mode, key + (IMAGE_DROPOUT,))
        a_img, img_cache = nn.dense_forward(x_img, p["img_W"], p["img_b"], "relu")

        emb, emb_cache = nn.embedding_forward(seqs, p["embed_E"])
        emb, txt_mask = nn.dropout(emb, rate, mode, key + (TEXT_DROPOUT,))
        h_T, lstm_cache = nn.lstm_sequence_forward(self.lstm_cell(), emb)

        merged = nn.add_merge(a_img, h_T)
        a_dec, dec_cache = nn.dense_forward(merged, p["dec_W"], p["dec_b"], "relu")
        # softmax is applied separately so the loss can use the fused gradient
        logits, out_cache = nn.dense_forward(a_dec, p["out_W"], p["out_b"], "linear")
        probs = nn.softmax(logits)
        cache = (img_mask, img_cache, emb_cache, txt_mask, lstm_cache, dec_cache, out_cache)
        return probs, cache

    def loss(self, features, seqs, targets, mode="infer", dropout_key=(0,), with_pattern=False):
        """Forward-only loss. ``with_pattern`` also returns the ReLU on/off
        pattern as bytes, which lets a gradient check spot kink crossings."""
        probs, cache = self._forward(features, seqs, mode, dropout_key)
        loss = nn.cross_entropy(probs, targets)
        if not with_pattern:
            return loss
        pattern = np.concatenate([(cache[1][2] > 0).ravel(), (cache[5][2] > 0).ravel()])
        return loss, pattern.tobytes()

    def loss_and_grads(self, features, seqs, targets, mode="train", dropout_key=(0,)):
        probs, cache = self._forward(features, seqs, mode, dropout_key)
        targets = np.asarray(targets)
        loss = nn.cross_entropy(probs, targets)
        img_mask, img_cache, emb_cache, txt_mask, lstm_cache, dec_cache, out_cache = cache

        grads = {}
        dlogits = nn.softmax_cross_entropy_backward(probs, targets)
        d_dec, grads["out_W"], grads["out_b"] = nn.dense_backward(dlogits, out_cache)
        d_merged, grads["dec_W"], grads["dec_b"] = nn.dense_backward(d_dec, dec_cache)
        d_img, d_h = nn.add_merge_backward(d_merged)
        _, grads["img_W"], grads["img_b"] = nn.dense_backward(d_img, img_cache)
        d_emb, lstm_grads = nn.lstm_sequence_backward(d_h, lstm_cache)
        for k, v in lstm_grads.items():
            grads[f"lstm_{k}"] = v
        d_emb = nn.dropout_backward(d_emb, txt_mask)
        grads["embed_E"] = nn.embedding_backward(d_emb, emb_cache)
        return loss, grads


def build_model(config, init_seed=0, vocab=None, dtype=np.float32):
    config.validate()
    if vocab is not None and vocab.size != config.vocab_size:
        raise VocabMismatch(f"vocabulary size {vocab.size} != config vocab_size {config.vocab_size}")
    rng = np.random.default_rng(init_seed)
    H, E = config.hidden_dim, config.embed_dim
    params = {}
    params["img_W"] = nn.glorot_uniform(rng, (H, config.feature_dim), dtype)
    params["img_b"] = np.zeros(H, dtype=dtype)
    params["embed_E"] = nn.glorot_uniform(rng, (config.vocab_size, E), dtype)
    cell = nn.LstmCell.init(rng, H, E, dtype)
    for g in nn.LSTM_GATES:
        params[f"lstm_W_{g}"] = getattr(cell, f"W_{g}")
    for g in nn.LSTM_GATES:
        params[f"lstm_b_{g}"] = getattr(cell, f"b_{g}")
    params["dec_W"] = nn.glorot_uniform(rng, (H, H), dtype)
    params["dec_b"] = np.zeros(H, dtype=dtype)
    params["out_W"] = nn.glorot_uniform(rng, (config.vocab_size, H), dtype)
    params["out_b"] = np.zeros(config.vocab_size, dtype=dtype)
    return MergeModel(config, {k: params[k] for k in PARAM_NAMES}, vocab)


# ---------------------------------------------------------------- training


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    samples_per_epoch: int = 0
    checkpoints: list = field(default_factory=list)

    @property
    def epochs(self):
        return len(self.epoch_losses)


def train(
    model,
    make_stream,
    epochs,
    optimizer=None,
    checkpoint_dir=None,
    seed=0,
    on_epoch=None,
    optimizer_state=None,
):
    """Fit ``model`` in place.

    ``make_stream(epoch)`` returns the batch iterable for a 1-based epoch.
    After every epoch a checkpoint ``epoch_<k>.ckpt`` is written atomically to
    ``checkpoint_dir`` (if given). A non-finite loss or parameter aborts with
    NonFiniteLoss before anything from that epoch is saved.
    """
    from .checkpoint import save_checkpoint_file

    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    optimizer = optimizer or OptimizerConfig()
    opt = optimizer_state or optimizer.build(model.params)
    report = TrainReport()
    if checkpoint_dir is not None:
        os.makedirs(checkpoint_dir, exist_ok=True)
    for epoch in range(1, epochs + 1):
        total, n_samples = 0.0, 0
        for b, batch in enumerate(make_stream(epoch)):
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = model.loss_and_grads(
                    batch.features, batch.seqs, batch.targets, "train", dropout_key=(seed, epoch, b)
                )
                if not np.isfinite(loss):
                    raise NonFiniteLoss(epoch, b, loss)
                opt.step(model.params, grads)
            if not all(np.all(np.isfinite(p)) for p in model.params.values()):
                raise NonFiniteLoss(epoch, b, float("nan"))
            total += loss * len(batch)
            n_samples += len(batch)
        mean = total / n_samples if n_samples else 0.0
        report.epoch_losses.append(mean)
        report.samples_per_epoch = n_samples
        log.info("epoch %d/%d  loss %.6f  (%d samples)", epoch, epochs, mean, n_samples)
        if checkpoint_dir is not None:
            path = os.path.join(checkpoint_dir, f"epoch_{epoch}.ckpt")
            save_checkpoint_file(path, model, epoch=epoch, loss=mean)
            report.checkpoints.append(path)
        if on_epoch is not None:
            on_epoch(epoch, mean)
    return report


# ---------------------------------------------------------------- decoding


def greedy_decode(model, feature_vec, vocab=None, max_len=None):
    """Word-by-word argmax decoding from ``startseq``.

    The pad index and ``startseq`` are never chosen; ties go to the lowest
    index. Stops at ``endseq`` or after max_len - 1 words.
    """
    vocab = vocab if vocab is not None else model.vocab
    if vocab is None or vocab.size != model.config.vocab_size:
        raise VocabMismatch(
            f"vocabulary size {None if vocab is None else vocab.size} != model vocab_size {model.config.vocab_size}"
        )
    pad_to = model.config.max_len
    max_len = min(max_len or pad_to, pad_to)
    feature = np.asarray(feature_vec, dtype=model.dtype).reshape(1, -1)
    banned = [0, vocab.start_index]
    seq = [vocab.start_index]
    words = []
    while len(words) < max_len - 1:
        padded = np.zeros((1, pad_to), dtype=np.int64)
        padded[0, pad_to - len(seq) :] = seq
        probs = model.forward(feature, padded, "infer")[0].astype(np.float64)
        probs[banned] = -np.inf
        nxt = int(np.argmax(probs))
        if nxt == vocab.end_index:
            break
        words.append(vocab.index_to_word[nxt])
        seq.append(nxt)
    return words
