"""Training recipe: loss, SGD with momentum, linear learning-rate decay,
dropout + L2 regularization, dev-based model selection, bidirectional
fine-tuning, and a finite-difference gradient-check harness.

Taggers train with per-position stochastic updates over shuffled sentences;
the label context is teacher-forced (gold previous labels) unless a scheduled
probability of feeding back predictions is configured.
"""

import copy
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .corpus import decode_labels
from .errors import ConfigError, ShapeError
from .mathcore import new_rng
from .metrics import f1_chunks, token_accuracy
from .models import (
    DIR_FWD,
    Grads,
    VARIANT_GRU,
    build_model,
    forward_pass_with_cache,
    combine_bidirectional,
    l2_term,
    make_position_masks,
    orient,
    position_backward,
    position_forward,
    predict_label,
    sequence_grads,
    sequence_loss,
    tag_bidirectional,
    tag_greedy,
)


@dataclass
class TrainConfig:
    """Every training hyperparameter, defaulted to the published recipe
    (ATIS-style contexts and dropout; see media_like() for the other preset)."""

    embed_size: int = 200
    hidden_size: int = 200
    hidden_size_all_inputs: int = 256
    first_level_size: int = 200
    char_embed_size: int = 30
    conv_size: int = 50
    d_w: int = 5
    d_l: int = 5
    d_c: int = 0
    lr0: float = 0.5
    momentum: float = 0.5  # 0.9 overshoots badly at lr0=0.5 with per-sentence steps
    lambda_l2: float = 0.01
    lambda_l2_bidir: float = 3e-4
    dropout_hidden: float = 0.5
    dropout_embed: float = 0.2
    epochs_fwd_bwd: int = 30
    epochs_bidir: int = 8
    epochs_nnlm_word: int = 30
    epochs_nnlm_label: int = 20
    nnlm_context: int = 4
    seed: int = 1234
    min_count: int = 1
    lowercase: bool = True
    use_classes: bool = False
    use_chars: bool = False
    ablate_label_context: bool = False
    gru_words_only: bool = False
    l2_include_all: bool = False
    dev_metric: str = "accuracy"  # or "f1"
    freeze_embeddings_bidir: bool = False
    max_grad_norm: float = 0.0  # 0 disables clipping
    predicted_label_prob: float = 0.0
    chunk_mode: str = "bio-suffix"

    def validate(self):
        if not 0.0 < self.lr0:
            raise ConfigError("lr0 must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        for name in ("dropout_hidden", "dropout_embed", "predicted_label_prob"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must be in [0, 1)")
        if self.lambda_l2 < 0 or self.lambda_l2_bidir < 0:
            raise ConfigError("L2 coefficients must be non-negative")
        if self.d_w < 0 or self.d_c < 0 or self.d_l < 1:
            raise ConfigError("window sizes must satisfy d_w >= 0, d_c >= 0, d_l >= 1")
        if self.dev_metric not in ("accuracy", "f1"):
            raise ConfigError(f"unknown dev metric {self.dev_metric!r}")

    def resolved_hidden_size(self) -> int:
        """256 when all input types are active, 200 otherwise."""
        if self.use_classes and self.use_chars:
            return self.hidden_size_all_inputs
        return self.hidden_size

    @classmethod
    def atis_like(cls, **overrides) -> "TrainConfig":
        return cls(**overrides)

    @classmethod
    def media_like(cls, **overrides) -> "TrainConfig":
        base = dict(d_w=3, conv_size=80, dropout_embed=0.15)
        base.update(overrides)
        return cls(**base)

    def to_kv(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    @classmethod
    def from_kv(cls, text: str) -> "TrainConfig":
        known = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected key=value, got {line!r}")
            key, raw = line.split("=", 1)
            key = key.strip()
            raw = raw.strip()
            if key not in known:
                raise ConfigError(f"config line {lineno}: unknown key {key!r}")
            default = getattr(cls(), key)
            if isinstance(default, bool):
                values[key] = raw.lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                values[key] = int(raw)
            elif isinstance(default, float):
                values[key] = float(raw)
            else:
                values[key] = raw
        return cls(**values)


@dataclass
class TrainLogEntry:
    epoch: int
    lr: float
    train_loss: float
    dev_acc: float
    dev_f1: float

    def line(self) -> str:
        return f"{self.epoch}\t{self.lr:.6f}\t{self.train_loss:.6f}\t{self.dev_acc:.4f}\t{self.dev_f1:.4f}"


def write_log(entries, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch\tlr\ttrain_loss\tdev_acc\tdev_f1\n")
        for entry in entries:
            fh.write(entry.line() + "\n")


def lr_at(epoch: int, total_epochs: int, lr0: float) -> float:
    """Linear decay; the final epoch runs at lr0/total_epochs, never 0."""
    if not 0 <= epoch < total_epochs:
        raise ConfigError(f"epoch {epoch} out of range [0, {total_epochs})")
    return lr0 * (1.0 - epoch / total_epochs)


def position_loss(y: np.ndarray, gold: int, model=None, lam: float = 0.0) -> float:
    """Cross-entropy -log y[gold] plus the (lam/2)*sum(W^2) penalty."""
    ce = -float(np.log(y[gold]))
    if model is None or lam == 0.0:
        return ce
    return ce + l2_term(model, lam)


class SgdMomentum:
    """v <- mu*v - lr*(grad + lam*w); w <- w + v for weights and biases.

    Embedding tables are updated plainly on touched rows only; a decaying
    velocity over a mostly-untouched table is ill-defined, so embeddings get
    no momentum (and no L2 unless l2_include_all).
    """

    def __init__(self, model, momentum: float, lam: float, l2_include_all: bool = False,
                 max_grad_norm: float = 0.0, freeze_embeddings: bool = False):
        self.model = model
        self.momentum = momentum
        self.lam = lam
        self.l2_include_all = l2_include_all
        self.max_grad_norm = max_grad_norm
        self.freeze_embeddings = freeze_embeddings
        self.l2_names = set(model.weight_matrix_names())
        if l2_include_all:
            self.l2_names = {n for n in model.params if not n.startswith("E_")}
        self.velocity = {
            name: np.zeros_like(value)
            for name, value in model.params.items()
            if not name.startswith("E_")
        }

    def _clip(self, g):
        if self.max_grad_norm <= 0.0:
            return g
        norm = float(np.linalg.norm(g))
        if norm > self.max_grad_norm:
            return g * (self.max_grad_norm / norm)
        return g

    def step(self, grads: Grads, lr: float):
        for name, g in grads.dense.items():
            if g.shape != self.model.params[name].shape:
                raise ShapeError(f"gradient shape {g.shape} does not match {name}")
            w = self.model.params[name]
            total = self._clip(g)
            if self.lam > 0.0 and name in self.l2_names:
                total = total + self.lam * w
            v = self.velocity[name]
            v *= self.momentum
            v -= lr * total
            w += v
        if self.freeze_embeddings:
            return
        for table, bucket in grads.rows.items():
            w = self.model.params[table]
            for row, vec in bucket.items():
                g = self._clip(vec)
                if self.l2_include_all and self.lam > 0.0:
                    g = g + self.lam * w[row]
                w[row] -= lr * g


def _dev_scores(tag_fn, dev_seqs, vocab, chunk_mode):
    golds, preds = [], []
    for seq in dev_seqs:
        out = tag_fn(seq)
        golds.append(decode_labels(seq.labels, vocab))
        preds.append(decode_labels(out.labels, vocab))
    acc = token_accuracy(golds, preds)
    f1 = f1_chunks(golds, preds, chunk_mode).f1
    return acc, f1


def _selection_score(entry: TrainLogEntry, metric: str) -> float:
    return entry.dev_acc if metric == "accuracy" else entry.dev_f1


def _train_sentence(model, opt, seq, lr, config, rng) -> float:
    """One stochastic update from one sentence; returns the summed data loss.

    Per-position gradients (teacher-forced label context, wide word window)
    are averaged over the sentence and applied once. The hidden state
    h_{t-1} (GRU) is treated as a constant in each position's backward pass:
    wide-context backprop, no unrolling through time at training.
    """
    oseq = orient(seq, model.direction)
    dropout = None
    if config.dropout_embed > 0.0 or config.dropout_hidden > 0.0:
        dropout = (config.dropout_embed, config.dropout_hidden)
    history = []
    h_prev = None
    total = 0.0
    grads = Grads()
    n = len(oseq)
    for t in range(n):
        masks = None
        if dropout is not None:
            masks = make_position_masks(model, dropout[0], dropout[1], rng)
        y, cache = position_forward(model, oseq, t, history, masks=masks, h_prev=h_prev)
        gold = int(oseq.labels[t])
        total += -float(np.log(max(y[gold], 1e-300)))
        delta = y.copy()
        delta[gold] -= 1.0
        position_backward(model, cache, delta, grads)
        if model.variant == VARIANT_GRU:
            h_prev = cache["h"]
        if config.predicted_label_prob > 0.0 and rng.random() < config.predicted_label_prob:
            history.append(predict_label(y))
        else:
            history.append(gold)
    grads.scale(1.0 / n)
    opt.step(grads, lr)
    return total


def train_tagger(train_seqs, dev_seqs, vocab, config: TrainConfig, variant: str,
                 direction: str, init_word_emb=None, init_label_emb=None, rng=None):
    """Full training of one directional tagger; returns (dev-best model, log)."""
    config.validate()
    if not train_seqs:
        raise ConfigError("training set is empty")
    if rng is None:
        rng = new_rng(config.seed)
    model = build_model(
        variant, direction, vocab, rng,
        d_w=config.d_w, d_l=config.d_l, d_c=config.d_c,
        embed_size=config.embed_size, hidden_size=config.resolved_hidden_size(),
        first_level_size=config.first_level_size,
        char_embed_size=config.char_embed_size, conv_size=config.conv_size,
        use_classes=config.use_classes, use_chars=config.use_chars,
        ablate_label_context=config.ablate_label_context,
        gru_words_only=config.gru_words_only,
    )
    for table, init in (("E_w", init_word_emb), ("E_l", init_label_emb)):
        if init is not None:
            if init.shape != model.params[table].shape:
                raise ShapeError(
                    f"pretrained {table} has shape {init.shape}, model expects {model.params[table].shape}"
                )
            model.params[table] = init.copy()

    opt = SgdMomentum(model, config.momentum, config.lambda_l2,
                      l2_include_all=config.l2_include_all,
                      max_grad_norm=config.max_grad_norm)
    log = []
    best = None
    best_score = -1.0
    n_positions = sum(len(s) for s in train_seqs)
    for epoch in range(config.epochs_fwd_bwd):
        lr = lr_at(epoch, config.epochs_fwd_bwd, config.lr0)
        total = 0.0
        for si in rng.permutation(len(train_seqs)):
            total += _train_sentence(model, opt, train_seqs[si], lr, config, rng)
        dev_acc, dev_f1 = _dev_scores(lambda s: tag_greedy(model, s), dev_seqs, vocab, config.chunk_mode)
        entry = TrainLogEntry(epoch, lr, total / n_positions, dev_acc, dev_f1)
        log.append(entry)
        score = _selection_score(entry, config.dev_metric)
        if score > best_score:
            best_score = score
            best = copy.deepcopy(model)
    return best, log


def train_bidirectional(fwd, bwd, train_seqs, dev_seqs, vocab, config: TrainConfig, rng=None):
    """Joint fine-tuning through the geometric-mean combination.

    The cross-entropy of the combined (renormalized) distribution has
    gradient (combined - onehot)/2 at each branch's pre-softmax layer, so
    each model receives half of the combined error signal. Updates happen
    once per sentence, after both directional passes.
    """
    config.validate()
    if fwd.direction != DIR_FWD:
        raise ConfigError("first model must be the forward one")
    if not train_seqs:
        raise ConfigError("training set is empty")
    if rng is None:
        rng = new_rng(config.seed)
    fwd = copy.deepcopy(fwd)
    bwd = copy.deepcopy(bwd)
    lam = config.lambda_l2_bidir
    opts = {
        "f": SgdMomentum(fwd, config.momentum, lam, l2_include_all=config.l2_include_all,
                         max_grad_norm=config.max_grad_norm,
                         freeze_embeddings=config.freeze_embeddings_bidir),
        "b": SgdMomentum(bwd, config.momentum, lam, l2_include_all=config.l2_include_all,
                         max_grad_norm=config.max_grad_norm,
                         freeze_embeddings=config.freeze_embeddings_bidir),
    }
    dropout = None
    if config.dropout_embed > 0.0 or config.dropout_hidden > 0.0:
        dropout = (config.dropout_embed, config.dropout_hidden)
    log = []
    # Seed selection with the untouched pair: the pure combination is already
    # a valid candidate, so fine-tuning can only improve the dev score.
    acc0, f10 = _dev_scores(
        lambda s: tag_bidirectional(fwd, bwd, s), dev_seqs, vocab, config.chunk_mode
    )
    best = (copy.deepcopy(fwd), copy.deepcopy(bwd))
    best_score = _selection_score(TrainLogEntry(-1, 0.0, 0.0, acc0, f10), config.dev_metric)
    n_positions = sum(len(s) for s in train_seqs)
    for epoch in range(config.epochs_bidir):
        lr = lr_at(epoch, config.epochs_bidir, config.lr0)
        total = 0.0
        for si in rng.permutation(len(train_seqs)):
            seq = train_seqs[si]
            n = len(seq)
            of = orient(seq, fwd.direction)
            ob = orient(seq, bwd.direction)
            cf, _, df = forward_pass_with_cache(fwd, of, teacher_labels=of.labels,
                                                dropout=dropout, rng=rng)
            cb, _, db = forward_pass_with_cache(bwd, ob, teacher_labels=ob.labels,
                                                dropout=dropout, rng=rng)
            gf, gb = Grads(), Grads()
            deltas_b = [None] * n
            dh_next = None
            for t in reversed(range(n)):
                combined = combine_bidirectional(df[t], db[n - 1 - t])
                gold = int(of.labels[t])
                total += -float(np.log(max(combined[gold], 1e-300)))
                delta = 0.5 * combined
                delta[gold] -= 0.5
                dh_next = position_backward(fwd, cf[t], delta, gf, dh_next=dh_next)
                deltas_b[n - 1 - t] = delta
            dh_next = None
            for t in reversed(range(n)):
                dh_next = position_backward(bwd, cb[t], deltas_b[t], gb, dh_next=dh_next)
            gf.scale(1.0 / n)
            gb.scale(1.0 / n)
            opts["f"].step(gf, lr)
            opts["b"].step(gb, lr)
        dev_acc, dev_f1 = _dev_scores(
            lambda s: tag_bidirectional(fwd, bwd, s), dev_seqs, vocab, config.chunk_mode
        )
        entry = TrainLogEntry(epoch, lr, total / n_positions, dev_acc, dev_f1)
        log.append(entry)
        score = _selection_score(entry, config.dev_metric)
        if score > best_score:
            best_score = score
            best = (copy.deepcopy(fwd), copy.deepcopy(bwd))
    return best[0], best[1], log


def gradient_check(model, seq, epsilon: float = 1e-5, rng=None,
                   samples_per_tensor: int = 50) -> dict:
    """Max relative error of analytic vs central-difference gradients.

    Checks the exact gradient of the teacher-forced total sequence loss
    (dropout off, no L2), sampling coordinates per parameter tensor.
    """
    if rng is None:
        rng = new_rng(0)
    analytic = sequence_grads(model, seq)
    report = {}
    for name, w in model.params.items():
        flat = w.reshape(-1)
        n = flat.size
        count = min(samples_per_tensor, n)
        coords = rng.choice(n, size=count, replace=False)
        worst = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + epsilon
            plus = sequence_loss(model, seq)
            flat[c] = orig - epsilon
            minus = sequence_loss(model, seq)
            flat[c] = orig
            fd = (plus - minus) / (2.0 * epsilon)
            a = analytic[name].reshape(-1)[c]
            denom = max(abs(a), abs(fd), 1e-8)
            if abs(a) < 1e-10 and abs(fd) < 1e-10:
                continue
            worst = max(worst, abs(a - fd) / denom)
        report[name] = worst
    return report
