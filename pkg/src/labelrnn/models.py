"""Tagger variants assembled from the layer primitives.

Three variants share the same input wiring (word window, optional class
window, label-context window, optional character-convolution feature):

  irnn       relu hidden layer over the full concatenation
  irnn-gru   GRU hidden layer over the same concatenation (a flag restricts
             the GRU input to the word window only)
  irnn-deep  one relu layer per input type, concatenated into a second
             global relu layer

A backward-direction model is the same machinery run on reversed sequences.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .corpus import (
    CHAR_PAD_ID,
    CLASS_BOS_ID,
    CLASS_EOS_ID,
    LABEL_BOL_ID,
    WORD_BOS_ID,
    WORD_EOS_ID,
    EncodedSequence,
)
from .errors import ConfigError, ModelIOError, ShapeError
from .layers import (
    char_conv_backward,
    char_conv_forward,
    embed_concat,
    embed_concat_backward,
    gru_backward,
    gru_forward,
    label_context_indices,
    output_backward,
    output_forward,
    relu_hidden_backward,
    relu_hidden_forward,
    window_indices,
)
from .mathcore import dropout_mask, xavier_init

VARIANT_IRNN = "irnn"
VARIANT_GRU = "irnn-gru"
VARIANT_DEEP = "irnn-deep"
VARIANTS = (VARIANT_IRNN, VARIANT_GRU, VARIANT_DEEP)

DIR_FWD = "fwd"
DIR_BWD = "bwd"
DIRECTIONS = (DIR_FWD, DIR_BWD)

MODEL_MAGIC = b"LRNN"
MODEL_VERSION = 1


@dataclass
class TaggerOutput:
    """Greedy predictions plus the per-position output distributions."""

    labels: np.ndarray
    dists: list


@dataclass
class TaggerModel:
    variant: str
    direction: str
    d_w: int
    d_l: int
    d_c: int
    embed_size: int
    hidden_size: int
    first_level_size: int
    char_embed_size: int
    conv_size: int
    use_classes: bool
    use_chars: bool
    ablate_label_context: bool
    gru_words_only: bool
    n_words: int
    n_labels: int
    n_classes: int
    n_chars: int
    vocab_hash: int
    params: dict = field(default_factory=dict)

    # -- structural dimensions ----------------------------------------
    @property
    def word_input_dim(self):
        return (2 * self.d_w + 1) * self.embed_size

    @property
    def label_input_dim(self):
        return self.d_l * self.embed_size

    def input_pieces(self):
        """Ordered (name, dim) of the concatenated input at each position."""
        if self.variant == VARIANT_GRU and self.gru_words_only:
            return [("w", self.word_input_dim)]
        pieces = [("w", self.word_input_dim)]
        if self.use_classes:
            pieces.append(("c", self.word_input_dim))
        pieces.append(("l", self.label_input_dim))
        if self.use_chars:
            pieces.append(("ch", self.conv_size))
        return pieces

    @property
    def input_dim(self):
        return sum(dim for _, dim in self.input_pieces())

    def weight_matrix_names(self):
        """Parameters subject to L2: weight matrices, not biases/embeddings."""
        return [
            name
            for name in self.params
            if not name.startswith("E_") and not _is_bias(name)
        ]

    def embedding_names(self):
        return [name for name in self.params if name.startswith("E_")]

    def gru_params(self):
        keys = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_c")
        return {k: self.params[k] for k in keys}


def _is_bias(name: str) -> bool:
    return name.startswith("b_") or name.startswith("Fb_")


def build_model(variant, direction, vocab, rng, *, d_w=5, d_l=5, d_c=0,
                embed_size=200, hidden_size=200, first_level_size=200,
                char_embed_size=30, conv_size=50, use_classes=False,
                use_chars=False, ablate_label_context=False,
                gru_words_only=False) -> TaggerModel:
    """Create a model with Xavier-initialized parameters in a fixed order."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    if direction not in DIRECTIONS:
        raise ConfigError(f"unknown direction {direction!r}")
    model = TaggerModel(
        variant=variant, direction=direction, d_w=d_w, d_l=d_l, d_c=d_c,
        embed_size=embed_size, hidden_size=hidden_size,
        first_level_size=first_level_size, char_embed_size=char_embed_size,
        conv_size=conv_size, use_classes=use_classes, use_chars=use_chars,
        ablate_label_context=ablate_label_context,
        gru_words_only=gru_words_only,
        n_words=vocab.n_words, n_labels=vocab.n_labels,
        n_classes=vocab.n_classes, n_chars=vocab.n_chars,
        vocab_hash=vocab.hash(),
    )
    p = model.params
    p["E_w"] = xavier_init(model.n_words, embed_size, rng)
    p["E_l"] = xavier_init(model.n_labels, embed_size, rng)
    if use_classes:
        p["E_c"] = xavier_init(model.n_classes, embed_size, rng)
    if use_chars:
        p["E_ch"] = xavier_init(model.n_chars, char_embed_size, rng)
        p["W_conv"] = xavier_init(conv_size, (2 * d_c + 1) * char_embed_size, rng)
        p["b_conv"] = np.zeros(conv_size)

    xdim = model.input_dim
    if variant == VARIANT_IRNN:
        p["H"] = xavier_init(hidden_size, xdim, rng)
        p["b_h"] = np.zeros(hidden_size)
    elif variant == VARIANT_GRU:
        for gate in ("z", "r", "h"):
            p[f"W_{gate}"] = xavier_init(hidden_size, hidden_size, rng)
            p[f"U_{gate}"] = xavier_init(hidden_size, xdim, rng)
        p["b_z"] = np.zeros(hidden_size)
        p["b_r"] = np.zeros(hidden_size)
        p["b_c"] = np.zeros(hidden_size)
    else:  # deep: one first-level layer per input piece, then a global layer
        for name, dim in model.input_pieces():
            p[f"F_{name}"] = xavier_init(first_level_size, dim, rng)
            p[f"Fb_{name}"] = np.zeros(first_level_size)
        cat = first_level_size * len(model.input_pieces())
        p["H2"] = xavier_init(hidden_size, cat, rng)
        p["b_2"] = np.zeros(hidden_size)
    p["O"] = xavier_init(model.n_labels, hidden_size, rng)
    p["b_o"] = np.zeros(model.n_labels)
    return model


# -- gradient accumulation -------------------------------------------------

class Grads:
    """Accumulates dense weight gradients and sparse embedding-row grads."""

    def __init__(self):
        self.dense = {}
        self.rows = {}

    def add(self, name, g):
        if name in self.dense:
            self.dense[name] += g
        else:
            self.dense[name] = g.copy()

    def add_rows(self, table, pairs):
        bucket = self.rows.setdefault(table, {})
        for row, vec in pairs:
            if row in bucket:
                bucket[row] = bucket[row] + vec
            else:
                bucket[row] = vec.copy()

    def scale(self, factor: float):
        for g in self.dense.values():
            g *= factor
        for bucket in self.rows.values():
            for row in bucket:
                bucket[row] = bucket[row] * factor

    def to_dense(self, model) -> dict:
        """Full gradient dict with zeros for untouched parameters."""
        out = {}
        for name, value in model.params.items():
            if name in self.dense:
                out[name] = self.dense[name]
            else:
                out[name] = np.zeros_like(value)
        for table, bucket in self.rows.items():
            for row, vec in bucket.items():
                out[table][row] += vec
        return out


# -- per-position forward/backward ------------------------------------------

def _masked(vec, mask):
    return vec if mask is None else vec * mask


def position_forward(model, seq, t, history, masks=None, h_prev=None):
    """Forward at one position; history holds previous label ids.

    masks is None at inference, or a dict of inverted-dropout masks with keys
    'w', 'c', 'l' (embedding concatenations) and 'h' (hidden activation).
    """
    p = model.params
    masks = masks or {}
    cache = {"masks": masks}

    widx = window_indices(seq.words, t, model.d_w, WORD_BOS_ID, WORD_EOS_ID)
    cache["widx"] = widx
    cache["x_w"] = _masked(embed_concat(p["E_w"], widx), masks.get("w"))
    if model.use_classes:
        cidx = window_indices(seq.classes, t, model.d_w, CLASS_BOS_ID, CLASS_EOS_ID)
        cache["cidx"] = cidx
        cache["x_c"] = _masked(embed_concat(p["E_c"], cidx), masks.get("c"))
    if model.ablate_label_context:
        lidx = [LABEL_BOL_ID] * model.d_l
    else:
        lidx = label_context_indices(history, t, model.d_l, LABEL_BOL_ID)
    cache["lidx"] = lidx
    cache["x_l"] = _masked(embed_concat(p["E_l"], lidx), masks.get("l"))
    if model.use_chars:
        x_ch, ch_cache = char_conv_forward(
            seq.chars[t], p["E_ch"], p["W_conv"], p["b_conv"], model.d_c, CHAR_PAD_ID
        )
        cache["x_ch"] = x_ch
        cache["ch_cache"] = ch_cache

    pieces = [cache[f"x_{name}"] for name, _ in model.input_pieces()]
    x = np.concatenate(pieces)
    cache["x"] = x

    if model.variant == VARIANT_IRNN:
        h, pre = relu_hidden_forward(p["H"], p["b_h"], x)
        cache["pre"] = pre
    elif model.variant == VARIANT_GRU:
        if h_prev is None:
            h_prev = np.zeros(model.hidden_size)
        h, gcache = gru_forward(model.gru_params(), x, h_prev)
        cache["gcache"] = gcache
    else:
        feats = []
        for name, _ in model.input_pieces():
            f, pre = relu_hidden_forward(p[f"F_{name}"], p[f"Fb_{name}"], cache[f"x_{name}"])
            cache[f"f_{name}"] = f
            cache[f"fpre_{name}"] = pre
            feats.append(f)
        hcat = np.concatenate(feats)
        cache["hcat"] = hcat
        h, pre2 = relu_hidden_forward(p["H2"], p["b_2"], hcat)
        cache["pre2"] = pre2

    cache["h"] = h
    h_drop = _masked(h, masks.get("h"))
    cache["h_drop"] = h_drop
    y = output_forward(p["O"], p["b_o"], h_drop)
    cache["y"] = y
    return y, cache


def _scatter_input_grad(model, cache, dx, grads):
    """Route gradient on the concatenated input back to embedding tables
    (and through the char convolution)."""
    masks = cache["masks"]
    offset = 0
    for name, dim in model.input_pieces():
        piece = dx[offset : offset + dim]
        offset += dim
        if name == "ch":
            dW, db, rows = char_conv_backward(cache["ch_cache"], model.params["W_conv"], piece)
            grads.add("W_conv", dW)
            grads.add("b_conv", db)
            grads.add_rows("E_ch", rows)
            continue
        mask = masks.get(name)
        if mask is not None:
            piece = piece * mask
        table = {"w": "E_w", "c": "E_c", "l": "E_l"}[name]
        idxs = cache[{"w": "widx", "c": "cidx", "l": "lidx"}[name]]
        grads.add_rows(table, embed_concat_backward(piece, idxs, model.embed_size))


def position_backward(model, cache, delta, grads, dh_next=None):
    """Backward at one position given delta = (y - c) at the pre-softmax
    layer; returns the gradient w.r.t. the previous hidden state (GRU only)."""
    p = model.params
    dO, db_o, dh = output_backward(p["O"], cache["h_drop"], delta)
    grads.add("O", dO)
    grads.add("b_o", db_o)
    mask_h = cache["masks"].get("h")
    if mask_h is not None:
        dh = dh * mask_h

    if model.variant == VARIANT_IRNN:
        dH, db_h, dx = relu_hidden_backward(p["H"], cache["x"], cache["pre"], dh)
        grads.add("H", dH)
        grads.add("b_h", db_h)
        _scatter_input_grad(model, cache, dx, grads)
        return None
    if model.variant == VARIANT_GRU:
        if dh_next is not None:
            dh = dh + dh_next
        ggrads, dx, dh_prev = gru_backward(model.gru_params(), cache["gcache"], dh)
        for name, g in ggrads.items():
            grads.add(name, g)
        _scatter_input_grad(model, cache, dx, grads)
        return dh_prev

    dH2, db_2, dhcat = relu_hidden_backward(p["H2"], cache["hcat"], cache["pre2"], dh)
    grads.add("H2", dH2)
    grads.add("b_2", db_2)
    offset = 0
    dx_pieces = []
    for name, dim in model.input_pieces():
        df = dhcat[offset : offset + model.first_level_size]
        offset += model.first_level_size
        dF, dFb, dxp = relu_hidden_backward(
            p[f"F_{name}"], cache[f"x_{name}"], cache[f"fpre_{name}"], df
        )
        grads.add(f"F_{name}", dF)
        grads.add(f"Fb_{name}", dFb)
        dx_pieces.append(dxp)
    _scatter_input_grad(model, cache, np.concatenate(dx_pieces), grads)
    return None


# -- sequence-level passes -----------------------------------------------

def orient(seq: EncodedSequence, direction: str) -> EncodedSequence:
    """Processing-order view: backward models consume reversed sequences."""
    if direction == DIR_FWD:
        return seq
    return EncodedSequence(
        words=seq.words[::-1].copy(),
        classes=None if seq.classes is None else seq.classes[::-1].copy(),
        chars=list(reversed(seq.chars)),
        labels=None if seq.labels is None else seq.labels[::-1].copy(),
    )


def _unorient_list(items, direction):
    return items if direction == DIR_FWD else list(reversed(items))


def predict_label(y: np.ndarray) -> int:
    """Argmax over real labels; the reserved BOL context label (index 0) is
    never predicted since it never appears as a training target."""
    if len(y) == 1:
        return 0
    return int(np.argmax(y[1:])) + 1


def make_position_masks(model, p_embed, p_hidden, rng):
    """Fresh inverted-dropout masks for one position (training mode)."""
    masks = {}
    if p_embed > 0.0:
        keep = 1.0 - p_embed
        masks["w"] = dropout_mask(model.word_input_dim, keep, rng)
        if model.use_classes:
            masks["c"] = dropout_mask(model.word_input_dim, keep, rng)
        masks["l"] = dropout_mask(model.label_input_dim, keep, rng)
    if p_hidden > 0.0:
        masks["h"] = dropout_mask(model.hidden_size, 1.0 - p_hidden, rng)
    return masks


def forward_pass_with_cache(model, oriented_seq, teacher_labels=None,
                            dropout=None, rng=None):
    """Full pass over an oriented sequence, caching every intermediate.

    With teacher_labels the label context is built from those (gold) labels;
    otherwise the model's own greedy predictions feed the context, which
    makes the pass identical to greedy tagging. dropout is an optional
    (p_embed, p_hidden) pair; it requires rng.
    """
    n = len(oriented_seq)
    caches = []
    dists = []
    predicted = []
    history = teacher_labels if teacher_labels is not None else predicted
    h_prev = None
    for t in range(n):
        masks = None
        if dropout is not None:
            masks = make_position_masks(model, dropout[0], dropout[1], rng)
        y, cache = position_forward(model, oriented_seq, t, history, masks=masks, h_prev=h_prev)
        caches.append(cache)
        dists.append(y)
        predicted.append(predict_label(y))
        if model.variant == VARIANT_GRU:
            h_prev = cache["h"]
    return caches, np.array(predicted, dtype=np.int64), dists


def tag_greedy(model: TaggerModel, seq: EncodedSequence) -> TaggerOutput:
    """Greedy decode; the label context holds the model's own predictions."""
    oriented = orient(seq, model.direction)
    _, predicted, dists = forward_pass_with_cache(model, oriented)
    if model.direction == DIR_BWD:
        predicted = predicted[::-1].copy()
        dists = list(reversed(dists))
    return TaggerOutput(labels=predicted, dists=dists)


def sequence_loss(model, seq, lam=0.0) -> float:
    """Teacher-forced total cross-entropy plus the L2 term (dropout off)."""
    oriented = orient(seq, model.direction)
    _, _, dists = forward_pass_with_cache(model, oriented, teacher_labels=oriented.labels)
    ce = -sum(np.log(dists[t][oriented.labels[t]]) for t in range(len(oriented)))
    return float(ce) + l2_term(model, lam)


def l2_term(model, lam):
    if lam == 0.0:
        return 0.0
    return 0.5 * lam * sum(float(np.sum(model.params[n] ** 2)) for n in model.weight_matrix_names())


def sequence_grads(model, seq, lam=0.0) -> dict:
    """Exact dense gradient of sequence_loss w.r.t. every parameter tensor.

    For the GRU variant the gradient is chained through the hidden state
    across all steps; for the feed-forward variants positions are
    independent under teacher forcing.
    """
    oriented = orient(seq, model.direction)
    caches, _, dists = forward_pass_with_cache(model, oriented, teacher_labels=oriented.labels)
    grads = Grads()
    dh_next = None
    for t in reversed(range(len(oriented))):
        delta = dists[t].copy()
        delta[oriented.labels[t]] -= 1.0
        dh_next = position_backward(model, caches[t], delta, grads, dh_next=dh_next)
    dense = grads.to_dense(model)
    if lam > 0.0:
        for name in model.weight_matrix_names():
            dense[name] += lam * model.params[name]
    return dense


# -- bidirectional combination ----------------------------------------------

def combine_bidirectional(yf: np.ndarray, yb: np.ndarray) -> np.ndarray:
    """Element-wise geometric mean of two distributions, renormalized.

    Renormalization is a positive scalar multiple, so the argmax matches the
    unnormalized combination.
    """
    if yf.shape != yb.shape:
        raise ShapeError(f"cannot combine distributions of shapes {yf.shape} and {yb.shape}")
    unnorm = np.sqrt(yf * yb)
    total = unnorm.sum()
    if total == 0.0:
        return unnorm
    return unnorm / total


def tag_bidirectional(fwd: TaggerModel, bwd: TaggerModel, seq) -> TaggerOutput:
    if fwd.direction != DIR_FWD or bwd.direction != DIR_BWD:
        raise ConfigError("tag_bidirectional requires a forward and a backward model")
    if fwd.vocab_hash != bwd.vocab_hash:
        raise ConfigError("forward and backward models use different vocabularies")
    of = tag_greedy(fwd, seq)
    ob = tag_greedy(bwd, seq)
    dists = [combine_bidirectional(f, b) for f, b in zip(of.dists, ob.dists)]
    labels = np.array([predict_label(d) for d in dists], dtype=np.int64)
    return TaggerOutput(labels=labels, dists=dists)


# -- model file format --------------------------------------------------------
# magic, version u32, variant u8, direction u8, flags u8, vocab hash u64,
# twelve u32 structural fields, shape table, little-endian float64 payloads.

_INT_FIELDS = (
    "d_w", "d_l", "d_c", "embed_size", "hidden_size", "first_level_size",
    "char_embed_size", "conv_size", "n_words", "n_labels", "n_classes", "n_chars",
)
_FLAG_FIELDS = ("use_classes", "use_chars", "ablate_label_context", "gru_words_only")


def save_model(model: TaggerModel, path):
    out = bytearray()
    out += MODEL_MAGIC
    out += struct.pack("<I", MODEL_VERSION)
    out += struct.pack("<BB", VARIANTS.index(model.variant), DIRECTIONS.index(model.direction))
    flags = 0
    for i, name in enumerate(_FLAG_FIELDS):
        if getattr(model, name):
            flags |= 1 << i
    out += struct.pack("<B", flags)
    out += struct.pack("<Q", model.vocab_hash)
    out += struct.pack("<12I", *(getattr(model, name) for name in _INT_FIELDS))
    names = sorted(model.params)
    out += struct.pack("<I", len(names))
    for name in names:
        encoded = name.encode("utf-8")
        arr = model.params[name]
        out += struct.pack("<H", len(encoded)) + encoded
        out += struct.pack("<I", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
    for name in names:
        out += np.ascontiguousarray(model.params[name], dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_model(path) -> TaggerModel:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return _parse_model(data)
    except (struct.error, IndexError, ValueError) as exc:
        raise ModelIOError(f"corrupt or truncated model file {path}: {exc}") from None


def _parse_model(data: bytes) -> TaggerModel:
    if data[:4] != MODEL_MAGIC:
        raise ModelIOError("not a model file (bad magic bytes)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != MODEL_VERSION:
        raise ModelIOError(f"unsupported model format version {version}")
    variant_b, direction_b, flags = struct.unpack_from("<BBB", data, 8)
    (vocab_hash,) = struct.unpack_from("<Q", data, 11)
    ints = struct.unpack_from("<12I", data, 19)
    offset = 19 + 48
    kwargs = dict(zip(_INT_FIELDS, ints))
    for i, name in enumerate(_FLAG_FIELDS):
        kwargs[name] = bool(flags & (1 << i))
    model = TaggerModel(
        variant=VARIANTS[variant_b], direction=DIRECTIONS[direction_b],
        vocab_hash=vocab_hash, **kwargs,
    )
    (n_tensors,) = struct.unpack_from("<I", data, offset)
    offset += 4
    shapes = []
    for _ in range(n_tensors):
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<I", data, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}I", data, offset)
        offset += 4 * ndim
        shapes.append((name, shape))
    expected = offset + sum(8 * int(np.prod(s)) for _, s in shapes)
    if len(data) != expected:
        raise ModelIOError(f"payload size mismatch: expected {expected} bytes, file has {len(data)}")
    for name, shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
        model.params[name] = arr.astype(np.float64)
        offset += 8 * count
    return model
