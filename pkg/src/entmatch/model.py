"""The deep pair-matching model.

Architecture, per candidate pair:

  1. every attribute value is tokenized and embedded (frozen vectors by
     default), then run through ONE bidirectional GRU shared by all
     attributes and all datasets; the attribute vector is the
     concatenation of the last hidden state of each direction,
  2. per-attribute similarity is the elementwise absolute difference of
     the two attribute vectors,
  3. the record similarity is the elementwise SUM of the per-attribute
     similarities, which keeps its width independent of the schema size,
  4. a two-layer highway MLP plus an affine projection produces two
     logits (non-match, match),
  5. an architecturally identical classifier behind a gradient-reversal
     connection predicts which dataset the pair came from, which is what
     makes adversarial dataset adaptation possible.

All forward math runs batched: sequences are right-padded to the longest
length in the batch and a 0/1 mask holds the hidden state fixed past the
true end, so an empty value encodes to the zero vector by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import NumericError, ShapeError, Tape, Tensor, softmax_probs
from .data import ConfigError, RecordPair
from .text import DEFAULT_TOKENIZER, EmbeddingStore, TokenizerConfig, tokenize

MATCH, NON_MATCH = 1, 0


@dataclass(frozen=True)
class ModelConfig:
    embedding_dim: int = 300
    hidden_size: int = 150
    seed: int = 1
    reversal_lambda: float = 1.0
    fine_tune_embeddings: bool = False
    dataset_mode: str = "per-dataset"     # or "source-vs-target"

    def __post_init__(self):
        if self.embedding_dim < 1 or self.hidden_size < 1:
            raise ConfigError("embedding_dim and hidden_size must be positive")
        if self.dataset_mode not in ("per-dataset", "source-vs-target"):
            raise ConfigError(f"unknown dataset_mode {self.dataset_mode!r}")
        if self.reversal_lambda < 0:
            raise ConfigError("reversal_lambda must be non-negative")


@dataclass
class GruDirection:
    """One direction of the GRU: W_* are hidden x input, U_* hidden x hidden."""
    W_z: Tensor
    U_z: Tensor
    b_z: Tensor
    W_r: Tensor
    U_r: Tensor
    b_r: Tensor
    W_h: Tensor
    U_h: Tensor
    b_h: Tensor

    def tensors(self):
        return [self.W_z, self.U_z, self.b_z, self.W_r, self.U_r, self.b_r,
                self.W_h, self.U_h, self.b_h]


@dataclass
class HighwayMlp:
    """Stack of gated square layers followed by an affine projection."""
    layers: list[dict[str, Tensor]]
    W_out: Tensor
    b_out: Tensor

    def tensors(self):
        out = []
        for layer in self.layers:
            out.extend(layer.values())
        out.extend([self.W_out, self.b_out])
        return out


@dataclass
class PairActivation:
    """Intermediate values for one classified pair."""
    attribute_left: list[np.ndarray]
    attribute_right: list[np.ndarray]
    similarities: list[np.ndarray]
    record_similarity: np.ndarray
    logits: np.ndarray
    probability: float
    dataset_logits: np.ndarray | None = None


def _uniform(rng, fan_in: int, shape, name: str) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True, name=name)


def _zeros(shape, name: str) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def _init_gru(rng, dim: int, hidden: int, prefix: str) -> GruDirection:
    return GruDirection(
        W_z=_uniform(rng, dim, (hidden, dim), f"{prefix}.W_z"),
        U_z=_uniform(rng, hidden, (hidden, hidden), f"{prefix}.U_z"),
        b_z=_zeros(hidden, f"{prefix}.b_z"),
        W_r=_uniform(rng, dim, (hidden, dim), f"{prefix}.W_r"),
        U_r=_uniform(rng, hidden, (hidden, hidden), f"{prefix}.U_r"),
        b_r=_zeros(hidden, f"{prefix}.b_r"),
        W_h=_uniform(rng, dim, (hidden, dim), f"{prefix}.W_h"),
        U_h=_uniform(rng, hidden, (hidden, hidden), f"{prefix}.U_h"),
        b_h=_zeros(hidden, f"{prefix}.b_h"),
    )


def _init_highway(rng, width: int, n_layers: int, n_out: int, prefix: str) -> HighwayMlp:
    layers = []
    for i in range(n_layers):
        layers.append({
            "W_t": _uniform(rng, width, (width, width), f"{prefix}.l{i}.W_t"),
            "b_t": _zeros(width, f"{prefix}.l{i}.b_t"),
            "W_g": _uniform(rng, width, (width, width), f"{prefix}.l{i}.W_g"),
            "b_g": _zeros(width, f"{prefix}.l{i}.b_g"),
        })
    return HighwayMlp(layers,
                      W_out=_uniform(rng, width, (n_out, width), f"{prefix}.W_out"),
                      b_out=_zeros(n_out, f"{prefix}.b_out"))


@dataclass
class EncodedPair:
    """A RecordPair with tokenized attributes and cached token matrices."""
    pair: RecordPair
    left_tokens: list[list[str]]
    right_tokens: list[list[str]]
    left_vecs: list[np.ndarray]
    right_vecs: list[np.ndarray]
    dataset_id: int = 0

    @property
    def pair_id(self) -> str:
        return self.pair.pair_id

    @property
    def label(self) -> int | None:
        return self.pair.label

    def relabeled(self, label: int) -> "EncodedPair":
        clone = replace(self.pair, label=label)
        return EncodedPair(clone, self.left_tokens, self.right_tokens,
                           self.left_vecs, self.right_vecs, self.dataset_id)


def encode_pairs(store: EmbeddingStore, schema: list[str], pairs: list[RecordPair],
                 tokenizer: TokenizerConfig = DEFAULT_TOKENIZER,
                 dataset_id: int = 0) -> list[EncodedPair]:
    """Tokenize and embed every attribute once, up front."""
    out = []
    for p in pairs:
        lt = [tokenize(p.left.get(a, ""), tokenizer) for a in schema]
        rt = [tokenize(p.right.get(a, ""), tokenizer) for a in schema]
        out.append(EncodedPair(
            p, lt, rt,
            [store.embed_sequence(t) for t in lt],
            [store.embed_sequence(t) for t in rt],
            dataset_id))
    return out


class DeepERModel:
    """Parameter container plus the batched forward pass.

    The GRU parameters are a single object used for every attribute and
    every dataset; the matching and dataset classifiers are structurally
    identical highway MLPs that differ only in output width.
    """

    N_HIGHWAY_LAYERS = 2
    N_CLASSES = 2

    def __init__(self, schema: list[str], store: EmbeddingStore,
                 config: ModelConfig = ModelConfig(),
                 dataset_names: list[str] | None = None,
                 tokenizer: TokenizerConfig = DEFAULT_TOKENIZER):
        if not schema:
            raise ConfigError("schema must name at least one attribute")
        if len(set(schema)) != len(schema):
            raise ConfigError("schema attributes must be unique")
        if store.dim != config.embedding_dim:
            raise ConfigError(f"store dimension {store.dim} does not match "
                              f"config embedding_dim {config.embedding_dim}")
        self.schema = list(schema)
        self.store = store
        self.config = config
        self.tokenizer = tokenizer
        self.version = 0
        rng = np.random.default_rng(config.seed)
        d, h = config.embedding_dim, config.hidden_size
        self.gru_fwd = _init_gru(rng, d, h, "gru.fwd")
        self.gru_bwd = _init_gru(rng, d, h, "gru.bwd")
        width = 2 * h
        self.matching_mlp = _init_highway(rng, width, self.N_HIGHWAY_LAYERS,
                                          self.N_CLASSES, "match")
        self.dataset_names: list[str] | None = None
        self.dataset_mlp: HighwayMlp | None = None
        if dataset_names is not None:
            self.set_dataset_head(dataset_names, rng)
        # trainable embedding table, populated on demand in fine-tune mode
        self.embed_matrix: Tensor | None = None
        self.embed_vocab: dict[str, int] = {}

    # ----- dataset head -------------------------------------------------

    def set_dataset_head(self, dataset_names: list[str], rng=None) -> None:
        if len(dataset_names) < 2:
            raise ConfigError("the dataset classifier needs at least two datasets, "
                              f"got {dataset_names}")
        if len(set(dataset_names)) != len(dataset_names):
            raise ConfigError("dataset names must be unique")
        if rng is None:
            rng = np.random.default_rng(self.config.seed + 1)
        self.dataset_names = list(dataset_names)
        n_out = 2 if self.config.dataset_mode == "source-vs-target" else len(dataset_names)
        self.dataset_mlp = _init_highway(rng, 2 * self.config.hidden_size,
                                         self.N_HIGHWAY_LAYERS, n_out, "dataset")

    def dataset_index(self, name: str) -> int:
        if self.dataset_names is None or name not in self.dataset_names:
            raise ConfigError(f"unknown dataset {name!r}")
        idx = self.dataset_names.index(name)
        if self.config.dataset_mode == "source-vs-target":
            return 0 if idx < len(self.dataset_names) - 1 else 1
        return idx

    # ----- embedding fine-tuning -----------------------------------------

    def enable_embedding_training(self, pairs: list[EncodedPair]) -> None:
        """Build a trainable embedding table over the tokens seen in
        ``pairs`` plus an <unk> row.  Tokens unseen here fall back to the
        <unk> row at prediction time (the table's shape is fixed)."""
        vocab: dict[str, int] = {"<unk>": 0}
        rows = [np.zeros(self.store.dim)]
        for ep in pairs:
            for seqs in (ep.left_tokens, ep.right_tokens):
                for seq in seqs:
                    for tok in seq:
                        if tok not in vocab:
                            vocab[tok] = len(rows)
                            rows.append(self.store.embed_token(tok))
        self.embed_vocab = vocab
        self.embed_matrix = Tensor(np.vstack(rows), requires_grad=True,
                                   name="embed.matrix")

    # ----- parameter registry --------------------------------------------

    def parameters(self) -> list[Tensor]:
        out = self.gru_fwd.tensors() + self.gru_bwd.tensors() + self.matching_mlp.tensors()
        if self.dataset_mlp is not None:
            out += self.dataset_mlp.tensors()
        if self.config.fine_tune_embeddings and self.embed_matrix is not None:
            out.append(self.embed_matrix)
        return out

    def named_parameters(self) -> dict[str, Tensor]:
        return {p.name: p for p in self.parameters()}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters().items():
            src = snap.get(name)
            if src is None:
                raise KeyError(f"snapshot is missing parameter {name!r}")
            if src.shape != p.data.shape:
                raise ShapeError(f"snapshot parameter {name!r} has shape "
                                 f"{src.shape}, expected {p.data.shape}")
            p.data[...] = src
        self.bump_version()

    def bump_version(self) -> None:
        self.version += 1

    def check_finite(self) -> None:
        for p in self.parameters():
            if not np.all(np.isfinite(p.data)):
                raise NumericError(f"parameter {p.name} contains non-finite values")

    # ----- forward pieces -------------------------------------------------

    def _gru_direction(self, tape: Tape, dp: GruDirection, xs: list[Tensor],
                       masks: list[Tensor], h0: Tensor, ones: Tensor) -> Tensor:
        h = h0
        for x, m in zip(xs, masks):
            z = tape.sigmoid(tape.add(tape.add(
                tape.matmul(x, dp.W_z, transpose_b=True),
                tape.matmul(h, dp.U_z, transpose_b=True)), dp.b_z))
            r = tape.sigmoid(tape.add(tape.add(
                tape.matmul(x, dp.W_r, transpose_b=True),
                tape.matmul(h, dp.U_r, transpose_b=True)), dp.b_r))
            cand = tape.tanh(tape.add(tape.add(
                tape.matmul(x, dp.W_h, transpose_b=True),
                tape.matmul(tape.mul(r, h), dp.U_h, transpose_b=True)), dp.b_h))
            h_new = tape.add(tape.mul(tape.sub(ones, z), h), tape.mul(z, cand))
            # hold the state unchanged past each sequence's true end
            h = tape.add(h, tape.mul(m, tape.sub(h_new, h)))
        return h

    def encode_sequences(self, tape: Tape, seqs: list[np.ndarray]) -> Tensor:
        """BiGRU-encode a batch of (L_i, dim) token matrices into (n, 2h):
        last forward hidden state concatenated with last backward one."""
        n = len(seqs)
        h = self.config.hidden_size
        max_len = max((s.shape[0] for s in seqs), default=0)
        if max_len == 0:
            return Tensor(np.zeros((n, 2 * h)))
        d = self.config.embedding_dim
        fwd_steps, bwd_steps, masks = [], [], []
        for t in range(max_len):
            xf = np.zeros((n, d))
            xb = np.zeros((n, d))
            m = np.zeros((n, 1))
            for i, s in enumerate(seqs):
                if t < s.shape[0]:
                    xf[i] = s[t]
                    xb[i] = s[s.shape[0] - 1 - t]
                    m[i, 0] = 1.0
            fwd_steps.append(Tensor(xf))
            bwd_steps.append(Tensor(xb))
            masks.append(Tensor(m))
        h0 = Tensor(np.zeros((n, h)))
        ones = Tensor(np.ones((n, h)))
        hf = self._gru_direction(tape, self.gru_fwd, fwd_steps, masks, h0, ones)
        hb = self._gru_direction(tape, self.gru_bwd, bwd_steps, masks, h0, ones)
        return tape.concat([hf, hb], axis=1)

    def _encode_sequences_trainable(self, tape: Tape,
                                    token_seqs: list[list[str]]) -> Tensor:
        """Fine-tune path: token vectors come from the trainable table."""
        n = len(token_seqs)
        h = self.config.hidden_size
        max_len = max((len(s) for s in token_seqs), default=0)
        if max_len == 0:
            return Tensor(np.zeros((n, 2 * h)))
        unk = self.embed_vocab["<unk>"]
        fwd_steps, bwd_steps, masks = [], [], []
        for t in range(max_len):
            idx_f = np.zeros(n, dtype=np.int64)
            idx_b = np.zeros(n, dtype=np.int64)
            m = np.zeros((n, 1))
            for i, toks in enumerate(token_seqs):
                if t < len(toks):
                    idx_f[i] = self.embed_vocab.get(toks[t], unk)
                    idx_b[i] = self.embed_vocab.get(toks[len(toks) - 1 - t], unk)
                    m[i, 0] = 1.0
            fwd_steps.append(tape.gather_rows(self.embed_matrix, idx_f))
            bwd_steps.append(tape.gather_rows(self.embed_matrix, idx_b))
            masks.append(Tensor(m))
        h0 = Tensor(np.zeros((n, h)))
        ones = Tensor(np.ones((n, h)))
        hf = self._gru_direction(tape, self.gru_fwd, fwd_steps, masks, h0, ones)
        hb = self._gru_direction(tape, self.gru_bwd, bwd_steps, masks, h0, ones)
        return tape.concat([hf, hb], axis=1)

    def highway_forward(self, tape: Tape, mlp: HighwayMlp, x: Tensor) -> Tensor:
        width_ones = Tensor(np.ones(x.shape[-1]))
        for layer in mlp.layers:
            t = tape.relu(tape.add(
                tape.matmul(x, layer["W_t"], transpose_b=True), layer["b_t"]))
            g = tape.sigmoid(tape.add(
                tape.matmul(x, layer["W_g"], transpose_b=True), layer["b_g"]))
            x = tape.add(tape.mul(g, t), tape.mul(tape.sub(width_ones, g), x))
        return tape.add(tape.matmul(x, mlp.W_out, transpose_b=True), mlp.b_out)

    def forward_batch(self, tape: Tape, pairs: list[EncodedPair], *,
                      need_dataset: bool = False) -> dict:
        """Run the full network over a batch; returns the intermediate
        tensors keyed by stage name."""
        if not pairs:
            raise ShapeError("forward_batch: empty batch")
        b = len(pairs)
        fine_tune = self.config.fine_tune_embeddings and self.embed_matrix is not None
        sims = []
        encodings = []
        for j in range(len(self.schema)):
            if fine_tune:
                token_seqs = ([p.left_tokens[j] for p in pairs]
                              + [p.right_tokens[j] for p in pairs])
                enc = self._encode_sequences_trainable(tape, token_seqs)
            else:
                seqs = [p.left_vecs[j] for p in pairs] + [p.right_vecs[j] for p in pairs]
                enc = self.encode_sequences(tape, seqs)
            left = tape.slice_rows(enc, 0, b)
            right = tape.slice_rows(enc, b, 2 * b)
            encodings.append((left, right))
            sims.append(tape.abs_diff(left, right))
        record_sim = tape.sum_tensors(sims)
        logits = self.highway_forward(tape, self.matching_mlp, record_sim)
        out = {"encodings": encodings, "similarities": sims,
               "record_sim": record_sim, "logits": logits}
        if need_dataset:
            if self.dataset_mlp is None:
                raise ConfigError("model has no dataset classifier; construct it "
                                  "with dataset_names")
            reversed_sim = tape.gradient_reversal(record_sim,
                                                  self.config.reversal_lambda)
            out["dataset_logits"] = self.highway_forward(tape, self.dataset_mlp,
                                                         reversed_sim)
        return out

    # ----- inference -------------------------------------------------------

    def predict_proba(self, pairs: list[EncodedPair], batch_size: int = 64,
                      ) -> np.ndarray:
        """Match probability for every pair, computed without recording."""
        if not pairs:
            return np.zeros(0)
        out = np.zeros(len(pairs))
        for lo in range(0, len(pairs), batch_size):
            chunk = pairs[lo:lo + batch_size]
            tape = Tape(record=False)
            act = self.forward_batch(tape, chunk)
            out[lo:lo + len(chunk)] = softmax_probs(act["logits"].data)[:, MATCH]
        return out

    def classify_pair(self, pair: RecordPair | EncodedPair) -> PairActivation:
        """Full activation trace for a single pair."""
        ep = pair
        if isinstance(pair, RecordPair):
            ep = encode_pairs(self.store, self.schema, [pair], self.tokenizer)[0]
        tape = Tape(record=False)
        act = self.forward_batch(tape, [ep],
                                 need_dataset=self.dataset_mlp is not None)
        probs = softmax_probs(act["logits"].data)
        ds = act.get("dataset_logits")
        return PairActivation(
            attribute_left=[left.data[0] for left, _ in act["encodings"]],
            attribute_right=[right.data[0] for _, right in act["encodings"]],
            similarities=[s.data[0] for s in act["similarities"]],
            record_similarity=act["record_sim"].data[0],
            logits=act["logits"].data[0],
            probability=float(probs[0, MATCH]),
            dataset_logits=None if ds is None else ds.data[0],
        )


# --------------------------------------------------------------------------
# single-sequence conveniences (the batched path with n == 1)


def gru_cell(direction: GruDirection, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """One GRU step on plain vectors.

    z = sig(W_z x + U_z h + b_z); r = sig(W_r x + U_r h + b_r)
    cand = tanh(W_h x + U_h (r * h) + b_h); h' = (1 - z) * h + z * cand
    """
    tape = Tape(record=False)
    xs = Tensor(np.asarray(x, dtype=np.float64)[None, :])
    hs = Tensor(np.asarray(h, dtype=np.float64)[None, :])
    ones = Tensor(np.ones_like(hs.data))
    z = tape.sigmoid(tape.add(tape.add(
        tape.matmul(xs, direction.W_z, transpose_b=True),
        tape.matmul(hs, direction.U_z, transpose_b=True)), direction.b_z))
    r = tape.sigmoid(tape.add(tape.add(
        tape.matmul(xs, direction.W_r, transpose_b=True),
        tape.matmul(hs, direction.U_r, transpose_b=True)), direction.b_r))
    cand = tape.tanh(tape.add(tape.add(
        tape.matmul(xs, direction.W_h, transpose_b=True),
        tape.matmul(tape.mul(r, hs), direction.U_h, transpose_b=True)), direction.b_h))
    out = tape.add(tape.mul(tape.sub(ones, z), hs), tape.mul(z, cand))
    return out.data[0]


def encode_attribute(model: DeepERModel, token_vectors: np.ndarray) -> np.ndarray:
    """Encode one token-vector sequence into its 2h attribute vector."""
    tape = Tape(record=False)
    return model.encode_sequences(tape, [np.asarray(token_vectors, dtype=np.float64)
                                         if len(token_vectors) else
                                         np.zeros((0, model.config.embedding_dim))]).data[0]


def attribute_similarity(v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Elementwise absolute difference of two attribute vectors."""
    v1, v2 = np.asarray(v1, dtype=np.float64), np.asarray(v2, dtype=np.float64)
    if v1.shape != v2.shape:
        raise ShapeError(f"attribute_similarity: shapes differ {v1.shape} vs {v2.shape}")
    return np.abs(v1 - v2)


def record_similarity(similarities: list[np.ndarray]) -> np.ndarray:
    """Elementwise sum over per-attribute similarity vectors."""
    if not similarities:
        raise ConfigError("record_similarity: empty schema (no attribute vectors)")
    out = np.array(similarities[0], dtype=np.float64, copy=True)
    for s in similarities[1:]:
        if np.shape(s) != out.shape:
            raise ShapeError("record_similarity: mixed similarity widths")
        out += s
    return out
