"""Tokenization and word-vector lookup.

Attribute values are lowercased, split on whitespace, and leading or
trailing ASCII punctuation is detached into standalone tokens (internal
punctuation, e.g. hyphens, stays attached).  Out-of-vocabulary tokens get
a deterministic vector built from hashed character n-grams so unseen
strings still embed usefully and reproducibly.
"""

from __future__ import annotations

import hashlib
import string
import warnings
from dataclasses import dataclass

import numpy as np

_PUNCT = frozenset(string.punctuation)


class EmbeddingFormatError(ValueError):
    """An embedding text file could not be parsed."""


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True
    split_punctuation: bool = True


DEFAULT_TOKENIZER = TokenizerConfig()


def tokenize(text: str, config: TokenizerConfig = DEFAULT_TOKENIZER) -> list[str]:
    """Split an attribute value into tokens.

    >>> tokenize("SIGMOD Conference")
    ['sigmod', 'conference']
    >>> tokenize("VLDB, 2000")
    ['vldb', ',', '2000']
    """
    if config.lowercase:
        text = text.lower()
    tokens: list[str] = []
    for chunk in text.split():
        if not config.split_punctuation:
            tokens.append(chunk)
            continue
        lead: list[str] = []
        while chunk and chunk[0] in _PUNCT:
            lead.append(chunk[0])
            chunk = chunk[1:]
        trail: list[str] = []
        while chunk and chunk[-1] in _PUNCT:
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(lead)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trail))
    return tokens


class EmbeddingStore:
    """In-vocabulary rows plus a hashed n-gram fallback for everything else.

    OOV vectors are the mean of per-bucket vectors, where buckets are keyed
    by character n-grams (n in [ngram_min, ngram_max]) of the token padded
    as ``<token>``.  Bucket vectors are drawn uniformly from
    [-init_scale, +init_scale] from a generator seeded by (hash_seed,
    bucket index), so the whole scheme is reproducible without storing a
    bucket table.
    """

    def __init__(self, dim: int, tokens: list[str] | None = None,
                 matrix: np.ndarray | None = None, *,
                 n_buckets: int = 2 ** 21, ngram_min: int = 3, ngram_max: int = 6,
                 hash_seed: int = 13, init_scale: float = 0.05,
                 fingerprint: str | None = None):
        if dim < 1:
            raise ValueError(f"embedding dimension must be positive, got {dim}")
        if ngram_min < 1 or ngram_max < ngram_min:
            raise ValueError(f"bad n-gram range [{ngram_min}, {ngram_max}]")
        self.dim = dim
        self.vocab: dict[str, int] = {}
        if tokens is None:
            self.matrix = np.zeros((0, dim), dtype=np.float64)
        else:
            if matrix is None or matrix.shape != (len(tokens), dim):
                raise ValueError("tokens and matrix shapes disagree")
            self.vocab = {t: i for i, t in enumerate(tokens)}
            if len(self.vocab) != len(tokens):
                raise ValueError("duplicate tokens in embedding vocabulary")
            self.matrix = np.asarray(matrix, dtype=np.float64)
        self.n_buckets = n_buckets
        self.ngram_min = ngram_min
        self.ngram_max = ngram_max
        self.hash_seed = hash_seed
        self.init_scale = init_scale
        self._key = hash_seed.to_bytes(8, "little", signed=False)
        self._oov_cache: dict[str, np.ndarray] = {}
        if fingerprint is None:
            spec = (f"hash-only:dim={dim}:buckets={n_buckets}:n={ngram_min}-{ngram_max}"
                    f":seed={hash_seed}:scale={init_scale}:vocab={len(self.vocab)}")
            fingerprint = hashlib.blake2b(spec.encode(), digest_size=8).hexdigest()
        self.fingerprint = fingerprint

    # ----- construction -------------------------------------------------

    @classmethod
    def hash_only(cls, dim: int, **kwargs) -> "EmbeddingStore":
        """A store with an empty vocabulary: every token is hashed."""
        return cls(dim, **kwargs)

    @classmethod
    def load(cls, path, **kwargs) -> "EmbeddingStore":
        """Read whitespace-separated ``token v1 ... vd`` lines.

        An optional first line holding exactly two integers is treated as a
        ``count dim`` header.  Duplicate tokens keep the first occurrence
        (with a warning); an inconsistent dimension or an unparsable value
        is an error that names the offending line.
        """
        with open(path, "rb") as fh:
            raw = fh.read()
        fingerprint = hashlib.blake2b(raw, digest_size=8).hexdigest()
        lines = raw.decode("utf-8").splitlines()
        tokens: list[str] = []
        rows: list[np.ndarray] = []
        seen: dict[str, int] = {}
        dim: int | None = None
        start = 0
        if lines:
            head = lines[0].split()
            if len(head) == 2:
                try:
                    _count, dim = int(head[0]), int(head[1])
                    start = 1
                except ValueError:
                    pass
        for lineno, line in enumerate(lines[start:], start=start + 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(" ")
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise EmbeddingFormatError(f"line {lineno}: no vector values")
            if len(values) != dim:
                raise EmbeddingFormatError(
                    f"line {lineno}: expected {dim} values, found {len(values)}")
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingFormatError(f"line {lineno}: {exc}") from None
            if token in seen:
                warnings.warn(f"duplicate embedding for {token!r} at line {lineno}; "
                              "keeping the first occurrence")
                continue
            seen[token] = len(tokens)
            tokens.append(token)
            rows.append(vec)
        if dim is None:
            raise EmbeddingFormatError("empty embedding file")
        matrix = np.vstack(rows) if rows else np.zeros((0, dim))
        return cls(dim, tokens, matrix, fingerprint=fingerprint, **kwargs)

    # ----- lookup -------------------------------------------------------

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def __len__(self) -> int:
        return len(self.vocab)

    def ngram_buckets(self, token: str) -> list[int]:
        """Hash buckets for the padded character n-grams of ``token``."""
        padded = f"<{token}>"
        out: list[int] = []
        for n in range(self.ngram_min, self.ngram_max + 1):
            if n > len(padded):
                break
            for i in range(len(padded) - n + 1):
                digest = hashlib.blake2b(padded[i:i + n].encode("utf-8"),
                                         digest_size=8, key=self._key).digest()
                out.append(int.from_bytes(digest, "little") % self.n_buckets)
        return out

    def _bucket_vector(self, bucket: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence([self.hash_seed, bucket]))
        return rng.uniform(-self.init_scale, self.init_scale, self.dim)

    def embed_token(self, token: str) -> np.ndarray:
        """In-vocabulary rows come back bit-exact; OOV tokens get the mean
        of their n-gram bucket vectors (zeros if the token has no n-grams)."""
        idx = self.vocab.get(token)
        if idx is not None:
            return self.matrix[idx]
        cached = self._oov_cache.get(token)
        if cached is not None:
            return cached
        buckets = self.ngram_buckets(token)
        if not buckets:
            vec = np.zeros(self.dim)
        else:
            vec = np.zeros(self.dim)
            for b in buckets:
                vec += self._bucket_vector(b)
            vec /= len(buckets)
        self._oov_cache[token] = vec
        return vec

    def embed_sequence(self, tokens: list[str]) -> np.ndarray:
        """Stack token vectors into an (L, dim) matrix; L may be zero."""
        if not tokens:
            return np.zeros((0, self.dim))
        return np.vstack([self.embed_token(t) for t in tokens])
