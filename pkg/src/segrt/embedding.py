"""Character vectors: skip-gram with negative sampling plus Jamo-subword
buckets so unseen characters still get a composed vector.

A Hangul syllable contributes the n-grams of its boundary-marked Jamo
sequence ``< L V T >`` as subword keys; any other character contributes
itself as a single key.  Keys are hashed into a fixed bucket table, so
lookup is total over all Unicode scalars.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .textcore import CharSequence, Vocabulary, decompose_jamo

BUCKET_MAGIC = b"SGEMB\x01"


class EmbeddingIOError(Exception):
    """A vector file or its bucket companion could not be parsed."""


@dataclass(frozen=True)
class SkipGramConfig:
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    subsample: float = 1e-4  # 0 disables frequent-character downsampling
    min_count: int = 1
    dim: int = 100
    buckets: int = 50_000
    ngram_min: int = 2
    ngram_max: int = 3

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.ngram_min < 1 or self.ngram_max < self.ngram_min:
            raise ValueError("bad n-gram range")
        if self.dim < 1 or self.buckets < 1:
            raise ValueError("dim and buckets must be positive")


def _fnv1a64(data: bytes, seed: int) -> int:
    h = (0xCBF29CE484222325 ^ (seed & 0xFFFFFFFFFFFFFFFF)) & 0xFFFFFFFFFFFFFFFF
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def char_keys(char: str, ngram_min: int = 2, ngram_max: int = 3) -> tuple[str, ...]:
    """Subword keys of one character.

    Hangul syllables expand to the n-grams of their boundary-marked Jamo
    symbols; everything else is its own single key.  Lead/vowel/trail
    positions use distinct symbol prefixes so e.g. lead ㄱ and trail ㄱ
    never collide.
    """
    if len(char) != 1:
        raise ValueError("char_keys expects a single character")
    decomp = decompose_jamo(char)
    if decomp is None:
        return (char,)
    symbols = ["<", f"L{decomp.lead}", f"V{decomp.vowel}"]
    if decomp.trail is not None:
        symbols.append(f"T{decomp.trail}")
    symbols.append(">")
    keys: list[str] = []
    seen = set()
    for n in range(ngram_min, ngram_max + 1):
        for start in range(0, len(symbols) - n + 1):
            key = "|".join(symbols[start : start + n])
            if key not in seen:
                seen.add(key)
                keys.append(key)
    return tuple(keys)


class EmbeddingTable:
    """Immutable-after-construction character vector table.

    ``char_vecs`` holds one row per in-vocabulary character and
    ``bucket_vecs`` one row per hash bucket; :meth:`lookup` averages the
    applicable rows.
    """

    def __init__(
        self,
        dim: int,
        char_rows: dict[str, int],
        char_vecs: np.ndarray,
        bucket_vecs: np.ndarray,
        ngram_min: int,
        ngram_max: int,
        hash_seed: int,
        train_losses: tuple[float, ...] = (),
    ):
        if char_vecs.shape != (len(char_rows), dim):
            raise ValueError("char vector array shape does not match row map")
        if bucket_vecs.ndim != 2 or bucket_vecs.shape[1] != dim:
            raise ValueError("bucket vector array must be (buckets, dim)")
        if not np.all(np.isfinite(char_vecs)) or not np.all(np.isfinite(bucket_vecs)):
            raise ValueError("embedding vectors must be finite")
        self.dim = dim
        self.char_rows = char_rows
        self.char_vecs = char_vecs
        self.bucket_vecs = bucket_vecs
        self.ngram_min = ngram_min
        self.ngram_max = ngram_max
        self.hash_seed = hash_seed
        self.train_losses = train_losses
        self._lookup_cache: dict[str, np.ndarray] = {}

    @property
    def buckets(self) -> int:
        return self.bucket_vecs.shape[0]

    def bucket_ids(self, char: str) -> tuple[int, ...]:
        keys = char_keys(char, self.ngram_min, self.ngram_max)
        return tuple(
            _fnv1a64(key.encode("utf-8"), self.hash_seed) % self.buckets
            for key in keys
        )

    def lookup(self, char: str) -> np.ndarray:
        """Mean of the character's own vector (if any) and its subword
        bucket vectors; a zero vector only when neither exists."""
        cached = self._lookup_cache.get(char)
        if cached is not None:
            return cached
        rows = []
        row = self.char_rows.get(char)
        if row is not None:
            rows.append(self.char_vecs[row])
        for bucket in self.bucket_ids(char):
            rows.append(self.bucket_vecs[bucket])
        if rows:
            vec = np.mean(rows, axis=0, dtype=np.float64).astype(self.char_vecs.dtype)
        else:
            vec = np.zeros(self.dim, dtype=self.char_vecs.dtype)
        vec.setflags(write=False)
        self._lookup_cache[char] = vec
        return vec


def _keep_probability(freq: int, total: int, threshold: float) -> float:
    # word2vec-style downsampling of very frequent characters.
    z = freq / total
    return min(1.0, (math.sqrt(z / threshold) + 1.0) * threshold / z)


def train_skipgram(
    corpus: Iterable[CharSequence | str],
    config: SkipGramConfig,
    vocab: Vocabulary,
    seed: int = 0,
    step_loss_sink: list | None = None,
) -> EmbeddingTable:
    """Train character vectors by skip-gram with negative sampling.

    The token stream is each sentence's characters; the input
    representation of a character is the mean of its own vector and its
    subword bucket vectors, so buckets are trained jointly.  Deterministic
    for a fixed seed.  ``step_loss_sink``, when given, receives the raw
    per-pair loss values in training order.
    """
    sentences: list[list[int]] = []
    chars_in_order = vocab.chars()
    char_rows = {ch: i for i, ch in enumerate(chars_in_order)}
    for sent in corpus:
        text = sent.text if isinstance(sent, CharSequence) else sent
        ids = [char_rows[ch] for ch in text if ch in char_rows]
        if ids:
            sentences.append(ids)
    total_tokens = sum(len(s) for s in sentences)
    if total_tokens == 0:
        raise ValueError("empty corpus: no in-vocabulary characters to train on")

    rng = np.random.Generator(np.random.PCG64(seed))
    dim, n_chars = config.dim, len(chars_in_order)
    char_vecs = rng.uniform(-0.5 / dim, 0.5 / dim, (n_chars, dim))
    bucket_vecs = rng.uniform(-0.5 / dim, 0.5 / dim, (config.buckets, dim))
    out_vecs = np.zeros((n_chars, dim))
    hash_seed = seed & 0xFFFFFFFFFFFFFFFF

    # Per-row input composition: own row in char_vecs plus hashed buckets.
    row_buckets: list[tuple[int, ...]] = []
    for ch in chars_in_order:
        keys = char_keys(ch, config.ngram_min, config.ngram_max)
        row_buckets.append(
            tuple(_fnv1a64(k.encode("utf-8"), hash_seed) % config.buckets for k in keys)
        )

    counts = np.array([vocab.counts[ch] for ch in chars_in_order], dtype=np.float64)
    noise = counts**0.75
    noise_cdf = np.cumsum(noise / noise.sum())
    keep_prob = np.ones(n_chars)
    if config.subsample > 0:
        for i in range(n_chars):
            keep_prob[i] = _keep_probability(
                int(counts[i]), total_tokens, config.subsample
            )

    planned = config.epochs * total_tokens
    lr0 = config.learning_rate
    processed = 0
    epoch_losses: list[float] = []

    for _epoch in range(config.epochs):
        loss_sum = 0.0
        loss_n = 0
        for ids in sentences:
            if config.subsample > 0:
                kept = [i for i in ids if rng.random() < keep_prob[i]]
            else:
                kept = ids
            for pos, center in enumerate(kept):
                alpha = lr0 * max(1.0 - processed / planned, 0.0)
                processed += 1
                if alpha <= 0.0:
                    continue
                span = int(rng.integers(1, config.window + 1))
                lo = max(0, pos - span)
                hi = min(len(kept), pos + span + 1)
                buckets = list(row_buckets[center])
                n_rows = 1 + len(buckets)
                for ctx_pos in range(lo, hi):
                    if ctx_pos == pos:
                        continue
                    ctx = kept[ctx_pos]
                    h = (char_vecs[center] + bucket_vecs[buckets].sum(axis=0)) / n_rows
                    draws = np.searchsorted(noise_cdf, rng.random(config.negatives))
                    draws = np.minimum(draws, n_chars - 1)
                    samples = [ctx] + [int(d) for d in draws if int(d) != ctx]
                    labels = np.zeros(len(samples))
                    labels[0] = 1.0
                    u = out_vecs[samples]
                    scores = u @ h
                    sig = 1.0 / (1.0 + np.exp(-scores))
                    pair_loss = -math.log(max(sig[0], 1e-10)) - float(
                        np.log(np.maximum(1.0 - sig[1:], 1e-10)).sum()
                    )
                    loss_sum += pair_loss
                    loss_n += 1
                    if step_loss_sink is not None:
                        step_loss_sink.append(pair_loss / len(samples))
                    g = (labels - sig) * alpha
                    dh = g @ u
                    np.add.at(out_vecs, samples, np.outer(g, h))
                    char_vecs[center] += dh / n_rows
                    np.add.at(bucket_vecs, buckets, dh / n_rows)
        if not (np.all(np.isfinite(char_vecs)) and np.all(np.isfinite(bucket_vecs))):
            raise FloatingPointError("non-finite embedding after epoch")
        epoch_losses.append(loss_sum / max(loss_n, 1))

    return EmbeddingTable(
        dim=dim,
        char_rows=char_rows,
        char_vecs=char_vecs.astype(np.float32),
        bucket_vecs=bucket_vecs.astype(np.float32),
        ngram_min=config.ngram_min,
        ngram_max=config.ngram_max,
        hash_seed=hash_seed,
        train_losses=tuple(epoch_losses),
    )


def _bucket_path(path: str) -> str:
    return path + ".sub"


def save_vectors(table: EmbeddingTable, path: str) -> None:
    """Write "<count> <dim>" plus one "<char> <v1> ... <vdim>" row per
    character, and the binary bucket companion next to it."""
    chars = sorted(table.char_rows, key=table.char_rows.__getitem__)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(chars)} {table.dim}\n")
        for ch in chars:
            row = table.char_vecs[table.char_rows[ch]]
            fh.write(ch + " " + " ".join(repr(float(v)) for v in row) + "\n")
    with open(_bucket_path(path), "wb") as fh:
        fh.write(BUCKET_MAGIC)
        fh.write(
            struct.pack(
                "<QIIII",
                table.hash_seed,
                table.ngram_min,
                table.ngram_max,
                table.buckets,
                table.dim,
            )
        )
        fh.write(table.bucket_vecs.astype("<f4").tobytes())


def load_vectors(path: str) -> EmbeddingTable:
    """Load a vector file and its companion; exact inverse of
    :func:`save_vectors`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingIOError(f"{path}:1: bad header, expected '<count> <dim>'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise EmbeddingIOError(f"{path}:1: bad header, expected integers") from None
        char_rows: dict[str, int] = {}
        vecs = np.empty((count, dim), dtype=np.float32)
        for row in range(count):
            line = fh.readline()
            if not line:
                raise EmbeddingIOError(f"{path}: truncated after {row} vector rows")
            fields = line.rstrip("\n").split(" ")
            if len(fields) != dim + 1:
                raise EmbeddingIOError(
                    f"{path}:{row + 2}: expected {dim} values, got {len(fields) - 1}"
                )
            char = fields[0]
            if len(char) != 1 or char in char_rows:
                raise EmbeddingIOError(f"{path}:{row + 2}: bad character field {char!r}")
            vecs[row] = np.array([float(v) for v in fields[1:]], dtype=np.float32)
            char_rows[char] = row

    companion = _bucket_path(path)
    if not os.path.exists(companion):
        raise EmbeddingIOError(f"missing bucket companion {companion}")
    with open(companion, "rb") as fh:
        magic = fh.read(len(BUCKET_MAGIC))
        if magic != BUCKET_MAGIC:
            raise EmbeddingIOError(f"{companion}: bad magic {magic!r}")
        header_bytes = fh.read(struct.calcsize("<QIIII"))
        if len(header_bytes) != struct.calcsize("<QIIII"):
            raise EmbeddingIOError(f"{companion}: truncated header")
        hash_seed, ngram_min, ngram_max, buckets, bdim = struct.unpack(
            "<QIIII", header_bytes
        )
        if bdim != dim:
            raise EmbeddingIOError(
                f"{companion}: bucket dim {bdim} does not match vector dim {dim}"
            )
        data = fh.read(buckets * bdim * 4)
        if len(data) != buckets * bdim * 4:
            raise EmbeddingIOError(f"{companion}: truncated bucket table")
        bucket_vecs = np.frombuffer(data, dtype="<f4").reshape(buckets, bdim).copy()

    return EmbeddingTable(
        dim=dim,
        char_rows=char_rows,
        char_vecs=vecs,
        bucket_vecs=bucket_vecs,
        ngram_min=ngram_min,
        ngram_max=ngram_max,
        hash_seed=hash_seed,
    )
