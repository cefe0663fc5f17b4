"""Corpus loading, character vocabulary, and seeded batch sampling.

The batch stream is a pure function of (corpus, seed, step, T, B): offsets
come from a counter-based generator keyed by seed and step, never from
model state or consumption order, so every gate variant trained at the
same seed sees bit-identical mini-batches.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import STREAM_EVAL_BATCH, STREAM_TRAIN_BATCH, stream_rng


@dataclass(frozen=True)
class Vocab:
    chars: tuple

    def __post_init__(self):
        object.__setattr__(self, "_stoi", {c: i for i, c in enumerate(self.chars)})

    def __len__(self) -> int:
        return len(self.chars)

    def encode(self, text: str) -> np.ndarray:
        stoi = self._stoi
        try:
            return np.array([stoi[c] for c in text], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"character {exc.args[0]!r} not in vocabulary") from None

    def decode(self, ids) -> str:
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= len(self.chars)):
            raise ValueError(f"id out of range [0, {len(self.chars)}) in decode")
        return "".join(self.chars[int(i)] for i in ids.reshape(-1))


@dataclass
class Corpus:
    name: str
    vocab: Vocab
    train_ids: np.ndarray
    val_ids: np.ndarray

    def split_ids(self, split: str) -> np.ndarray:
        if split == "train":
            return self.train_ids
        if split == "val":
            return self.val_ids
        raise ValueError(f"unknown split {split!r}; expected 'train' or 'val'")


def corpus_from_text(text: str, name: str, split_ratio: float = 0.9) -> Corpus:
    """Build vocab from the full text (sorted code points), split by ratio."""
    if not text:
        raise ValueError("corpus text is empty")
    if not 0.0 < split_ratio < 1.0:
        raise ValueError("split_ratio must be in (0, 1)")
    vocab = Vocab(tuple(sorted(set(text))))
    ids = vocab.encode(text)
    cut = int(len(ids) * split_ratio)
    return Corpus(name=name, vocab=vocab, train_ids=ids[:cut], val_ids=ids[cut:])


def load_corpus(path, name: str | None = None, split_ratio: float = 0.9) -> Corpus:
    """Read a plain-text file; falls back to latin-1 when not valid UTF-8."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"corpus file not found: {p}")
    raw = p.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        text = raw.decode("latin-1")
    return corpus_from_text(text, name=name or p.stem, split_ratio=split_ratio)


def sample_batch(corpus: Corpus, split: str, t: int, b: int,
                 seed: int, step: int):
    """Draw B windows of length T with next-character targets.

    Start offsets come from the (seed, step)-keyed counter stream for the
    train split, and the (seed, batch-index)-keyed eval stream for val, so
    evaluation batches are fixed for a given seed.
    """
    ids = corpus.split_ids(split)
    n = ids.shape[0]
    if n <= t:
        raise ValueError(f"{split} split has {n} characters, need more than T={t}")
    stream = STREAM_TRAIN_BATCH if split == "train" else STREAM_EVAL_BATCH
    rng = stream_rng(seed, stream, step)
    offsets = rng.integers(0, n - t, size=b)
    idx = offsets[:, None] + np.arange(t)[None, :]
    return ids[idx], ids[idx + 1]


def batch_fingerprint(corpus: Corpus, seed: int, n_steps: int,
                      t: int = 256, b: int = 64) -> str:
    """64-bit digest over the first n_steps training batches.

    Contents are serialized as little-endian int64 so the digest is
    platform-independent; equal digests across two runs certify they
    consumed identical data.
    """
    h = hashlib.blake2b(digest_size=8)
    for step in range(n_steps):
        inputs, targets = sample_batch(corpus, "train", t, b, seed, step)
        h.update(inputs.astype("<i8").tobytes())
        h.update(targets.astype("<i8").tobytes())
    return h.hexdigest()


_SYLLABLES = ["ba", "be", "bo", "da", "de", "du", "ka", "ke", "ki", "lo",
              "ma", "mi", "na", "ne", "no", "pa", "po", "ra", "re", "ri",
              "sa", "se", "so", "ta", "te", "to", "tu", "va", "vi", "za"]
_FUNCTION_WORDS = ["the", "of", "and", "to", "a", "in", "is", "it", "he", "was"]


def synthetic_text(n_chars: int, seed: int = 0) -> str:
    """Pseudo-prose for demos and dataset-free tests.

    Zipf-weighted made-up content words mixed with high-frequency function
    words, sentence punctuation, and newlines: enough structure that
    energy gates have something to separate, with a small stable alphabet.
    """
    rng = np.random.default_rng(seed)
    words = ["".join(rng.choice(_SYLLABLES, size=rng.integers(2, 5)))
             for _ in range(160)]
    ranks = np.arange(1, len(words) + 1, dtype=np.float64)
    w_prob = (1.0 / ranks) / np.sum(1.0 / ranks)
    pieces = []
    total = 0
    sentence_len = 0
    while total < n_chars:
        if sentence_len > 0 and rng.random() < 0.12:
            end = rng.choice([". ", ".\n", "? ", "! "])
            pieces.append(end)
            total += len(end)
            sentence_len = 0
            continue
        if rng.random() < 0.45:
            w = _FUNCTION_WORDS[int(rng.integers(0, len(_FUNCTION_WORDS)))]
        else:
            w = words[int(rng.choice(len(words), p=w_prob))]
        sep = "" if sentence_len == 0 else " "
        pieces.append(sep + w)
        total += len(sep) + len(w)
        sentence_len += 1
    return "".join(pieces)[:n_chars]


def synthetic_corpus(n_chars: int = 200_000, seed: int = 0,
                     split_ratio: float = 0.9) -> Corpus:
    return corpus_from_text(synthetic_text(n_chars, seed), name="synthetic",
                            split_ratio=split_ratio)
