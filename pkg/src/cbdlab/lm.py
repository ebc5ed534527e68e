"""Interpolated Kneser-Ney n-gram language model with a fixed discount.

The highest order uses raw counts, lower orders use continuation counts
(number of distinct left extensions), and the recursion bottoms out in a
uniform distribution over every id except ``<bos>``. Unseen contexts back
off fully to the next lower order.
"""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Iterable

import numpy as np

from .corpus import BOS_ID, EOS_ID, Corpus, Sentence, Vocab
from .errors import ConfigError, InsufficientData

DISCOUNT = 0.75


class LanguageModel:
    def __init__(self, vocab: Vocab, order: int, counts: dict, discount: float = DISCOUNT):
        """Build from highest-order counts ``{context tuple: {token: count}}``.

        Use :func:`train_lm` rather than calling this directly.
        """
        self.vocab = vocab
        self.order = order
        self.discount = discount
        self.counts = counts
        size = len(vocab)
        self.uniform = np.full(size, 1.0 / (size - 1))
        self.uniform[BOS_ID] = 0.0
        # levels[k] maps a context of length k-1 to (ids, counts, total, distinct)
        self.levels: list = [None] * (order + 1)
        level_counts = {order: counts}
        for k in range(order - 1, 0, -1):
            cont: dict = defaultdict(lambda: defaultdict(int))
            for ctx, row in level_counts[k + 1].items():
                for w in row:
                    cont[ctx[1:]][w] += 1
            level_counts[k] = cont
        for k in range(1, order + 1):
            table = {}
            for ctx, row in level_counts[k].items():
                ids = np.fromiter(sorted(row), dtype=np.int64)
                c = np.array([row[i] for i in ids], dtype=float)
                table[ctx] = (ids, c, float(c.sum()), len(ids))
            self.levels[k] = table
        self._cache: dict = {}
        self._log_cache: dict = {}

    def _vec(self, k: int, ctx: tuple) -> np.ndarray:
        key = (k, ctx)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if k == 0:
            return self.uniform
        lower = self._vec(k - 1, ctx[1:])
        stats = self.levels[k].get(ctx)
        if stats is None:
            vec = lower
        else:
            ids, c, total, distinct = stats
            vec = lower * (self.discount * distinct / total)
            vec[ids] += (c - self.discount) / total
        self._cache[key] = vec
        return vec

    def context(self, prefix: Sentence) -> tuple:
        n = self.order - 1
        if n == 0:
            return ()
        tail = tuple(prefix[-n:]) if prefix else ()
        return (BOS_ID,) * (n - len(tail)) + tail

    def dist(self, ctx: tuple) -> np.ndarray:
        """Next-token distribution for an already padded context (read-only array)."""
        return self._vec(self.order, ctx)

    def log_dist(self, ctx: tuple) -> np.ndarray:
        hit = self._log_cache.get(ctx)
        if hit is None:
            with np.errstate(divide="ignore"):
                hit = np.log(self.dist(ctx))
            self._log_cache[ctx] = hit
        return hit

    def to_counts_tsv(self) -> str:
        itos = self.vocab.itos
        rows = []
        for ctx, row in self.counts.items():
            c = " ".join(itos[i] for i in ctx)
            for w, n in row.items():
                rows.append(f"{c}\t{itos[w]}\t{n}\n")
        return "".join(sorted(rows))

    @classmethod
    def from_counts_tsv(cls, text: str, vocab: Vocab, order: int) -> "LanguageModel":
        counts: dict = defaultdict(dict)
        for line in text.splitlines():
            c, w, n = line.split("\t")
            ctx = tuple(vocab.stoi[x] for x in c.split(" ")) if c else ()
            counts[ctx][vocab.stoi[w]] = int(n)
        return cls(vocab, order, dict(counts))

    def dump(self) -> str:
        """Observed highest-order entries as sorted ``context<TAB>token<TAB>logprob`` lines."""
        itos = self.vocab.itos
        rows = []
        for ctx, row in self.counts.items():
            d = self.dist(ctx)
            c = " ".join(itos[i] for i in ctx)
            for w in row:
                rows.append(f"{c}\t{itos[w]}\t{math.log(d[w])!r}\n")
        return "".join(sorted(rows))


def ngram_counts(sentences: Iterable[Sentence], order: int) -> dict:
    counts: dict = defaultdict(lambda: defaultdict(int))
    pad = (BOS_ID,) * (order - 1)
    for s in sentences:
        seq = pad + tuple(s) + (EOS_ID,)
        for i in range(order - 1, len(seq)):
            counts[seq[i - order + 1:i]][seq[i]] += 1
    return {ctx: dict(row) for ctx, row in counts.items()}


def train_lm(corpus: Corpus, order: int = 3) -> LanguageModel:
    if not 1 <= order <= 5:
        raise ConfigError("order must lie in [1, 5]")
    if len(corpus) == 0:
        raise InsufficientData("empty corpus")
    n_tokens = sum(len(s) for s in corpus)
    if n_tokens < order:
        raise InsufficientData(f"{n_tokens} tokens < order {order}")
    return LanguageModel(corpus.vocab, order, ngram_counts(corpus, order))


def next_token_dist(lm: LanguageModel, prefix: Sentence) -> np.ndarray:
    return lm.dist(lm.context(prefix)).copy()


def lm_logprob(lm: LanguageModel, sentence: Sentence) -> float:
    total = 0.0
    prefix: list = []
    for w in tuple(sentence) + (EOS_ID,):
        total += math.log(lm.dist(lm.context(prefix))[w])
        prefix.append(w)
    return total


def perplexity(lm: LanguageModel, sentences: Iterable[Sentence]) -> float:
    logp = 0.0
    n = 0
    for s in sentences:
        logp += lm_logprob(lm, s)
        n += len(s) + 1
    return math.exp(-logp / n)
