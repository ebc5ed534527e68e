"""Directed word translation tables and IBM Model 1 estimation."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .corpus import BOS_ID, EOS_ID, UNK_ID, Vocab

EM_ITERATIONS = 5
SMOOTHING = 0.01


class TranslationTable:
    """Dense ``P(target word | source word)`` matrix.

    Rows are indexed by source id, columns by target id. Every row sums to one;
    reserved source ids map to the matching reserved target id.
    """

    def __init__(self, direction: str, probs: np.ndarray, em_iterations: int = 0):
        self.direction = direction
        self.probs = probs
        self.probs.setflags(write=False)
        self.em_iterations = em_iterations

    @property
    def shape(self):
        return self.probs.shape

    def row(self, src_id: int) -> list[tuple[int, float]]:
        """Candidates sorted by descending probability, ties by target id."""
        r = self.probs[src_id]
        nz = np.flatnonzero(r)
        order = sorted(nz, key=lambda j: (-r[j], j))
        return [(int(j), float(r[j])) for j in order]

    def best(self, src_id: int) -> int:
        return int(np.argmax(self.probs[src_id]))

    def __eq__(self, other):
        return (isinstance(other, TranslationTable) and self.direction == other.direction
                and self.em_iterations == other.em_iterations
                and np.array_equal(self.probs, other.probs))

    def to_tsv(self, src_vocab: Vocab, tgt_vocab: Vocab) -> str:
        lines = []
        for i in range(self.probs.shape[0]):
            for j, p in self.row(i):
                lines.append(f"{src_vocab.itos[i]}\t{tgt_vocab.itos[j]}\t{p!r}\n")
        return "".join(sorted(lines))

    @classmethod
    def from_tsv(cls, text: str, direction: str, src_vocab: Vocab, tgt_vocab: Vocab,
                 em_iterations: int = 0) -> "TranslationTable":
        probs = np.zeros((len(src_vocab), len(tgt_vocab)))
        for line in text.splitlines():
            s, t, p = line.split("\t")
            probs[src_vocab.stoi[s], tgt_vocab.stoi[t]] = float(p)
        return cls(direction, probs, em_iterations)


def reserved_rows(n_src: int, n_tgt: int) -> np.ndarray:
    probs = np.zeros((n_src, n_tgt))
    for r in (UNK_ID, BOS_ID, EOS_ID):
        probs[r, r] = 1.0
    return probs


def ibm1_em(pairs: Sequence[tuple], n_src: int, n_tgt: int, iterations: int = EM_ITERATIONS,
            smoothing: float = SMOOTHING) -> tuple[np.ndarray, np.ndarray]:
    """Estimate ``t(target | source)`` from sentence pairs with IBM Model 1.

    Starts uniform over co-occurring targets. After every M-step each row gets
    ``smoothing`` added to every co-occurring candidate and is renormalised.
    Returns ``(probs, seen)`` where ``seen`` flags source ids that occurred;
    rows of unseen ids are all zero.
    """
    src_flat, tgt_flat, group = [], [], []
    g = 0
    for src, tgt in pairs:
        ls, lt = len(src), len(tgt)
        if ls == 0 or lt == 0:
            continue
        s = np.asarray(src, dtype=np.int64)
        t = np.asarray(tgt, dtype=np.int64)
        src_flat.append(np.tile(s, lt))
        tgt_flat.append(np.repeat(t, ls))
        group.append(np.repeat(np.arange(g, g + lt), ls))
        g += lt
    probs = np.zeros((n_src, n_tgt))
    if not src_flat:
        return probs, np.zeros(n_src, dtype=bool)
    s_idx = np.concatenate(src_flat)
    t_idx = np.concatenate(tgt_flat)
    grp = np.concatenate(group)
    cell = s_idx * n_tgt + t_idx
    cooc = (np.bincount(cell, minlength=n_src * n_tgt).reshape(n_src, n_tgt) > 0).astype(float)
    width = cooc.sum(axis=1)
    seen = width > 0
    probs[seen] = cooc[seen] / width[seen, None]
    for _ in range(iterations):
        vals = probs.ravel()[cell]
        denom = np.bincount(grp, weights=vals, minlength=g)
        post = vals / denom[grp]
        counts = np.bincount(cell, weights=post, minlength=n_src * n_tgt).reshape(n_src, n_tgt)
        counts += smoothing * cooc
        totals = counts.sum(axis=1)
        probs = np.zeros((n_src, n_tgt))
        probs[seen] = counts[seen] / totals[seen, None]
    return probs, seen
