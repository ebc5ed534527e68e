"""Token-factorised noisy-channel decoder.

At each step the candidate source positions are the unconsumed ones in
``[first_unconsumed, first_unconsumed + window]``. The channel score of an
output token is its best table probability over those positions, combined
with the output-language LM as ``channel**(1 - lm_weight) * lm**lm_weight``
and renormalised. Emitting a token consumes the candidate position that gave
it the highest table probability (lowest position on ties), so the coverage
state is a deterministic function of ``(src, prefix)``. ``<eos>`` is only
reachable, and then certain, once every position is consumed.
"""

from __future__ import annotations

import concurrent.futures as cf
import math
import multiprocessing
import os
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .corpus import EOS_ID, Sentence
from .errors import ConfigError, EnsembleMismatch

STRATEGIES = ("greedy", "beam", "sample", "top_k", "top_p")


@dataclass(frozen=True)
class DecodeConfig:
    strategy: str = "beam"
    beam: int = 5
    temperature: float = 0.3
    top_k: int = 10
    top_p: float = 0.9
    seed: int = 0
    max_out_len: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown decode strategy {self.strategy!r}")
        if self.beam < 1:
            raise ConfigError("beam size must be >= 1")
        if not self.temperature > 0:
            raise ConfigError("temperature must be > 0")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if not 0 < self.top_p <= 1:
            raise ConfigError("top_p must lie in (0, 1]")

    @property
    def stochastic(self) -> bool:
        return self.strategy in ("sample", "top_k", "top_p")

    @classmethod
    def parse(cls, text: str, **kw) -> "DecodeConfig":
        """``greedy``, ``beam:5``, ``sample:0.3``, ``top_k:10`` or ``top_p:0.9``."""
        name, _, arg = text.partition(":")
        name = name.replace("-", "_")
        if name == "temperature":
            name = "sample"
        if arg:
            field = {"beam": "beam", "sample": "temperature", "top_k": "top_k", "top_p": "top_p"}.get(name)
            if field is None:
                raise ConfigError(f"strategy {name!r} takes no argument")
            kw[field] = float(arg) if field in ("temperature", "top_p") else int(arg)
        return cls(strategy=name, **kw)

    def describe(self) -> str:
        arg = {"greedy": "", "beam": f":{self.beam}", "sample": f":{self.temperature!r}",
               "top_k": f":{self.top_k}", "top_p": f":{self.top_p!r}"}[self.strategy]
        return f"{self.strategy}{arg}"

    def with_seed(self, seed: int) -> "DecodeConfig":
        return replace(self, seed=seed)


GREEDY = DecodeConfig("greedy")


class Channel:
    """One agent in one direction, prepared for decoding."""

    def __init__(self, table: np.ndarray, lm, lm_weight: float, window: int):
        with np.errstate(divide="ignore"):
            self.log_table = np.log(table)
        # extra all -inf row used to pad candidate sets in batched scoring
        self._padded = np.vstack([self.log_table, np.full((1, table.shape[1]), -np.inf)])
        self.lm = lm
        self.lm_weight = float(lm_weight)
        self.window = int(window)
        self.size = table.shape[1]
        self.eos = np.zeros(self.size)
        self.eos[EOS_ID] = 1.0

    def start(self, src: Sentence):
        return (np.asarray(src, dtype=np.int64), 0, 0)  # (src array, consumed bitmask, first unconsumed)

    def candidates(self, state) -> list[int]:
        src, mask, f = state
        hi = min(f + self.window + 1, len(src))
        return [j for j in range(f, hi) if not (mask >> j) & 1]

    def scores(self, state, prefix: Sentence):
        """Unnormalised log scores plus the per-position table rows (None when done)."""
        src = state[0]
        cands = self.candidates(state)
        if not cands:
            return None, None, cands
        rows = self.log_table[src[cands]]
        chan = rows[0] if len(cands) == 1 else rows.max(axis=0)
        if self.lm_weight > 0.0:
            score = (1.0 - self.lm_weight) * chan + self.lm_weight * self.lm.log_dist(self.lm.context(prefix))
        else:
            score = chan
        return score, rows, cands

    def batch_scores(self, states, prefixes):
        """``scores`` for many hypotheses at once.

        Returns an (H, V) array of unnormalised log scores (finished rows hold
        the ``<eos>`` one-hot in log space) and per-hypothesis consumption info.
        """
        width = self.window + 1
        pad = self.log_table.shape[0]
        idx = np.full((len(states), width), pad, dtype=np.int64)
        infos = []
        done = []
        for h, st in enumerate(states):
            cands = self.candidates(st)
            if cands:
                idx[h, :len(cands)] = st[0][cands]
                infos.append(cands)
            else:
                infos.append(None)
                done.append(h)
        rows = self._padded[idx]  # (H, width, V)
        score = rows.max(axis=1)
        if self.lm_weight > 0.0:
            lm = np.vstack([self.lm.log_dist(self.lm.context(p)) for p in prefixes])
            score = (1.0 - self.lm_weight) * score + self.lm_weight * lm
        for h in done:
            score[h] = np.where(self.eos > 0, 0.0, -np.inf)
        out = [None if c is None else (rows[h, :len(c)], c) for h, c in enumerate(infos)]
        return score, out

    def step(self, state, prefix: Sentence):
        score, rows, cands = self.scores(state, prefix)
        if score is None:
            return self.eos, None
        return normalize(score), (rows, cands)

    @staticmethod
    def advance(state, info, token: int):
        src, mask, f = state
        if info is None:
            return state
        rows, cands = info
        j = cands[int(np.argmax(rows[:, token]))] if len(cands) > 1 else cands[0]
        mask |= 1 << j
        while f < len(src) and (mask >> f) & 1:
            f += 1
        return (src, mask, f)


def normalize(score: np.ndarray) -> np.ndarray:
    m = score.max()
    p = np.exp(score - m)
    return p / p.sum()


def replay(channel: Channel, src: Sentence, prefix: Sentence):
    state = channel.start(src)
    for k, tok in enumerate(prefix):
        _, info = channel.step(state, prefix[:k])
        state = channel.advance(state, info, tok)
    return state


def _mean_step(channels, states, prefix):
    if len(channels) == 1:
        p, info = channels[0].step(states[0], prefix)
        return p, [info]
    total = None
    infos = []
    for ch, st in zip(channels, states):
        p, info = ch.step(st, prefix)
        total = p.copy() if total is None else total + p
        infos.append(info)
    return total / len(channels), infos


def _pick(p: np.ndarray, dc: DecodeConfig, rng: np.random.Generator) -> int:
    if dc.strategy == "greedy" or dc.strategy == "beam":
        return int(np.argmax(p))
    order = np.lexsort((np.arange(len(p)), -p))
    q = p[order]
    if dc.strategy == "sample":
        with np.errstate(divide="ignore"):
            logit = np.log(q) / dc.temperature
        q = np.exp(logit - logit[0])
    elif dc.strategy == "top_k":
        q = q[:dc.top_k]
    else:  # top_p
        cum = np.cumsum(q)
        keep = int(np.searchsorted(cum, dc.top_p * cum[-1], side="left")) + 1
        q = q[:keep]
    cum = np.cumsum(q)
    k = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return int(order[min(k, len(q) - 1)])


def decode(channels: Sequence[Channel], src: Sentence, dc: DecodeConfig, index: int = 0) -> Sentence:
    """Decode one sentence with the arithmetic mean of the channels' step distributions."""
    if len(src) == 0:
        return ()
    if dc.strategy == "beam" and dc.beam > 1:
        return _beam(channels, src, dc.beam)
    rng = np.random.default_rng((dc.seed, index)) if dc.stochastic else None
    states = [ch.start(src) for ch in channels]
    out: list = []
    for _ in range(len(src)):
        p, infos = _mean_step(channels, states, out)
        tok = _pick(p, dc, rng)
        states = [ch.advance(st, info, tok) for ch, st, info in zip(channels, states, infos)]
        out.append(tok)
    return tuple(out)


def _beam_probs(channels, states_per_hyp, prefixes):
    """Row-stacked step distributions for every live hypothesis, plus consumption info."""
    total = None
    infos = [[] for _ in prefixes]
    for c, ch in enumerate(channels):
        sc, info = ch.batch_scores([st[c] for st in states_per_hyp], prefixes)
        for h, i in enumerate(info):
            infos[h].append(i)
        sc -= sc.max(axis=1, keepdims=True)
        p = np.exp(sc)
        p /= p.sum(axis=1, keepdims=True)
        total = p if total is None else total + p
    if len(channels) > 1:
        total /= len(channels)
    return total, infos


def _beam(channels, src, k):
    beam = [(0.0, (), [ch.start(src) for ch in channels])]
    for _ in range(len(src)):
        p, infos = _beam_probs(channels, [b[2] for b in beam], [b[1] for b in beam])
        with np.errstate(divide="ignore"):
            total = np.log(p) + np.array([b[0] for b in beam])[:, None]
        flat = total.ravel()
        if flat.size > k:
            thr = np.partition(flat, flat.size - k)[flat.size - k]
            pick = np.flatnonzero(flat >= thr)
        else:
            pick = np.arange(flat.size)
        width = p.shape[1]
        cands = [(float(flat[i]), beam[i // width][1] + (int(i % width),), i // width)
                 for i in pick if flat[i] > -np.inf]
        cands.sort(key=lambda c: (-c[0], c[1]))
        nxt = []
        for score, toks, h in cands[:k]:
            tok = toks[-1]
            nxt.append((score, toks, [ch.advance(st, info, tok)
                                      for ch, st, info in zip(channels, beam[h][2], infos[h])]))
        beam = nxt
    return beam[0][1]


# --- batch decoding ----------------------------------------------------------

_WORKER: dict = {}


def _worker_init(channels, dc):
    _WORKER["channels"] = channels
    _WORKER["dc"] = dc


def _worker_chunk(args):
    start, sents = args
    chans, dc = _WORKER["channels"], _WORKER["dc"]
    return [decode(chans, s, dc, start + i) for i, s in enumerate(sents)]


def decode_many(channels: Sequence[Channel], sentences: Sequence[Sentence], dc: DecodeConfig,
                workers: int = 1) -> list:
    """Sentence ``i`` always uses seed ``(dc.seed, i)``, whatever the worker count."""
    sentences = list(sentences)
    if workers <= 1 or len(sentences) < 2 * workers:
        return [decode(channels, s, dc, i) for i, s in enumerate(sentences)]
    size = -(-len(sentences) // (workers * 4))
    chunks = [(i, sentences[i:i + size]) for i in range(0, len(sentences), size)]
    ctx = None
    if "fork" in multiprocessing.get_all_start_methods():
        ctx = multiprocessing.get_context("fork")
    with cf.ProcessPoolExecutor(max_workers=workers, mp_context=ctx, initializer=_worker_init,
                                initargs=(list(channels), dc)) as pool:
        parts = list(pool.map(_worker_chunk, chunks))
    return [s for part in parts for s in part]


def check_shared_vocab(agents) -> None:
    first = agents[0]
    for a in agents[1:]:
        if a.vocab_s != first.vocab_s or a.vocab_t != first.vocab_t:
            raise EnsembleMismatch(f"agent {a.agent_id} vocabulary differs from {first.agent_id}")


def default_workers() -> int:
    return int(os.environ.get("CBDLAB_WORKERS", "1"))
