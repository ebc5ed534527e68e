"""Bidirectional statistical UMT agents: initialisation, decoding, training."""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .corpus import UNK_ID, Corpus, Sentence, Vocab
from .decoding import GREEDY, Channel, DecodeConfig, check_shared_vocab, decode, decode_many, replay
from .errors import ConfigError, InitDegenerate, MissingDirection
from .lm import LanguageModel, train_lm
from .tables import EM_ITERATIONS, TranslationTable, ibm1_em, reserved_rows

S2T, T2S = "s2t", "t2s"
DIRECTIONS = (S2T, T2S)


def reverse(direction: str) -> str:
    return T2S if direction == S2T else S2T


@dataclass(frozen=True)
class AgentConfig:
    lm_order: int = 3
    lm_weight: float = 0.4
    reorder_window: int = 2
    em_iterations: int = EM_ITERATIONS
    rank_mass: float = 0.7
    jitter_prob: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.lm_weight < 1.0:
            raise ConfigError("lm_weight must lie in [0, 1)")
        if self.reorder_window < 0:
            raise ConfigError("reorder_window must be >= 0")
        if self.em_iterations < 1:
            raise ConfigError("em_iterations must be >= 1")


@dataclass(frozen=True, eq=False)
class Agent:
    agent_id: str
    vocab_s: Vocab
    vocab_t: Vocab
    table_s2t: TranslationTable
    table_t2s: TranslationTable
    lm_s: LanguageModel
    lm_t: LanguageModel
    reorder_window: int = 2
    lm_weight: float = 0.4
    seed: int = 0

    def table(self, direction: str) -> TranslationTable:
        return self.table_s2t if direction == S2T else self.table_t2s

    def output_lm(self, direction: str) -> LanguageModel:
        return self.lm_t if direction == S2T else self.lm_s

    def output_vocab(self, direction: str) -> Vocab:
        return self.vocab_t if direction == S2T else self.vocab_s

    def input_vocab(self, direction: str) -> Vocab:
        return self.vocab_s if direction == S2T else self.vocab_t

    @cached_property
    def channels(self) -> dict:
        return {d: Channel(self.table(d).probs, self.output_lm(d), self.lm_weight, self.reorder_window)
                for d in DIRECTIONS}

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha1()
        for d in DIRECTIONS:
            h.update(self.table(d).probs.tobytes())
        for lm in (self.lm_s, self.lm_t):
            h.update(lm.to_counts_tsv().encode())
        h.update(repr((self.reorder_window, self.lm_weight, len(self.vocab_s), len(self.vocab_t))).encode())
        return h.hexdigest()

    def same_params(self, other: "Agent") -> bool:
        return self.fingerprint == other.fingerprint

    def with_tables(self, **tables) -> "Agent":
        return replace(self, **tables)

    # --- serialization ---

    def save(self, path) -> None:
        os.makedirs(path, exist_ok=True)
        files = {
            "vocab.s.tsv": self.vocab_s.to_tsv(),
            "vocab.t.tsv": self.vocab_t.to_tsv(),
            "table.s2t.tsv": self.table_s2t.to_tsv(self.vocab_s, self.vocab_t),
            "table.t2s.tsv": self.table_t2s.to_tsv(self.vocab_t, self.vocab_s),
            "lm.s.counts.tsv": self.lm_s.to_counts_tsv(),
            "lm.t.counts.tsv": self.lm_t.to_counts_tsv(),
            "lm.s.dump.tsv": self.lm_s.dump(),
            "lm.t.dump.tsv": self.lm_t.dump(),
        }
        meta = {"agent_id": self.agent_id, "seed": self.seed, "lm_weight": self.lm_weight,
                "reorder_window": self.reorder_window, "lm_order": self.lm_s.order,
                "em_iterations": {S2T: self.table_s2t.em_iterations, T2S: self.table_t2s.em_iterations}}
        files["meta.json"] = json.dumps(meta, indent=1, sort_keys=True) + "\n"
        for name, text in files.items():
            with open(os.path.join(path, name), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)

    @classmethod
    def load(cls, path) -> "Agent":
        def read(name):
            with open(os.path.join(path, name), encoding="utf-8") as fh:
                return fh.read()

        meta = json.loads(read("meta.json"))
        vs, vt = Vocab.from_tsv(read("vocab.s.tsv")), Vocab.from_tsv(read("vocab.t.tsv"))
        order = meta["lm_order"]
        return cls(
            agent_id=meta["agent_id"], vocab_s=vs, vocab_t=vt,
            table_s2t=TranslationTable.from_tsv(read("table.s2t.tsv"), S2T, vs, vt, meta["em_iterations"][S2T]),
            table_t2s=TranslationTable.from_tsv(read("table.t2s.tsv"), T2S, vt, vs, meta["em_iterations"][T2S]),
            lm_s=LanguageModel.from_counts_tsv(read("lm.s.counts.tsv"), vs, order),
            lm_t=LanguageModel.from_counts_tsv(read("lm.t.counts.tsv"), vt, order),
            reorder_window=meta["reorder_window"], lm_weight=meta["lm_weight"], seed=meta["seed"])


@dataclass(frozen=True, eq=False)
class StudentModel:
    agent: Agent
    recipe: str = ""
    pair_counts: dict = field(default_factory=dict)


# --- initialisation -------------------------------------------------------------


def _ranking(vocab: Vocab, rng: np.random.Generator) -> list[int]:
    ids = list(range(3, len(vocab)))
    keys = rng.random(len(ids))
    return [i for _, _, i in sorted(zip([-vocab.freq[i] for i in ids], keys, ids))]


def _jitter(ranking: list[int], p: float, rng: np.random.Generator) -> list[int]:
    out = list(ranking)
    draws = rng.random(len(out))
    i = 0
    while i < len(out) - 1:
        if draws[i] < p:
            out[i], out[i + 1] = out[i + 1], out[i]
            i += 2
        else:
            i += 1
    return out


def _rank_table(src_rank, tgt_rank, n_src, n_tgt, mass) -> np.ndarray:
    probs = reserved_rows(n_src, n_tgt)
    ns, nt = len(src_rank), len(tgt_rank)
    side = (1.0 - mass) / 2.0
    for i, s in enumerate(src_rank):
        c = i if ns <= 1 else int(round(i * (nt - 1) / (ns - 1)))
        row = {}
        for off, m in ((-1, side), (0, mass), (1, side)):
            r = c + off
            if 0 <= r < nt:
                row[tgt_rank[r]] = m
        z = sum(row.values())
        for t, m in row.items():
            probs[s, t] = m / z
    return probs


def init_agent(mono_s: Corpus, mono_t: Corpus, seed: int, cfg: AgentConfig = AgentConfig(),
               agent_id: str | None = None, lms: tuple | None = None) -> Agent:
    """Frequency-rank matching prior plus LMs on each monolingual side.

    ``lms`` may pass pre-trained ``(lm_s, lm_t)`` for the same corpora; they
    are a pure function of the corpora, so sharing them only saves time.
    """
    if len(mono_s) == 0 or len(mono_t) == 0:
        raise ConfigError("both monolingual corpora must be non-empty")
    vs, vt = mono_s.vocab, mono_t.vocab
    a, b = len(vs) - 3, len(vt) - 3
    if max(a, b) > 1.5 * min(a, b):
        warnings.warn(f"vocabulary sizes {a} and {b} differ by more than 50%", InitDegenerate)
    rng = np.random.default_rng(seed)
    rank_s = _ranking(vs, rng)
    rank_t = _jitter(_ranking(vt, rng), cfg.jitter_prob, rng)
    s2t = _rank_table(rank_s, rank_t, len(vs), len(vt), cfg.rank_mass)
    t2s = _rank_table(rank_t, rank_s, len(vt), len(vs), cfg.rank_mass)
    if lms is None:
        lms = (train_lm(mono_s, cfg.lm_order), train_lm(mono_t, cfg.lm_order))
    return Agent(agent_id or f"agent{seed}", vs, vt, TranslationTable(S2T, s2t), TranslationTable(T2S, t2s),
                 lms[0], lms[1], cfg.reorder_window, cfg.lm_weight, seed)


# --- decoding -------------------------------------------------------------------


def next_token_distribution(agent: Agent, src: Sentence, prefix: Sentence, direction: str) -> np.ndarray:
    ch = agent.channels[direction]
    if len(prefix) > len(src) + agent.reorder_window:
        raise ValueError("prefix longer than |src| + reorder_window")
    state = replay(ch, src, tuple(prefix))
    p, _ = ch.step(state, tuple(prefix))
    return p.copy()


def translate(agent: Agent, src: Sentence, direction: str, dc: DecodeConfig = GREEDY, index: int = 0) -> Sentence:
    return decode([agent.channels[direction]], src, dc, index)


def ensemble_translate(agents: Sequence[Agent], src: Sentence, direction: str, dc: DecodeConfig = GREEDY,
                       index: int = 0) -> Sentence:
    if not agents:
        raise ConfigError("ensemble needs at least one agent")
    check_shared_vocab(agents)
    return decode([a.channels[direction] for a in agents], src, dc, index)


class TranslationCache:
    """Memo of whole-corpus translations keyed by agent parameters and inputs."""

    def __init__(self):
        self._store: dict = {}
        self.hits = 0

    def get(self, key):
        hit = self._store.get(key)
        if hit is not None:
            self.hits += 1
        return hit

    def put(self, key, value):
        self._store[key] = value


def translate_all(agents, sentences: Sequence[Sentence], direction: str, dc: DecodeConfig = GREEDY,
                  workers: int = 1, cache: TranslationCache | None = None) -> list:
    """Translate a batch; a single agent or a list (ensemble)."""
    agents = [agents] if isinstance(agents, Agent) else list(agents)
    if len(agents) > 1:
        check_shared_vocab(agents)
    sentences = tuple(tuple(s) for s in sentences)
    key = None
    if cache is not None:
        key = (tuple(a.fingerprint for a in agents), direction, dc, hash(sentences), len(sentences))
        hit = cache.get(key)
        if hit is not None:
            return list(hit)
    out = decode_many([a.channels[direction] for a in agents], sentences, dc, workers)
    if cache is not None:
        cache.put(key, tuple(out))
    return out


# --- training -------------------------------------------------------------------


def _estimate(pairs, n_src, n_tgt, iterations, fallback: np.ndarray | None) -> np.ndarray:
    probs, seen = ibm1_em(pairs, n_src, n_tgt, iterations)
    base = fallback if fallback is not None else _unk_rows(n_src, n_tgt)
    out = base.copy()
    out[seen] = probs[seen]
    return out


def _unk_rows(n_src, n_tgt):
    probs = reserved_rows(n_src, n_tgt)
    probs[3:, UNK_ID] = 1.0
    return probs


def ibt_train(agent: Agent, mono_s: Corpus, mono_t: Corpus, rounds: int, subsample: int,
              dc: DecodeConfig = GREEDY, em_iterations: int = EM_ITERATIONS, workers: int = 1,
              on_round: Callable | None = None) -> Agent:
    """Iterative back-translation with IBM-1 re-estimation; LMs stay fixed.

    Each round re-estimates s->t from back-translated target text, then t->s
    from source text translated by the freshly updated s->t table. Source
    words absent from the synthetic side keep their previous row.
    ``on_round(r, agent)`` is called after every round.
    """
    if rounds < 0:
        raise ConfigError("rounds must be >= 0")
    if subsample <= 0:
        raise ConfigError("subsample must be >= 1")
    if subsample > min(len(mono_s), len(mono_t)):
        raise ConfigError("subsample exceeds corpus size")
    for r in range(1, rounds + 1):
        for k, d in enumerate(DIRECTIONS):
            real = mono_t if d == S2T else mono_s
            rng = np.random.default_rng((agent.seed, r, k))
            idx = np.sort(rng.choice(len(real), size=subsample, replace=False))
            targets = [real[i] for i in idx]
            synth = translate_all(agent, targets, reverse(d), dc, workers)
            table = agent.table(d)
            n_src, n_tgt = table.shape
            probs = _estimate(list(zip(synth, targets)), n_src, n_tgt, em_iterations, table.probs)
            new = TranslationTable(d, probs, em_iterations)
            agent = agent.with_tables(**{f"table_{d}": new})
        if on_round is not None:
            on_round(r, agent)
    return agent


def supervised_fit(pairs, vocab_s: Vocab, vocab_t: Vocab, cfg: AgentConfig = AgentConfig(),
                   recipe: str = "", agent_id: str = "student", lms: tuple | None = None) -> StudentModel:
    """Count-based MLE on directed pairs: IBM-1 tables plus target-side LMs.

    ``pairs`` is any iterable of objects with ``src``, ``tgt`` and
    ``direction`` attributes. Every pair has weight one. ``lms`` replaces the
    pair-side LMs with given ``(lm_s, lm_t)``, e.g. ones trained on the real
    monolingual text.
    """
    by_dir: dict = {S2T: [], T2S: []}
    counts: dict = {}
    for p in pairs:
        by_dir[p.direction].append((p.src, p.tgt))
        key = f"{p.direction}.level{p.level}"
        counts[key] = counts.get(key, 0) + 1
    for d in DIRECTIONS:
        if not by_dir[d]:
            raise MissingDirection(f"no {d} pairs to fit")
    tables = {}
    for d, (vs, vt) in ((S2T, (vocab_s, vocab_t)), (T2S, (vocab_t, vocab_s))):
        probs = _estimate(by_dir[d], len(vs), len(vt), cfg.em_iterations, None)
        tables[d] = TranslationTable(d, probs, cfg.em_iterations)
    if lms is None:
        lm_t = train_lm(Corpus("t", tuple(t for _, t in by_dir[S2T]), vocab_t), cfg.lm_order)
        lm_s = train_lm(Corpus("s", tuple(t for _, t in by_dir[T2S]), vocab_s), cfg.lm_order)
    else:
        lm_s, lm_t = lms
    agent = Agent(agent_id, vocab_s, vocab_t, tables[S2T], tables[T2S], lm_s, lm_t,
                  cfg.reorder_window, cfg.lm_weight, 0)
    return StudentModel(agent, recipe, dict(sorted(counts.items())))
