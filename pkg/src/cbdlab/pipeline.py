"""Synthetic-pair recipes: CBD, GCBD, the BD ablations, ensemble distillation, noising.

Every recipe emits :class:`SyntheticPair` records. A chain starts at sentence
``origin_index`` of the monolingual side ``origin_side``: level-1 pairs link
the real sentence x with its translation y, level-2 pairs link y with its
back-translation z.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .agent import (S2T, T2S, Agent, AgentConfig, StudentModel, TranslationCache, reverse, supervised_fit,
                    translate_all)
from .corpus import Corpus, Vocab
from .decoding import GREEDY, DecodeConfig
from .errors import ConfigError, SameAgentError

RECIPES = ("cbd", "gcbd", "bd11", "bd12", "bd22", "ens-distill", "noised")


@dataclass(frozen=True)
class SyntheticPair:
    src: tuple
    tgt: tuple
    direction: str
    level: int
    alpha_id: str
    beta_id: str  # "" for level-1 pairs
    origin_index: int
    origin_side: str = "s"

    def key(self) -> tuple:
        return (self.direction, self.src, self.tgt)

    def family(self) -> tuple:
        """One of the eight directed pair families of a CBD chain."""
        return (self.origin_side, self.level, self.direction)


@dataclass(frozen=True)
class SyntheticCorpus:
    pairs: tuple
    recipe: str
    decode: str = ""
    seed: int = 0
    dropped: int = 0

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __add__(self, other: "SyntheticCorpus") -> "SyntheticCorpus":
        return replace(self, pairs=self.pairs + other.pairs, dropped=self.dropped + other.dropped)

    def multiset(self) -> list:
        """Pair contents without agent ids, sorted; for recipe-equivalence checks."""
        return sorted((p.direction, p.level, p.origin_side, p.origin_index, p.src, p.tgt) for p in self.pairs)

    def generated_sentences(self) -> list:
        """The y and z sentence of every chain, each once."""
        out = []
        for p in self.pairs:
            first = p.direction == (S2T if p.origin_side == "s" else T2S)
            if p.level == 1 and first:
                out.append(p.tgt)
            elif p.level == 2 and not first:
                out.append(p.tgt)
        return out

    def check_chains(self) -> None:
        """Raise ValueError unless every level-2 pair's y matches a level-1 translation."""
        ys = set()
        for p in self.pairs:
            if p.level == 1:
                first = p.direction == (S2T if p.origin_side == "s" else T2S)
                ys.add((p.origin_side, p.origin_index, p.alpha_id, p.tgt if first else p.src))
        for p in self.pairs:
            if p.level != 2:
                continue
            # (y, z) runs opposite to the chain's first hop, (z, y) along it
            first = p.direction == (S2T if p.origin_side == "s" else T2S)
            y = p.tgt if first else p.src
            if (p.origin_side, p.origin_index, p.alpha_id, y) not in ys:
                raise ValueError(f"level-2 pair at {p.origin_side}:{p.origin_index} has no level-1 parent")

    # --- TSV ---

    def to_tsv(self, vocab_s: Vocab, vocab_t: Vocab) -> str:
        lines = [f"# recipe={self.recipe}\tdecode={self.decode}\tseed={self.seed}\tdropped={self.dropped}\n"]
        for p in self.pairs:
            vs, vt = (vocab_s, vocab_t) if p.direction == S2T else (vocab_t, vocab_s)
            src = " ".join(vs.itos[i] for i in p.src)
            tgt = " ".join(vt.itos[i] for i in p.tgt)
            lines.append(f"{src}\t{tgt}\t{p.direction}\t{p.level}\t{p.alpha_id}\t{p.beta_id}\t"
                         f"{p.origin_side}:{p.origin_index}\n")
        return "".join(lines)

    @classmethod
    def from_tsv(cls, text: str, vocab_s: Vocab, vocab_t: Vocab) -> "SyntheticCorpus":
        rows = text.split("\n")
        head = dict(kv.split("=", 1) for kv in rows[0][2:].split("\t"))
        pairs = []
        for line in rows[1:]:
            if not line:
                continue
            src, tgt, d, level, a, b, origin = line.split("\t")
            vs, vt = (vocab_s, vocab_t) if d == S2T else (vocab_t, vocab_s)
            side, idx = origin.split(":")
            pairs.append(SyntheticPair(vs.encode(src.split(" ")), vt.encode(tgt.split(" ")), d, int(level),
                                       a, b, int(idx), side))
        return cls(tuple(pairs), head["recipe"], head.get("decode", ""), int(head.get("seed", 0)),
                   int(head.get("dropped", 0)))


def _chains(alpha: Agent, beta: Agent | None, mono_s: Corpus, mono_t: Corpus, dc: DecodeConfig,
            cache: TranslationCache | None, workers: int, level2: bool) -> list:
    pairs = []
    for side, mono in (("s", mono_s), ("t", mono_t)):
        fwd = S2T if side == "s" else T2S
        bwd = reverse(fwd)
        xs = mono.sentences
        ys = translate_all(alpha, xs, fwd, dc, workers, cache)
        zs = translate_all(beta, ys, bwd, dc, workers, cache) if level2 else None
        a, b = alpha.agent_id, (beta.agent_id if level2 else "")
        for i, (x, y) in enumerate(zip(xs, ys)):
            pairs.append(SyntheticPair(x, y, fwd, 1, a, "", i, side))
            pairs.append(SyntheticPair(y, x, bwd, 1, a, "", i, side))
            if level2:
                z = zs[i]
                pairs.append(SyntheticPair(y, z, bwd, 2, a, b, i, side))
                pairs.append(SyntheticPair(z, y, fwd, 2, a, b, i, side))
    return pairs


def generate_cbd_pairs(alpha: Agent, beta: Agent, mono_s: Corpus, mono_t: Corpus, dc: DecodeConfig = GREEDY,
                       cache: TranslationCache | None = None, workers: int = 1) -> SyntheticCorpus:
    """One role assignment of cross-model back-translation: 4 pairs per monolingual sentence."""
    if alpha.agent_id == beta.agent_id:
        raise SameAgentError(f"alpha and beta are both {alpha.agent_id!r}")
    pairs = _chains(alpha, beta, mono_s, mono_t, dc, cache, workers, level2=True)
    return SyntheticCorpus(tuple(pairs), "cbd", dc.describe(), dc.seed)


def _check_distinct(agents: Sequence[Agent]) -> None:
    ids = [a.agent_id for a in agents]
    if len(set(ids)) != len(ids):
        raise SameAgentError(f"agent ids not distinct: {ids}")


def cbd_pairs(theta1: Agent, theta2: Agent, mono_s, mono_t, dc=GREEDY, cache=None, workers=1) -> SyntheticCorpus:
    both = (generate_cbd_pairs(theta1, theta2, mono_s, mono_t, dc, cache, workers)
            + generate_cbd_pairs(theta2, theta1, mono_s, mono_t, dc, cache, workers))
    return both


def gcbd_pairs(agents: Sequence[Agent], mono_s, mono_t, dc=GREEDY, cache=None, workers=1) -> SyntheticCorpus:
    if len(agents) < 2:
        raise ConfigError("GCBD needs at least two agents")
    _check_distinct(agents)
    out = None
    for i, j in itertools.permutations(range(len(agents)), 2):
        part = generate_cbd_pairs(agents[i], agents[j], mono_s, mono_t, dc, cache, workers)
        out = part if out is None else out + part
    return replace(out, recipe=f"gcbd({len(agents)})")


def cbd_train(theta1: Agent, theta2: Agent, mono_s: Corpus, mono_t: Corpus, dc: DecodeConfig = GREEDY,
              fit_cfg: AgentConfig = AgentConfig(), cache=None, workers: int = 1, passes: int = 1,
              lms: tuple | None = None) -> StudentModel:
    """Both role orders (theta1 as alpha, then theta2 as alpha), then one count-based fit.

    With ``passes > 1`` (meaningful for sampling decoders) each pass
    regenerates the pairs under a pass-specific decode seed and the student
    is fitted on the union.
    """
    if theta1.agent_id == theta2.agent_id:
        raise SameAgentError("cbd_train needs two distinct agents")
    pairs = _multi_pass(lambda d: cbd_pairs(theta1, theta2, mono_s, mono_t, d, cache, workers), dc, passes)
    return supervised_fit(pairs, mono_s.vocab, mono_t.vocab, fit_cfg, recipe="cbd", lms=lms)


def gcbd_train(agents: Sequence[Agent], mono_s: Corpus, mono_t: Corpus, dc: DecodeConfig = GREEDY,
               fit_cfg: AgentConfig = AgentConfig(), cache=None, workers: int = 1, passes: int = 1,
               lms: tuple | None = None) -> StudentModel:
    pairs = _multi_pass(lambda d: gcbd_pairs(agents, mono_s, mono_t, d, cache, workers), dc, passes)
    return supervised_fit(pairs, mono_s.vocab, mono_t.vocab, fit_cfg, recipe=f"gcbd({len(agents)})", lms=lms)


def _multi_pass(gen, dc: DecodeConfig, passes: int) -> SyntheticCorpus:
    if passes < 1:
        raise ConfigError("passes must be >= 1")
    out = gen(dc)
    for k in range(1, passes):
        out = out + gen(dc.with_seed(dc.seed + k))
    return out


def bd_generate(variant: str, agents: Sequence[Agent], mono_s: Corpus, mono_t: Corpus, dc: DecodeConfig = GREEDY,
                cache=None, workers: int = 1) -> SyntheticCorpus:
    """Back-translation distillation without the cross-model rule.

    ``bd11``: level-1 pairs of a single agent. ``bd12``: level-1 pairs of two
    agents. ``bd22``: each agent back-translates its own outputs.
    """
    need = {"bd11": 1, "bd12": 2, "bd22": 2}
    if variant not in need:
        raise ConfigError(f"unknown BD variant {variant!r}")
    if len(agents) != need[variant]:
        raise ConfigError(f"{variant} needs exactly {need[variant]} agent(s), got {len(agents)}")
    if variant != "bd11":
        _check_distinct(agents)
    pairs = []
    for a in agents:
        pairs.extend(_chains(a, a, mono_s, mono_t, dc, cache, workers, level2=(variant == "bd22")))
    return SyntheticCorpus(tuple(pairs), variant, dc.describe(), dc.seed)


def ensemble_distill(agents: Sequence[Agent], mono_s: Corpus, mono_t: Corpus, dc: DecodeConfig = GREEDY,
                     cache=None, workers: int = 1) -> SyntheticCorpus:
    """Level-1 pairs from step-averaged ensemble decoding in both directions.

    A single agent is accepted (it reduces to ``bd11``) so the identity can be tested.
    """
    if not agents:
        raise ConfigError("ensemble distillation needs agents")
    agents = list(agents)
    name = "+".join(a.agent_id for a in agents)
    pairs = []
    for side, mono in (("s", mono_s), ("t", mono_t)):
        fwd = S2T if side == "s" else T2S
        ys = translate_all(agents, mono.sentences, fwd, dc, workers, cache)
        for i, (x, y) in enumerate(zip(mono.sentences, ys)):
            pairs.append(SyntheticPair(x, y, fwd, 1, name, "", i, side))
            pairs.append(SyntheticPair(y, x, reverse(fwd), 1, name, "", i, side))
    return SyntheticCorpus(tuple(pairs), "ens-distill", dc.describe(), dc.seed)


@dataclass(frozen=True)
class NoiseConfig:
    p_drop: float = 0.1
    p_swap: float = 0.1
    p_blank: float = 0.1

    def __post_init__(self):
        for name in ("p_drop", "p_swap", "p_blank"):
            v = getattr(self, name)
            if not 0.0 <= v <= 0.5 and not (name == "p_drop" and v == 1.0):
                raise ConfigError(f"{name} must lie in [0, 0.5]")


def noise_sentence(tokens: Sequence[int], cfg: NoiseConfig, n_vocab: int, rng: np.random.Generator) -> tuple:
    """Word drop, then non-overlapping adjacent swaps, then random replacement."""
    out = [t for t, u in zip(tokens, rng.random(len(tokens))) if u >= cfg.p_drop]
    draws = rng.random(max(len(out) - 1, 0))
    i = 0
    while i < len(out) - 1:
        if draws[i] < cfg.p_swap:
            out[i], out[i + 1] = out[i + 1], out[i]
            i += 2
        else:
            i += 1
    rep = rng.random(len(out))
    words = rng.integers(3, n_vocab, size=len(out))
    return tuple(int(w) if u < cfg.p_blank else t for t, u, w in zip(out, rep, words))


def apply_target_noise(pairs: SyntheticCorpus, noise_cfg: NoiseConfig, seed: int, vocab_s: Vocab,
                       vocab_t: Vocab) -> SyntheticCorpus:
    """Noise every target side independently (pair ``k`` uses seed ``(seed, k)``); drop emptied pairs."""
    out = []
    dropped = 0
    for k, p in enumerate(pairs.pairs):
        n_vocab = len(vocab_t) if p.direction == S2T else len(vocab_s)
        tgt = noise_sentence(p.tgt, noise_cfg, n_vocab, np.random.default_rng((seed, k)))
        if not tgt:
            dropped += 1
            continue
        out.append(replace(p, tgt=tgt))
    return SyntheticCorpus(tuple(out), "noised", pairs.decode, seed, pairs.dropped + dropped)
