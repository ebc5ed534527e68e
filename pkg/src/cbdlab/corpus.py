"""Word-level corpora, vocabularies and the synthetic cipher-language benchmark.

A sentence is a plain tuple of integer token ids. Corpora are immutable once
built; the benchmark generator is a pure function of its config and seed.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, EmptyCorpus, EmptySentence, OverlongSentence

UNK, BOS, EOS = "<unk>", "<bos>", "<eos>"
UNK_ID, BOS_ID, EOS_ID = 0, 1, 2
RESERVED = (UNK, BOS, EOS)
MAX_LEN = 175

Sentence = tuple  # tuple[int, ...]


class Vocab:
    """Bijective surface-string <-> id map with reserved ids 0..2."""

    def __init__(self, tokens: Sequence[str], freqs: Sequence[int]):
        if len(tokens) != len(freqs):
            raise ValueError("tokens and freqs differ in length")
        self.itos = list(RESERVED) + list(tokens)
        self.freq = [0, 0, 0] + [int(f) for f in freqs]
        self.stoi = {s: i for i, s in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos and self.freq == other.freq

    def __hash__(self):
        return hash(tuple(self.itos))

    def __repr__(self):
        return f"Vocab(size={len(self)})"

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def word(self, idx: int) -> str:
        return self.itos[idx]

    def words(self) -> list[str]:
        """Non-reserved surface strings in id order."""
        return self.itos[len(RESERVED):]

    def encode(self, tokens: Iterable[str]) -> Sentence:
        return tuple(self.stoi.get(t, UNK_ID) for t in tokens)

    def decode(self, sent: Sentence) -> list[str]:
        return [self.itos[i] for i in sent]

    def to_tsv(self) -> str:
        return "".join(f"{w}\t{f}\n" for w, f in zip(self.words(), self.freq[len(RESERVED):]))

    @classmethod
    def from_tsv(cls, text: str) -> "Vocab":
        tokens, freqs = [], []
        for line in text.splitlines():
            w, f = line.split("\t")
            tokens.append(w)
            freqs.append(int(f))
        return cls(tokens, freqs)


def tokenize(line: str, vocab: Vocab, max_len: int = MAX_LEN) -> Sentence:
    words = line.split()
    if not words:
        raise EmptySentence(repr(line))
    if len(words) > max_len:
        raise OverlongSentence(f"{len(words)} tokens > {max_len}")
    return vocab.encode(words)


def build_vocab(lines: Iterable[str], min_count: int = 1) -> Vocab:
    """Ids by descending frequency, ties broken by surface string."""
    if min_count < 1:
        raise ConfigError("min_count must be >= 1")
    counts: Counter = Counter()
    n_lines = 0
    for line in lines:
        n_lines += 1
        counts.update(line.split())
    if n_lines == 0 or not counts:
        raise EmptyCorpus("no tokens to build a vocabulary from")
    for r in RESERVED:
        counts.pop(r, None)
    kept = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    return Vocab(kept, [counts[w] for w in kept])


@dataclass(frozen=True, eq=True)
class Corpus:
    lang: str
    sentences: tuple
    vocab: Vocab = field(compare=True)

    def __post_init__(self):
        n = len(self.vocab)
        for s in self.sentences:
            if not 1 <= len(s) <= MAX_LEN:
                raise ValueError(f"sentence length {len(s)} outside [1, {MAX_LEN}]")
            if min(s) < 0 or max(s) >= n:
                raise ValueError("token id outside vocabulary")

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]

    def lines(self) -> list[str]:
        itos = self.vocab.itos
        return [" ".join(itos[i] for i in s) for s in self.sentences]

    def with_sentences(self, sentences) -> "Corpus":
        return Corpus(self.lang, tuple(tuple(s) for s in sentences), self.vocab)


def corpus_from_lines(lines: Iterable[str], lang: str, vocab: Vocab | None = None,
                      max_len: int = MAX_LEN) -> Corpus:
    lines = list(lines)
    if vocab is None:
        vocab = build_vocab(lines)
    return Corpus(lang, tuple(tokenize(l, vocab, max_len) for l in lines), vocab)


def write_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in corpus.lines():
            fh.write(line + "\n")


def read_corpus(path, lang: str, vocab: Vocab | None = None) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    return corpus_from_lines(lines, lang, vocab)


# --- synthetic cipher benchmark -------------------------------------------------


@dataclass(frozen=True)
class GeneratorConfig:
    vocab_size: int = 200
    sentences_per_side: int = 5000
    swap_prob: float = 0.2
    zipf_exponent: float = 1.1
    test_size: int = 500
    min_len: int = 4
    max_len: int = 12
    successors: int = 4  # sparse successor set per word in the bigram grammar
    background: float = 0.02  # mass of the global unigram in every transition row
    successor_skew: float = 0.5  # Zipf power used when choosing successor sets

    def validate(self):
        if self.vocab_size < 10:
            raise ConfigError("vocab_size must be >= 10")
        if self.sentences_per_side < 100:
            raise ConfigError("sentences_per_side must be >= 100")
        if not 0.0 <= self.swap_prob <= 0.5:
            raise ConfigError("swap_prob must lie in [0, 0.5]")
        if self.test_size >= self.sentences_per_side:
            raise ConfigError("test_size must be smaller than sentences_per_side")
        if self.test_size < 1:
            raise ConfigError("test_size must be >= 1")
        if not 1 <= self.min_len <= self.max_len <= MAX_LEN:
            raise ConfigError("need 1 <= min_len <= max_len <= 175")
        if not 1 <= self.successors < self.vocab_size:
            raise ConfigError("successors must lie in [1, vocab_size - 1]")
        if not 0.0 < self.background <= 1.0:
            raise ConfigError("background must lie in (0, 1]")


def adjacent_swaps(n: int, p: float, rng: np.random.Generator) -> tuple:
    """Left-to-right scan; position i swaps with i+1 with probability p, never overlapping."""
    swaps = []
    draws = rng.random(max(n - 1, 0))
    i = 0
    while i < n - 1:
        if draws[i] < p:
            swaps.append(i)
            i += 2
        else:
            i += 1
    return tuple(swaps)


def apply_swaps(tokens: Sequence, swaps: Sequence[int]) -> list:
    out = list(tokens)
    for i in swaps:
        out[i], out[i + 1] = out[i + 1], out[i]
    return out


def undo_swaps(tokens: Sequence, swaps: Sequence[int]) -> list:
    out = list(tokens)
    for i in reversed(swaps):
        out[i], out[i + 1] = out[i + 1], out[i]
    return out


def is_swap_variant(x: Sequence, r: Sequence) -> bool:
    """True if some set of non-overlapping adjacent swaps turns ``r`` into ``x``."""
    if len(x) != len(r):
        return False
    i, n = 0, len(r)
    while i < n:
        if x[i] == r[i]:
            i += 1
        elif i + 1 < n and x[i] == r[i + 1] and x[i + 1] == r[i]:
            i += 2
        else:
            return False
    return True


class _Grammar:
    """Order-2 (bigram) Markov source over a Zipf-skewed inventory."""

    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator):
        v = cfg.vocab_size
        zipf = np.arange(1, v + 1, dtype=float) ** -cfg.zipf_exponent
        zipf /= zipf.sum()
        pick = zipf ** cfg.successor_skew
        pick /= pick.sum()
        rows = np.empty((v + 1, v))
        preds: list = [set() for _ in range(v)]
        for r in range(v + 1):
            # no self-successors and no mutual successor pairs: they would make runs
            # like "a a a" or "a b a b" (which swaps turn into runs) common in the real text
            q = pick.copy()
            if r < v:
                q[r] = 0.0
                keep = q.copy()
                q[list(preds[r])] = 0.0
                if np.count_nonzero(q) < cfg.successors:  # tiny vocabularies
                    q = keep
            succ = rng.choice(v, size=cfg.successors, replace=False, p=q / q.sum())
            if r < v:
                for w in succ:
                    preds[int(w)].add(r)
            w = zipf[succ] * rng.exponential(size=cfg.successors)
            sparse = np.zeros(v)
            sparse[succ] = w / w.sum()
            rows[r] = cfg.background * zipf + (1.0 - cfg.background) * sparse
        self.cdf = np.cumsum(rows, axis=1)
        self.cdf[:, -1] = 1.0
        self.cfg = cfg

    def sample(self, rng: np.random.Generator) -> tuple:
        n = int(rng.integers(self.cfg.min_len, self.cfg.max_len + 1))
        u = rng.random(n)
        prev = self.cfg.vocab_size  # start row
        out = []
        for k in range(n):
            w = int(np.searchsorted(self.cdf[prev], u[k], side="right"))
            out.append(w)
            prev = w
        return tuple(out)


@dataclass(frozen=True)
class BenchmarkSet:
    mono_s: Corpus
    mono_t: Corpus
    gold_lexicon: dict
    test_pairs: tuple  # ((src Sentence, tgt Sentence), ...)
    test_swaps: tuple  # recorded adjacent swaps per test pair
    config: GeneratorConfig
    seed: int

    @property
    def vocab_s(self) -> Vocab:
        return self.mono_s.vocab

    @property
    def vocab_t(self) -> Vocab:
        return self.mono_t.vocab

    def test_corpus(self, side: str) -> Corpus:
        k = 0 if side == "s" else 1
        mono = self.mono_s if side == "s" else self.mono_t
        return mono.with_sentences(p[k] for p in self.test_pairs)

    def gold_translate(self, sent: Sentence, swaps: Sequence[int] = ()) -> Sentence:
        """Word-by-word lexicon image of a source sentence, then the given swaps."""
        words = [self.gold_lexicon[w] for w in self.vocab_s.decode(sent)]
        return self.vocab_t.encode(apply_swaps(words, swaps))

    def save(self, path) -> None:
        os.makedirs(path, exist_ok=True)
        write_corpus(self.mono_s, os.path.join(path, "mono.s.txt"))
        write_corpus(self.mono_t, os.path.join(path, "mono.t.txt"))
        write_corpus(self.test_corpus("s"), os.path.join(path, "test.s.txt"))
        write_corpus(self.test_corpus("t"), os.path.join(path, "test.t.txt"))
        with open(os.path.join(path, "lexicon.tsv"), "w", encoding="utf-8", newline="\n") as fh:
            for s in sorted(self.gold_lexicon):
                fh.write(f"{s}\t{self.gold_lexicon[s]}\n")
        with open(os.path.join(path, "test.swaps.txt"), "w", encoding="utf-8", newline="\n") as fh:
            for sw in self.test_swaps:
                fh.write(" ".join(map(str, sw)) + "\n")
        meta = {"seed": self.seed, "config": asdict(self.config)}
        with open(os.path.join(path, "meta.json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "BenchmarkSet":
        with open(os.path.join(path, "meta.json"), encoding="utf-8") as fh:
            meta = json.load(fh)
        mono_s = read_corpus(os.path.join(path, "mono.s.txt"), "s")
        mono_t = read_corpus(os.path.join(path, "mono.t.txt"), "t")
        test_s = read_corpus(os.path.join(path, "test.s.txt"), "s", mono_s.vocab)
        test_t = read_corpus(os.path.join(path, "test.t.txt"), "t", mono_t.vocab)
        lex = {}
        with open(os.path.join(path, "lexicon.tsv"), encoding="utf-8") as fh:
            for line in fh.read().splitlines():
                s, t = line.split("\t")
                lex[s] = t
        with open(os.path.join(path, "test.swaps.txt"), encoding="utf-8") as fh:
            swaps = tuple(tuple(int(x) for x in line.split()) for line in fh.read().split("\n")[:len(test_s)])
        return cls(mono_s, mono_t, lex, tuple(zip(test_s.sentences, test_t.sentences)), swaps,
                   GeneratorConfig(**meta["config"]), int(meta["seed"]))


def generate_language_pair(cfg: GeneratorConfig, seed: int) -> BenchmarkSet:
    """Sample a non-parallel cipher-language pair with a gold test set.

    Separate random streams drive the grammar, lexicon, both base samples, the
    target reorderings and the test set, so e.g. changing ``swap_prob`` leaves
    the base sentences untouched.
    """
    cfg.validate()
    streams = np.random.SeedSequence(seed).spawn(7)
    g_rng, lex_rng, s_rng, t_rng, swap_rng, test_rng, tswap_rng = (np.random.default_rng(s) for s in streams)
    grammar = _Grammar(cfg, g_rng)
    v = cfg.vocab_size
    width = len(str(v - 1))
    src_words = [f"s{i:0{width}d}" for i in range(v)]
    tgt_words = [f"t{i:0{width}d}" for i in range(v)]
    perm = lex_rng.permutation(v)
    lexicon = {src_words[i]: tgt_words[int(perm[i])] for i in range(v)}

    n = cfg.sentences_per_side
    base_s = [grammar.sample(s_rng) for _ in range(n)]
    by_bag: dict = {}
    for b in set(base_s):
        by_bag.setdefault(tuple(sorted(b)), []).append(b)
    # a target sentence must not be a reordering of any source sentence's image
    base_t, swaps_t = [], []
    while len(base_t) < n:
        b = grammar.sample(t_rng)
        sw = adjacent_swaps(len(b), cfg.swap_prob, swap_rng)
        real = apply_swaps(b, sw)
        if any(is_swap_variant(x, real) for x in by_bag.get(tuple(sorted(b)), ())):
            continue
        base_t.append(b)
        swaps_t.append(sw)

    def to_src(b):
        return [src_words[i] for i in b]

    def to_tgt(b, swaps):
        return apply_swaps([tgt_words[int(perm[i])] for i in b], swaps)

    lines_s = [" ".join(to_src(b)) for b in base_s]
    lines_t = [" ".join(to_tgt(b, sw)) for b, sw in zip(base_t, swaps_t)]
    mono_s = corpus_from_lines(lines_s, "s")
    mono_t = corpus_from_lines(lines_t, "t")
    vs, vt = mono_s.vocab, mono_t.vocab

    known_s = set(mono_s.sentences)
    known_t = set(mono_t.sentences)
    used = set(base_s) | set(base_t)
    pairs, swaps_out = [], []
    attempts = 0
    while len(pairs) < cfg.test_size:
        attempts += 1
        if attempts > 200 * cfg.test_size:
            raise ConfigError("could not sample enough held-out test sentences")
        b = grammar.sample(test_rng)
        sw = adjacent_swaps(len(b), cfg.swap_prob, tswap_rng)
        if b in used:
            continue
        src_tok, tgt_tok = to_src(b), to_tgt(b, sw)
        if any(w not in vs for w in src_tok) or any(w not in vt for w in tgt_tok):
            continue
        xs, xt = vs.encode(src_tok), vt.encode(tgt_tok)
        if xs in known_s or xt in known_t:
            continue
        used.add(b)
        pairs.append((xs, xt))
        swaps_out.append(sw)
    return BenchmarkSet(mono_s, mono_t, lexicon, tuple(pairs), tuple(swaps_out), cfg, seed)
