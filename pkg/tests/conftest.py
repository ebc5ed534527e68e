import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from cbdlab.agent import S2T, T2S, Agent, AgentConfig, ibt_train, init_agent  # noqa: E402
from cbdlab.corpus import Corpus, GeneratorConfig, Vocab, corpus_from_lines, generate_language_pair  # noqa: E402
from cbdlab.lm import train_lm  # noqa: E402
from cbdlab.tables import TranslationTable, reserved_rows  # noqa: E402


def map_table(direction, mapping, n_src, n_tgt):
    """Deterministic table: source id -> target id with probability 1."""
    probs = reserved_rows(n_src, n_tgt)
    for s, t in mapping.items():
        probs[s, t] = 1.0
    return TranslationTable(direction, probs)


def table_agent(vocab_s, vocab_t, s2t, t2s, agent_id="a", window=0, lm_weight=0.0, mono=None):
    """Agent built from explicit word maps (ids), with LMs on ``mono`` or a trivial corpus."""
    if mono is None:
        ms = Corpus("s", tuple((i,) for i in range(3, len(vocab_s))), vocab_s)
        mt = Corpus("t", tuple((i,) for i in range(3, len(vocab_t))), vocab_t)
    else:
        ms, mt = mono
    return Agent(agent_id, vocab_s, vocab_t,
                 map_table(S2T, s2t, len(vocab_s), len(vocab_t)),
                 map_table(T2S, t2s, len(vocab_t), len(vocab_s)),
                 train_lm(ms, 2), train_lm(mt, 2), window, lm_weight, 0)


def identity_agent(vocab, agent_id="id", window=0, lm_weight=0.0):
    ident = {i: i for i in range(3, len(vocab))}
    return table_agent(vocab, vocab, ident, ident, agent_id, window, lm_weight)


@pytest.fixture(scope="session")
def small_bench():
    cfg = GeneratorConfig(vocab_size=50, sentences_per_side=600, test_size=60)
    return generate_language_pair(cfg, 3)


@pytest.fixture(scope="session")
def small_agents(small_bench):
    """Two distinct agents after one short IBT round."""
    b = small_bench
    lms = (train_lm(b.mono_s), train_lm(b.mono_t))
    out = []
    for k in (1, 2):
        a = init_agent(b.mono_s, b.mono_t, 10 + k, AgentConfig(), agent_id=f"theta{k}", lms=lms)
        out.append(ibt_train(a, b.mono_s, b.mono_t, 1, 300))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def words_corpus(lines, lang="s", vocab=None):
    return corpus_from_lines(lines, lang, vocab)


def vocab_of(words):
    return Vocab(list(words), [1] * len(words))


def pytest_terminal_summary(terminalreporter):
    from _report import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(LINES):
            terminalreporter.write_line(line)
