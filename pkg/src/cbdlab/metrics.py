"""Corpus BLEU and the diversity instruments for synthetic corpora."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .agent import S2T, T2S, translate_all
from .decoding import GREEDY, DecodeConfig
from .errors import AlignmentError, EmptyCorpus

MAX_ORDER = 4


@dataclass(frozen=True)
class BleuScore:
    score: float
    precisions: tuple  # p_1 .. p_4
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    matches: tuple = ()
    totals: tuple = ()

    def __float__(self):
        return self.score

    def __str__(self):
        ps = "/".join(f"{100 * p:.1f}" for p in self.precisions)
        return f"BLEU = {self.score:.2f}, {ps} (BP={self.brevity_penalty:.3f}, hyp_len={self.hyp_len}, ref_len={self.ref_len})"


def _ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hyps: Sequence[Sequence], refs: Sequence[Sequence]) -> BleuScore:
    """multi-bleu.perl semantics: BLEU-4, single reference, no smoothing."""
    hyps, refs = list(hyps), list(refs)
    if len(hyps) != len(refs):
        raise AlignmentError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not hyps:
        raise EmptyCorpus("BLEU needs at least one sentence pair")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for h, r in zip(hyps, refs):
        h, r = tuple(h), tuple(r)
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, MAX_ORDER + 1):
            hc = _ngrams(h, n)
            if not hc:
                continue
            rc = _ngrams(r, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += sum(hc.values())
    precisions = tuple(m / t if t else 0.0 for m, t in zip(matches, totals))
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len > ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / hyp_len)
    if min(precisions) == 0.0:
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
    return BleuScore(score, precisions, bp, hyp_len, ref_len, tuple(matches), tuple(totals))


def has_triple_repeat(tokens: Sequence) -> bool:
    run = 0
    prev = object()
    for t in tokens:
        run = run + 1 if t == prev else 1
        if run >= 3:
            return True
        prev = t
    return False


def trigram_repetition_rate(sents: Sequence[Sequence]) -> float:
    """Fraction of sentences in which some token occurs three or more times in a row."""
    sents = list(sents)
    if not sents:
        raise EmptyCorpus("repetition rate needs at least one sentence")
    return sum(has_triple_repeat(s) for s in sents) / len(sents)


# --- diversity ---------------------------------------------------------------

SIDES = ("s", "t")


def roundtrip_label(side: str) -> str:
    return "s-t-s" if side == "s" else "t-s-t"


def reconstruction_bleu(mono, fwd, bwd, dc: DecodeConfig = GREEDY, side: str = "s", workers: int = 1,
                        cache=None) -> BleuScore:
    """Translate ``mono`` with ``fwd``, back with ``bwd``, score against the original.

    ``side`` names the language of ``mono``; for ``"t"`` the hops run t->s->t.
    """
    sents = [tuple(x) for x in mono]
    d1, d2 = (S2T, T2S) if side == "s" else (T2S, S2T)
    mid = translate_all(fwd, sents, d1, dc, workers, cache)
    back = translate_all(bwd, mid, d2, dc, workers, cache)
    return corpus_bleu(back, sents)


def duplicate_count(pairs, per_family: bool = False) -> int:
    """Pairs whose (direction, src, tgt) key already occurred earlier."""
    seen = set()
    dups = 0
    for p in pairs:
        key = (p.family(), p.key()) if per_family else p.key()
        if key in seen:
            dups += 1
        else:
            seen.add(key)
    return dups


def duplicate_fraction(n_dup: int, n_total: int) -> float:
    if n_total <= 0:
        raise EmptyCorpus("duplicate ratio needs at least one pair")
    return n_dup / n_total


def duplicate_ratio(pairs, per_family: bool = False) -> float:
    """Duplicates beyond first occurrence over total pairs.

    ``per_family`` only counts a repeat inside the same (origin side, level,
    direction) family; the default pools the whole corpus.
    """
    pairs = list(pairs)
    return duplicate_fraction(duplicate_count(pairs, per_family), len(pairs))


def pair_counts(pairs) -> dict:
    """Pair counts keyed by (level, direction)."""
    out = Counter((p.level, p.direction) for p in pairs)
    return dict(sorted(out.items()))


@dataclass(frozen=True)
class DiversityReport:
    # (side, fwd agent id, bwd agent id) -> BleuScore
    reconstruction_bleu: dict
    duplicate_ratio: float
    trigram_repetition_rate: float
    counts: dict
    total_pairs: int
    dropped: int = 0
    recipe: str = ""

    def rows(self) -> list:
        """(metric, column, value) rows, one metric per row group."""
        out = []
        for (side, a, b), s in self.reconstruction_bleu.items():
            kind = "same" if a == b else "cross"
            out.append((f"recon_bleu.{kind}.{a}>{b}", roundtrip_label(side), f"{s.score:.2f}"))
        for (level, d), n in self.counts.items():
            out.append((f"pairs.level{level}", d, str(n)))
        out.append(("pairs.total", "all", str(self.total_pairs)))
        out.append(("pairs.dropped", "all", str(self.dropped)))
        out.append(("duplicate_ratio", "all", f"{self.duplicate_ratio:.4f}"))
        out.append(("trigram_repetition_rate", "all", f"{self.trigram_repetition_rate:.4f}"))
        return out

    def to_tsv(self) -> str:
        return format_table(self.rows(), tsv=True)

    def to_text(self) -> str:
        return format_table(self.rows(), tsv=False)


def format_table(rows, tsv: bool = True) -> str:
    """Pivot (metric, column, value) rows: one line per metric, one column per direction."""
    cols: list = []
    metrics: list = []
    cell = {}
    for m, c, v in rows:
        if c not in cols:
            cols.append(c)
        if m not in metrics:
            metrics.append(m)
        cell[m, c] = v
    grid = [["metric"] + cols] + [[m] + [cell.get((m, c), "-") for c in cols] for m in metrics]
    if tsv:
        return "".join("\t".join(r) + "\n" for r in grid)
    widths = [max(len(r[i]) for r in grid) for i in range(len(cols) + 1)]
    return "".join("  ".join(x.ljust(w) if i == 0 else x.rjust(w) for i, (x, w) in enumerate(zip(r, widths))).rstrip()
                   + "\n" for r in grid)


def diversity_report(pairs, mono_s, mono_t, agents, dc: DecodeConfig = GREEDY, per_family: bool = False,
                     workers: int = 1, cache=None) -> DiversityReport:
    """Reconstruction BLEU for every ordered agent pair (same and cross) on both sides,
    plus the duplicate and repetition statistics of ``pairs``."""
    agents = list(agents)
    recon = {}
    for side, mono in (("s", mono_s), ("t", mono_t)):
        for a in agents:
            for b in agents:
                recon[side, a.agent_id, b.agent_id] = reconstruction_bleu(mono, a, b, dc, side, workers, cache)
    gen = pairs.generated_sentences()
    return DiversityReport(
        reconstruction_bleu=recon,
        duplicate_ratio=duplicate_ratio(pairs, per_family),
        trigram_repetition_rate=trigram_repetition_rate(gen) if gen else 0.0,
        counts=pair_counts(pairs),
        total_pairs=len(pairs),
        dropped=pairs.dropped,
        recipe=pairs.recipe,
    )


def mean_recon(report: DiversityReport, side: str, cross: bool) -> float:
    vals = [s.score for (sd, a, b), s in report.reconstruction_bleu.items() if sd == side and (a != b) == cross]
    if not vals:
        raise ValueError(f"no {'cross' if cross else 'same'}-model reconstructions on side {side}")
    return sum(vals) / len(vals)
