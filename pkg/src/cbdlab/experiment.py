"""Seeded end-to-end runs: benchmark, agents, recipes, students, reports.

A run directory looks like::

    config.txt              the effective configuration (execution-only keys omitted)
    results.tsv             one row per (seed, model) with test BLEU per direction
    ibt.tsv                 per-round IBT test BLEU of every agent
    diversity.tsv           diversity metrics per (seed, recipe)
    summary.tsv / .txt      means over seeds plus per-seed win counts
    seed<N>/...             every artifact the numbers above were computed from

All paths written into reports are relative to the run directory.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import re
import traceback
from dataclasses import dataclass, fields
from pathlib import Path

from .agent import S2T, T2S, Agent, AgentConfig, TranslationCache, ibt_train, init_agent, supervised_fit, translate_all
from .corpus import BenchmarkSet, GeneratorConfig, generate_language_pair
from .decoding import DecodeConfig, default_workers
from .errors import CBDError, ConfigError, IncomparableRuns
from .lm import train_lm
from .metrics import (corpus_bleu, diversity_report, format_table, mean_recon, roundtrip_label)
from .pipeline import (NoiseConfig, SyntheticCorpus, apply_target_noise, bd_generate, cbd_pairs, ensemble_distill,
                       gcbd_pairs)

log = logging.getLogger("cbdlab")

# key -> help text; the order is the order of config.txt
KEYS = {
    "vocab_size": "words per language (benchmark generator)",
    "sentences_per_side": "monolingual sentences per language",
    "swap_prob": "probability of an adjacent word swap per position",
    "zipf_exponent": "Zipf exponent of the unigram distribution",
    "test_size": "held-out parallel test pairs",
    "min_len": "shortest generated sentence",
    "max_len": "longest generated sentence",
    "successors": "successor words per word in the bigram grammar",
    "background": "unigram mass mixed into every grammar row",
    "successor_skew": "Zipf power used to pick successor sets",
    "lm_order": "n-gram order of every language model",
    "lm_weight": "LM interpolation weight lambda in the decoder",
    "reorder_window": "decoder reordering window",
    "em_iterations": "IBM-1 EM iterations per fit",
    "rank_mass": "same-rank mass of the frequency-rank initial table",
    "jitter_prob": "probability of a +-1 rank jitter at initialisation",
    "ibt_rounds": "iterative back-translation rounds per agent",
    "subsample": "sentences re-translated per IBT round and direction",
    "ibt_decode": "decoder used inside IBT (strategy[:arg])",
    "decode": "decoder strategy for pair generation and evaluation",
    "beam": "beam size",
    "temperature": "sampling temperature",
    "top_k": "top-k cutoff",
    "top_p": "nucleus mass",
    "decode_seed": "base seed of stochastic decoders",
    "recipe": "comma-separated recipes: cbd, gcbd:n, bd11, bd12, bd22, ens-distill, noised",
    "agents": "ensemble size for ens-distill and default n for gcbd",
    "passes": "pair-generation passes (each with its own decode seed)",
    "student_lm": "student LMs: mono (real monolingual text) or pairs (synthetic target sides)",
    "p_drop": "noised recipe: word drop probability",
    "p_swap": "noised recipe: adjacent swap probability",
    "p_blank": "noised recipe: random replacement probability",
    "per_family": "count duplicates within each pair family only",
    "seeds": "comma-separated benchmark seeds",
    "out": "output directory",
    "workers": "decoding processes (does not change any result)",
}
EXECUTION_KEYS = ("out", "workers")


@dataclass(frozen=True)
class ExperimentConfig:
    vocab_size: int = 200
    sentences_per_side: int = 5000
    swap_prob: float = 0.2
    zipf_exponent: float = 1.1
    test_size: int = 500
    min_len: int = 4
    max_len: int = 12
    successors: int = GeneratorConfig.successors
    background: float = GeneratorConfig.background
    successor_skew: float = GeneratorConfig.successor_skew
    lm_order: int = 3
    lm_weight: float = 0.4
    reorder_window: int = 2
    em_iterations: int = 5
    rank_mass: float = 0.7
    jitter_prob: float = 0.1
    ibt_rounds: int = 4
    subsample: int = 2500
    ibt_decode: str = "beam"
    decode: str = "beam"
    beam: int = 5
    temperature: float = 0.3
    top_k: int = 10
    top_p: float = 0.9
    decode_seed: int = 0
    recipe: str = "cbd"
    agents: int = 2
    passes: int = 1
    student_lm: str = "mono"
    p_drop: float = 0.1
    p_swap: float = 0.1
    p_blank: float = 0.1
    per_family: bool = False
    seeds: tuple = (1, 2, 3, 4, 5)
    out: str = "runs/default"
    workers: int = 1

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds list must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.ibt_rounds < 0:
            raise ConfigError("ibt_rounds must be >= 0")
        if self.agents < 1:
            raise ConfigError("agents must be >= 1")
        if self.passes < 1:
            raise ConfigError("passes must be >= 1")
        if self.student_lm not in ("mono", "pairs"):
            raise ConfigError("student_lm must be 'mono' or 'pairs'")
        self.generator().validate()
        self.agent_config()
        self.decode_config()
        self.ibt_decode_config()
        self.noise_config()
        for r in self.recipes():
            parse_recipe(r)

    # --- views onto component configs ---

    def generator(self) -> GeneratorConfig:
        return GeneratorConfig(self.vocab_size, self.sentences_per_side, self.swap_prob, self.zipf_exponent,
                               self.test_size, self.min_len, self.max_len, self.successors, self.background,
                               self.successor_skew)

    def agent_config(self) -> AgentConfig:
        return AgentConfig(self.lm_order, self.lm_weight, self.reorder_window, self.em_iterations, self.rank_mass,
                           self.jitter_prob)

    def _decoder(self, text: str) -> DecodeConfig:
        base = dict(beam=self.beam, temperature=self.temperature, top_k=self.top_k, top_p=self.top_p,
                    seed=self.decode_seed)
        return DecodeConfig.parse(text, **base)

    def decode_config(self) -> DecodeConfig:
        return self._decoder(self.decode)

    def ibt_decode_config(self) -> DecodeConfig:
        return self._decoder(self.ibt_decode)

    def noise_config(self) -> NoiseConfig:
        return NoiseConfig(self.p_drop, self.p_swap, self.p_blank)

    def recipes(self) -> list:
        return [r.strip() for r in self.recipe.split(",") if r.strip()]

    # --- text form ---

    def to_text(self, execution: bool = False) -> str:
        lines = []
        for f in fields(self):
            if f.name in EXECUTION_KEYS and not execution:
                continue
            lines.append(f"{f.name} = {_fmt(getattr(self, f.name))}\n")
        return "".join(lines)

    @classmethod
    def from_text(cls, text: str, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        values = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {n}: expected 'key = value'")
            k, v = (x.strip() for x in line.split("=", 1))
            values[k] = v
        return (base or cls()).override(values)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def override(self, values: dict) -> "ExperimentConfig":
        """Return a copy with string (or typed) values replacing fields."""
        types = {f.name: f.type for f in fields(self)}
        typed = {}
        for k, v in values.items():
            if k not in types:
                raise ConfigError(f"unknown config key {k!r}")
            typed[k] = _coerce(k, types[k], v)
        return dataclasses.replace(self, **typed)


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key: str, typ: str, v):
    if not isinstance(v, str):
        return tuple(v) if typ == "tuple" else v
    try:
        if typ == "int":
            return int(v)
        if typ == "float":
            return float(v)
        if typ == "bool":
            if v.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(v)
            return v.lower() in ("true", "1", "yes")
        if typ == "tuple":
            return tuple(int(x) for x in v.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad value {v!r} for {key}") from None
    return v


# --- recipes -----------------------------------------------------------------


def parse_recipe(tag: str, default_agents: int = 2) -> tuple:
    """``(name, n_agents)`` for a recipe tag such as ``cbd`` or ``gcbd:3``."""
    m = re.fullmatch(r"gcbd(?:[:(](\d+)\)?)?", tag)
    if m:
        n = int(m.group(1)) if m.group(1) else default_agents
        if n < 2:
            raise ConfigError("gcbd needs n >= 2")
        return "gcbd", n
    fixed = {"cbd": 2, "bd11": 1, "bd12": 2, "bd22": 2, "noised": 2}
    if tag in fixed:
        return tag, fixed[tag]
    if tag == "ens-distill":
        return tag, default_agents
    raise ConfigError(f"unknown recipe {tag!r}")


def recipe_slug(tag: str) -> str:
    return re.sub(r"[^a-z0-9]+", "", tag.replace(":", ""))


def build_pairs(tag: str, agents: list, bench: BenchmarkSet, cfg: ExperimentConfig, seed: int,
                cache: TranslationCache, workers: int) -> SyntheticCorpus:
    name, n = parse_recipe(tag, cfg.agents)
    dc = cfg.decode_config()
    ms, mt = bench.mono_s, bench.mono_t
    use = agents[:n]

    def once(d):
        if name == "cbd":
            return cbd_pairs(use[0], use[1], ms, mt, d, cache, workers)
        if name == "gcbd":
            return gcbd_pairs(use, ms, mt, d, cache, workers)
        if name in ("bd11", "bd12", "bd22"):
            return bd_generate(name, use, ms, mt, d, cache, workers)
        if name == "ens-distill":
            return ensemble_distill(use, ms, mt, d, cache, workers)
        base = bd_generate("bd12", use, ms, mt, d, cache, workers)
        return apply_target_noise(base, cfg.noise_config(), seed * 1000 + d.seed, bench.vocab_s, bench.vocab_t)

    out = once(dc)
    for k in range(1, cfg.passes):
        out = out + once(dc.with_seed(dc.seed + k))
    return out


# --- evaluation --------------------------------------------------------------


def evaluate(agent: Agent, bench: BenchmarkSet, dc: DecodeConfig, workers: int = 1, cache=None) -> tuple:
    """Test BLEU (s2t, t2s) against the gold references."""
    ts, tt = bench.test_corpus("s"), bench.test_corpus("t")
    h_st = translate_all(agent, ts, S2T, dc, workers, cache)
    h_ts = translate_all(agent, tt, T2S, dc, workers, cache)
    return corpus_bleu(h_st, tt).score, corpus_bleu(h_ts, ts).score


def _f(x: float) -> str:
    return f"{x:.2f}"


RESULT_HEADER = ("seed", "model", "kind", "s2t", "t2s", "mean", "status", "artifact")


def run_seed(cfg: ExperimentConfig, seed: int, root: Path, workers: int = 1) -> dict:
    """Everything for one benchmark seed; returns report rows."""
    sdir = root / f"seed{seed}"
    rel = lambda p: os.path.relpath(p, root).replace(os.sep, "/")  # noqa: E731
    gen = cfg.generator()
    bench = generate_language_pair(gen, seed)
    bench.save(sdir / "bench")
    ac = cfg.agent_config()
    dc = cfg.decode_config()
    lms = (train_lm(bench.mono_s, ac.lm_order), train_lm(bench.mono_t, ac.lm_order))
    cache = TranslationCache()
    n_agents = max(parse_recipe(r, cfg.agents)[1] for r in cfg.recipes())

    results, ibt_rows, div_rows = [], [], []
    agents = []
    for k in range(1, n_agents + 1):
        aid = f"theta{k}"
        a = init_agent(bench.mono_s, bench.mono_t, seed * 1000 + k, ac, agent_id=aid, lms=lms)
        path = sdir / "agents" / f"{aid}.round0"
        a.save(path)
        b0 = evaluate(a, bench, dc, workers, cache)
        ibt_rows.append((str(seed), aid, "0", _f(b0[0]), _f(b0[1]), _f(sum(b0) / 2), rel(path)))
        results.append((str(seed), f"{aid}.round0", "init", _f(b0[0]), _f(b0[1]), _f(sum(b0) / 2), "ok", rel(path)))

        def on_round(r, agent, aid=aid):
            b = evaluate(agent, bench, dc, workers, cache)
            p = sdir / "agents" / f"{aid}.round{r}"
            agent.save(p)
            ibt_rows.append((str(seed), aid, str(r), _f(b[0]), _f(b[1]), _f(sum(b) / 2), rel(p)))
            log.info("seed %d %s round %d: BLEU s2t %.2f t2s %.2f", seed, aid, r, *b)

        a = ibt_train(a, bench.mono_s, bench.mono_t, cfg.ibt_rounds, cfg.subsample, cfg.ibt_decode_config(),
                      ac.em_iterations, workers, on_round)
        path = sdir / "agents" / aid
        a.save(path)
        b = evaluate(a, bench, dc, workers, cache)
        results.append((str(seed), aid, "agent", _f(b[0]), _f(b[1]), _f(sum(b) / 2), "ok", rel(path)))
        agents.append(a)

    for tag in cfg.recipes():
        slug = recipe_slug(tag)
        try:
            pairs = build_pairs(tag, agents, bench, cfg, seed, cache, workers)
            ppath = sdir / f"pairs.{slug}.tsv"
            with open(ppath, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(pairs.to_tsv(bench.vocab_s, bench.vocab_t))
            student = supervised_fit(pairs, bench.vocab_s, bench.vocab_t, ac, tag, f"student.{slug}",
                                     lms=lms if cfg.student_lm == "mono" else None)
            spath = sdir / f"student.{slug}"
            student.agent.save(spath)
            b = evaluate(student.agent, bench, dc, workers, cache)
            results.append((str(seed), f"student.{slug}", tag, _f(b[0]), _f(b[1]), _f(sum(b) / 2), "ok", rel(spath)))
            n_use = parse_recipe(tag, cfg.agents)[1]
            rep = diversity_report(pairs, bench.mono_s, bench.mono_t, agents[:max(n_use, 2)], dc, cfg.per_family,
                                   workers, cache)
            for metric, col, val in rep.rows():
                div_rows.append((str(seed), tag, metric, col, val, rel(ppath)))
        except CBDError as e:
            log.warning("seed %d recipe %s failed: %s", seed, tag, e)
            results.append((str(seed), f"student.{slug}", tag, "-", "-", "-", f"failed:{e.code}:{e}", "-"))
    return {"results": results, "ibt": ibt_rows, "diversity": div_rows}


def _tsv(header, rows) -> str:
    return "".join("\t".join(r) + "\n" for r in [tuple(header)] + [tuple(r) for r in rows])


def summarize(results: list) -> list:
    """Per model: mean BLEU over seeds and per-seed wins against the best agent and other students."""
    ok = [r for r in results if r[6] == "ok"]
    models = []
    for r in ok:
        if r[1] not in models:
            models.append(r[1])
    by = {(r[0], r[1]): r for r in ok}
    seeds = sorted({r[0] for r in results}, key=int)
    students = [m for m in models if m.startswith("student.")]
    agent_names = [m for m in models if m.startswith("theta") and "." not in m]
    rows = []
    for m in models:
        cells = [by[s, m] for s in seeds if (s, m) in by]
        mean = lambda i: _f(sum(float(c[i]) for c in cells) / len(cells))  # noqa: E731
        wins_agents = 0
        for s in seeds:
            mine = by.get((s, m))
            ags = [float(by[s, a][5]) for a in agent_names if (s, a) in by]
            if mine is not None and ags and float(mine[5]) >= max(ags):
                wins_agents += 1
        vs = []
        for o in students:
            if o == m:
                continue
            w = sum(1 for s in seeds if (s, m) in by and (s, o) in by and float(by[s, m][5]) >= float(by[s, o][5]))
            vs.append(f"{o}:{w}")
        rows.append((m, str(len(cells)), mean(3), mean(4), mean(5), f"{wins_agents}/{len(seeds)}", " ".join(vs) or "-"))
    return rows


SUMMARY_HEADER = ("model", "seeds", "s2t", "t2s", "mean", "ge_best_agent", "ge_other_students")


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> Path:
    """Run every seed and write the reports; returns the run directory."""
    workers = workers if workers is not None else (cfg.workers or default_workers())
    root = Path(cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    results, ibt, div = [], [], []
    for seed in cfg.seeds:
        log.info("seed %d", seed)
        try:
            rows = run_seed(cfg, seed, root, workers)
        except CBDError as e:
            log.warning("seed %d failed: %s", seed, e)
            log.debug(traceback.format_exc())
            results.append((str(seed), "-", "-", "-", "-", "-", f"failed:{e.code}:{e}", "-"))
            continue
        results += rows["results"]
        ibt += rows["ibt"]
        div += rows["diversity"]
    summary = summarize(results)
    files = {
        "results.tsv": _tsv(RESULT_HEADER, results),
        "ibt.tsv": _tsv(("seed", "agent", "round", "s2t", "t2s", "mean", "artifact"), ibt),
        "diversity.tsv": _tsv(("seed", "recipe", "metric", "column", "value", "artifact"), div),
        "summary.tsv": _tsv(SUMMARY_HEADER, summary),
        "summary.txt": _aligned([SUMMARY_HEADER] + summary),
    }
    for name, text in files.items():
        with open(root / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return root


def _aligned(rows) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in rows)


# --- reading runs back --------------------------------------------------------


def read_tsv(path) -> list:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    head = lines[0].split("\t")
    return [dict(zip(head, line.split("\t"))) for line in lines[1:] if line]


def compare_tables(run_dirs, markdown: bool = False) -> str:
    """BLEU and diversity side by side across runs.

    Each model is compared with the same-named model of the first run; a
    student without a namesake there is compared with the first run's first
    student. Sign counts are per seed.
    """
    runs = [Path(d) for d in run_dirs]
    if len(runs) < 2:
        raise IncomparableRuns("need at least two runs to compare")
    res = [[r for r in read_tsv(d / "results.tsv") if r["status"] == "ok"] for d in runs]
    seeds = [sorted({r["seed"] for r in read_tsv(d / "results.tsv")}, key=int) for d in runs]
    for d, s in zip(runs[1:], seeds[1:]):
        if s != seeds[0]:
            raise IncomparableRuns(f"{d} has seeds {s}, {runs[0]} has {seeds[0]}")
    base = {(r["seed"], r["model"]): float(r["mean"]) for r in res[0]}
    base_models = list(dict.fromkeys(r["model"] for r in res[0]))
    first_student = next((m for m in base_models if m.startswith("student.")), None)

    rows = [("run", "model", "s2t", "t2s", "mean", "vs", "delta", "wins", "losses", "ties")]
    for d, rr in zip(runs, res):
        models = list(dict.fromkeys(r["model"] for r in rr))
        for m in models:
            cells = [r for r in rr if r["model"] == m]
            ref = m if any(k[1] == m for k in base) else (first_student if m.startswith("student.") else None)
            mean = lambda k: sum(float(c[k]) for c in cells) / len(cells)  # noqa: E731
            w = l_ = t = 0
            deltas = []
            for c in cells:
                if ref is None or (c["seed"], ref) not in base:
                    continue
                dlt = round(float(c["mean"]) - base[c["seed"], ref], 2)
                deltas.append(dlt)
                w += dlt > 0
                l_ += dlt < 0
                t += dlt == 0
            delta = _f(sum(deltas) / len(deltas)) if deltas else "-"
            rows.append((d.name, m, _f(mean("s2t")), _f(mean("t2s")), _f(mean("mean")), ref or "-", delta,
                         str(w), str(l_), str(t)))

    div_cols = [f"recon_{kind}.{roundtrip_label(s)}" for kind in ("cross", "same") for s in ("s", "t")]
    drows = [("run", "recipe") + tuple(div_cols) + ("duplicate_ratio", "trigram_repetition_rate")]
    for d in runs:
        p = d / "diversity.tsv"
        if not p.exists():
            continue
        div = read_tsv(p)
        for recipe in dict.fromkeys(r["recipe"] for r in div):
            sel = [r for r in div if r["recipe"] == recipe]
            cell = []
            for kind in ("cross", "same"):
                for s in ("s", "t"):
                    v = [float(r["value"]) for r in sel if r["metric"].startswith(f"recon_bleu.{kind}.")
                         and r["column"] == roundtrip_label(s)]
                    cell.append(_f(sum(v) / len(v)) if v else "-")
            for metric in ("duplicate_ratio", "trigram_repetition_rate"):
                v = [float(r["value"]) for r in sel if r["metric"] == metric]
                cell.append(f"{sum(v) / len(v):.4f}" if v else "-")
            drows.append((d.name, recipe) + tuple(cell))
    if markdown:
        return _markdown(rows) + "\n" + _markdown(drows)
    return _tsv(rows[0], rows[1:]) + "\n" + _tsv(drows[0], drows[1:])


def _markdown(rows) -> str:
    out = ["| " + " | ".join(rows[0]) + " |", "|" + "|".join("---" for _ in rows[0]) + "|"]
    out += ["| " + " | ".join(r) + " |" for r in rows[1:]]
    return "\n".join(out) + "\n"


def load_run_config(run_dir) -> ExperimentConfig:
    return ExperimentConfig.from_file(Path(run_dir) / "config.txt")


__all__ = ["ExperimentConfig", "KEYS", "run_experiment", "compare_tables", "parse_recipe", "evaluate", "summarize",
           "format_table"]
