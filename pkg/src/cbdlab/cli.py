"""Command-line entry point: ``cbdlab <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .agent import Agent, ibt_train, init_agent
from .corpus import BenchmarkSet, generate_language_pair
from .errors import CBDError, ConfigError
from .experiment import KEYS, ExperimentConfig, compare_tables, evaluate, run_experiment
from .lm import train_lm
from .metrics import diversity_report
from .pipeline import SyntheticCorpus

EPILOG = "config keys (flat 'key = value' file, '#' starts a comment):\n" + "\n".join(
    f"  {k:<20} {v} (default {ExperimentConfig.__dataclass_fields__[k].default!r})" for k, v in KEYS.items())


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="single benchmark seed (replaces the seeds list)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--decode", help="greedy | beam | sample | top_k | top_p (optionally strategy:arg)")
    p.add_argument("--beam", type=int)
    p.add_argument("--temp", type=float, help="sampling temperature")
    p.add_argument("--top-k", type=int)
    p.add_argument("--top-p", type=float)
    p.add_argument("--workers", type=int, help="decoding processes")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cbdlab", description="Back-translation distillation experiments on a synthetic benchmark.",
                                 epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-bench", help="generate and save a synthetic benchmark")
    _common(p)

    p = sub.add_parser("train-agent", help="initialise and IBT-train agents on a benchmark")
    _common(p)
    p.add_argument("--bench", help="benchmark directory (generated from --seed when omitted)")
    p.add_argument("--agents", type=int, default=1, help="number of agents")

    p = sub.add_parser("run", help="run recipes end to end over the configured seeds",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)
    p.add_argument("--recipe", help="cbd | gcbd:n | bd11 | bd12 | bd22 | ens-distill | noised (comma list)")
    p.add_argument("--agents", type=int, help="ensemble size / default gcbd n")
    p.add_argument("--passes", type=int, help="pair-generation passes")
    p.add_argument("--per-family", action="store_true", default=None)

    p = sub.add_parser("eval", help="test BLEU of a saved agent or student")
    _common(p)
    p.add_argument("--bench", required=True)
    p.add_argument("--model", required=True, action="append", help="model directory (repeatable)")

    p = sub.add_parser("diversity", help="diversity report of a saved pair corpus")
    _common(p)
    p.add_argument("--bench", required=True)
    p.add_argument("--pairs", required=True, help="pairs TSV written by run")
    p.add_argument("--model", required=True, action="append", help="agent directory (repeatable)")
    p.add_argument("--per-family", action="store_true", default=None)
    p.add_argument("--text", action="store_true", help="aligned text instead of TSV")

    p = sub.add_parser("compare", help="compare completed run directories")
    p.add_argument("runs", nargs="+")
    p.add_argument("--markdown", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if getattr(args, "config", None) else ExperimentConfig()
    flags = {"out": "out", "decode": "decode", "beam": "beam", "temp": "temperature", "top_k": "top_k",
             "top_p": "top_p", "recipe": "recipe", "agents": "agents", "passes": "passes",
             "per_family": "per_family", "workers": "workers"}
    over = {}
    for a, k in flags.items():
        v = getattr(args, a, None)
        if v is not None:
            over[k] = v
    if getattr(args, "seed", None) is not None:
        over["seeds"] = (args.seed,)
    if over.get("decode") and ":" in over["decode"]:
        # "beam:8" style shorthand sets the strategy argument too
        name, arg = over["decode"].split(":", 1)
        field = {"beam": "beam", "sample": "temperature", "top_k": "top_k", "top_p": "top_p"}.get(name.replace("-", "_"))
        if field is None:
            raise ConfigError(f"strategy {name!r} takes no argument")
        over["decode"] = name
        over.setdefault(field, arg)
    return cfg.override(over)


def _bench(args, cfg: ExperimentConfig) -> BenchmarkSet:
    if getattr(args, "bench", None):
        return BenchmarkSet.load(args.bench)
    return generate_language_pair(cfg.generator(), cfg.seeds[0])


def cmd_gen_bench(args, cfg) -> None:
    out = Path(args.out or cfg.out)
    for seed in cfg.seeds:
        d = out if len(cfg.seeds) == 1 else out / f"seed{seed}"
        generate_language_pair(cfg.generator(), seed).save(d)
        print(f"wrote\t{d}")


def cmd_train_agent(args, cfg) -> None:
    bench = _bench(args, cfg)
    out = Path(args.out or cfg.out)
    ac = cfg.agent_config()
    dc = cfg.decode_config()
    lms = (train_lm(bench.mono_s, ac.lm_order), train_lm(bench.mono_t, ac.lm_order))
    print("agent\tround\ts2t\tt2s")
    for k in range(1, args.agents + 1):
        aid = f"theta{k}"
        a = init_agent(bench.mono_s, bench.mono_t, bench.seed * 1000 + k, ac, agent_id=aid, lms=lms)
        b = evaluate(a, bench, dc)
        print(f"{aid}\t0\t{b[0]:.2f}\t{b[1]:.2f}", flush=True)

        def on_round(r, agent, aid=aid):
            b = evaluate(agent, bench, dc)
            print(f"{aid}\t{r}\t{b[0]:.2f}\t{b[1]:.2f}", flush=True)

        a = ibt_train(a, bench.mono_s, bench.mono_t, cfg.ibt_rounds, cfg.subsample, cfg.ibt_decode_config(),
                      ac.em_iterations, cfg.workers, on_round)
        a.save(out / aid)


def cmd_run(args, cfg) -> None:
    root = run_experiment(cfg)
    sys.stdout.write((root / "summary.txt").read_text(encoding="utf-8"))


def cmd_eval(args, cfg) -> None:
    bench = BenchmarkSet.load(args.bench)
    dc = cfg.decode_config()
    print("model\ts2t\tt2s\tmean")
    for m in args.model:
        a = Agent.load(m)
        b = evaluate(a, bench, dc, cfg.workers)
        print(f"{a.agent_id}\t{b[0]:.2f}\t{b[1]:.2f}\t{(b[0] + b[1]) / 2:.2f}")


def cmd_diversity(args, cfg) -> None:
    bench = BenchmarkSet.load(args.bench)
    with open(args.pairs, encoding="utf-8") as fh:
        pairs = SyntheticCorpus.from_tsv(fh.read(), bench.vocab_s, bench.vocab_t)
    agents = [Agent.load(m) for m in args.model]
    rep = diversity_report(pairs, bench.mono_s, bench.mono_t, agents, cfg.decode_config(), cfg.per_family,
                           cfg.workers)
    sys.stdout.write(rep.to_text() if args.text else rep.to_tsv())


def cmd_compare(args) -> None:
    sys.stdout.write(compare_tables(args.runs, markdown=args.markdown))


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s",
                        stream=sys.stderr)
    try:
        if args.cmd == "compare":
            cmd_compare(args)
            return 0
        cfg = config_from_args(args)
        {"gen-bench": cmd_gen_bench, "train-agent": cmd_train_agent, "run": cmd_run, "eval": cmd_eval,
         "diversity": cmd_diversity}[args.cmd](args, cfg)
    except CBDError as e:
        print(f"error\tcode={e.code}\tmessage={e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"error\tcode={type(e).__name__}\tmessage={e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
