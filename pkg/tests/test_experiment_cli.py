import subprocess
import sys

import pytest

from cbdlab.cli import build_parser, config_from_args, main
from cbdlab.errors import ConfigError, IncomparableRuns
from cbdlab.experiment import (EXECUTION_KEYS, KEYS, ExperimentConfig, compare_tables, load_run_config,
                               parse_recipe, read_tsv, recipe_slug, summarize)

TINY = """# tiny end-to-end config
vocab_size = 30
sentences_per_side = 300
test_size = 40
ibt_rounds = 1
subsample = 100
decode = greedy
recipe = cbd,bd11,ens-distill
seeds = 1,2
"""


@pytest.fixture(scope="module")
def tiny_cfg(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "tiny.txt"
    p.write_text(TINY)
    return p


@pytest.fixture(scope="module")
def tiny_run(tiny_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "a"
    assert main(["run", "--config", str(tiny_cfg), "--out", str(out)]) == 0
    return out


# --- config ---

def test_defaults_cover_keys():
    cfg = ExperimentConfig()
    assert set(KEYS) == {f for f in cfg.__dataclass_fields__}
    assert cfg.vocab_size == 200 and cfg.sentences_per_side == 5000 and cfg.swap_prob == 0.2
    assert cfg.seeds == (1, 2, 3, 4, 5) and cfg.ibt_rounds == 4


def test_config_text_round_trip():
    cfg = ExperimentConfig().override({"beam": "7", "per_family": "true", "seeds": "3,4", "swap_prob": "0.1"})
    assert cfg.beam == 7 and cfg.per_family and cfg.seeds == (3, 4) and cfg.swap_prob == 0.1
    text = cfg.to_text()
    assert all(f"{k} =" not in text for k in EXECUTION_KEYS)
    assert ExperimentConfig.from_text(text) == cfg.override({"out": ExperimentConfig.out})


def test_config_comments_and_errors():
    cfg = ExperimentConfig.from_text("beam = 3  # wide\n\n# nothing\n")
    assert cfg.beam == 3
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("nonsense_key = 1")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("beam 3")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("beam = wide")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("recipe = bogus")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("seeds = 1,1")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("test_size = 6000")


def test_parse_recipe():
    assert parse_recipe("cbd") == ("cbd", 2)
    assert parse_recipe("gcbd:3") == ("gcbd", 3)
    assert parse_recipe("gcbd(4)") == ("gcbd", 4)
    assert parse_recipe("gcbd", 5) == ("gcbd", 5)
    assert parse_recipe("bd11") == ("bd11", 1)
    assert parse_recipe("ens-distill", 3) == ("ens-distill", 3)
    with pytest.raises(ConfigError):
        parse_recipe("gcbd:1")
    assert recipe_slug("gcbd:3") == "gcbd3" and recipe_slug("ens-distill") == "ensdistill"


def test_cli_flags_override(tiny_cfg):
    ap = build_parser()
    args = ap.parse_args(["run", "--config", str(tiny_cfg), "--seed", "9", "--decode", "beam:8", "--workers", "2"])
    cfg = config_from_args(args)
    assert cfg.seeds == (9,) and cfg.decode == "beam" and cfg.beam == 8 and cfg.workers == 2
    assert cfg.vocab_size == 30
    args = ap.parse_args(["run", "--decode", "greedy:3"])
    with pytest.raises(ConfigError):
        config_from_args(args)


# --- end to end ---

def test_run_writes_reports(tiny_run):
    names = {p.name for p in tiny_run.iterdir()}
    assert {"config.txt", "results.tsv", "ibt.tsv", "diversity.tsv", "summary.tsv", "summary.txt",
            "seed1", "seed2"} <= names
    res = read_tsv(tiny_run / "results.tsv")
    models = {r["model"] for r in res}
    assert {"theta1", "theta2", "theta1.round0", "student.cbd", "student.bd11", "student.ensdistill"} <= models
    assert all(r["status"] == "ok" for r in res)
    for r in res:
        assert (tiny_run / r["artifact"]).exists()
    assert (tiny_run / "seed1" / "pairs.cbd.tsv").exists()
    ibt = read_tsv(tiny_run / "ibt.tsv")
    assert sorted({(r["agent"], r["round"]) for r in ibt}) == [("theta1", "0"), ("theta1", "1"),
                                                              ("theta2", "0"), ("theta2", "1")]
    assert load_run_config(tiny_run).vocab_size == 30


def test_summary_consistent(tiny_run):
    res = [tuple(r.values()) for r in read_tsv(tiny_run / "results.tsv")]
    summ = read_tsv(tiny_run / "summary.tsv")
    assert [tuple(r.values()) for r in summ] == summarize(res)
    cbd = next(r for r in summ if r["model"] == "student.cbd")
    means = [float(r["mean"]) for r in read_tsv(tiny_run / "results.tsv") if r["model"] == "student.cbd"]
    assert float(cbd["mean"]) == pytest.approx(sum(means) / 2, abs=0.006)


def test_run_deterministic_across_workers(tiny_cfg, tiny_run, tmp_path):
    out = tmp_path / "b"
    assert main(["run", "--config", str(tiny_cfg), "--out", str(out), "--workers", "2"]) == 0
    a = sorted(p.relative_to(tiny_run) for p in tiny_run.rglob("*") if p.is_file())
    b = sorted(p.relative_to(out) for p in out.rglob("*") if p.is_file())
    assert a == b
    for rel in a:
        assert (tiny_run / rel).read_bytes() == (out / rel).read_bytes(), rel


def test_compare_reflexive(tiny_run, capsys):
    assert main(["compare", str(tiny_run), str(tiny_run)]) == 0
    out = capsys.readouterr().out
    blocks = out.split("\n\n")
    rows = [line.split("\t") for line in blocks[0].splitlines()[1:]]
    assert rows and all(r[6] in ("0.00", "-") for r in rows)
    assert all(r[8] == "0" for r in rows)
    assert "recon_cross.s-t-s" in blocks[1]
    md = compare_tables([tiny_run, tiny_run], markdown=True)
    assert md.startswith("| run | model |")


def test_compare_errors(tiny_run, tmp_path):
    with pytest.raises(IncomparableRuns):
        compare_tables([tiny_run])
    other = tmp_path / "other"
    other.mkdir()
    (other / "results.tsv").write_text("seed\tmodel\tkind\ts2t\tt2s\tmean\tstatus\tartifact\n"
                                       "7\ttheta1\tagent\t1\t1\t1\tok\t-\n")
    with pytest.raises(IncomparableRuns):
        compare_tables([tiny_run, other])


def test_eval_and_diversity_subcommands(tiny_run, capsys):
    bench = tiny_run / "seed1" / "bench"
    assert main(["eval", "--bench", str(bench), "--model", str(tiny_run / "seed1" / "student.cbd"),
                 "--decode", "greedy"]) == 0
    lines = capsys.readouterr().out.splitlines()
    res = next(r for r in read_tsv(tiny_run / "results.tsv") if r["seed"] == "1" and r["model"] == "student.cbd")
    assert lines[1].split("\t")[1:] == [res["s2t"], res["t2s"], res["mean"]]
    assert main(["diversity", "--bench", str(bench), "--pairs", str(tiny_run / "seed1" / "pairs.cbd.tsv"),
                 "--model", str(tiny_run / "seed1" / "agents" / "theta1"),
                 "--model", str(tiny_run / "seed1" / "agents" / "theta2"), "--decode", "greedy"]) == 0
    out = capsys.readouterr().out
    div = {(r["metric"], r["column"]): r["value"] for r in read_tsv(tiny_run / "diversity.tsv")
           if r["seed"] == "1" and r["recipe"] == "cbd"}
    got = {}
    for line in out.splitlines()[1:]:
        cells = line.split("\t")
        head = out.splitlines()[0].split("\t")
        for c, v in zip(head[1:], cells[1:]):
            if v != "-":
                got[cells[0], c] = v
    assert got == div


def test_gen_bench_and_train_agent(tmp_path, tiny_cfg, capsys):
    assert main(["gen-bench", "--config", str(tiny_cfg), "--seed", "4", "--out", str(tmp_path / "bench")]) == 0
    assert (tmp_path / "bench" / "mono.s.txt").exists()
    capsys.readouterr()
    assert main(["train-agent", "--config", str(tiny_cfg), "--bench", str(tmp_path / "bench"),
                 "--out", str(tmp_path / "agents"), "--agents", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "agent\tround\ts2t\tt2s" and len(out) == 3
    assert (tmp_path / "agents" / "theta1" / "meta.json").exists()


def test_error_line_and_exit_code(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path), "--decode", "bogus"]) == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("error\tcode=") and "\tmessage=" in err
    assert main(["eval", "--bench", str(tmp_path / "missing"), "--model", "x"]) == 1


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "cbdlab.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "gen-bench" in r.stdout and "vocab_size" in r.stdout
