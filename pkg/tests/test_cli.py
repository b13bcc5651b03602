import json
import subprocess
import sys

import pytest

from repcap import cli
from repcap.dataset import Alphabet, save_dataset, synthesize_dataset

SMALL_INI = """\
[synth]
classes = 3
per_class = 12
length = 40

[tsne]
iterations = 120
momentum_switch = 30
exaggeration_iters = 30

[classify]
epochs = 100

[cluster]
restarts = 2

[autoencoder]
epochs = 5

[tpe]
n_trials = 80
"""


@pytest.fixture()
def small_ini(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL_INI)
    return str(path)


@pytest.fixture(scope="module")
def dna_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    ds = synthesize_dataset(3, 10, 40, Alphabet.dna(), 0.1, seed=0)
    save_dataset(ds, root / "s.fasta", root / "l.csv")
    return str(root / "s.fasta"), str(root / "l.csv")


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_embed_writes_matrix(tmp_path, dna_files, capsys):
    fasta, labels = dna_files
    code = run("embed", "--method", "spike2vec", "--k", 3, "--fasta", fasta, "--labels", labels,
               "--alphabet", "dna", "--out", tmp_path)
    assert code == 0
    lines = (tmp_path / "spike2vec.csv").read_text().splitlines()
    assert len([ln for ln in lines if ln.startswith("seq")]) == 30
    assert json.loads((tmp_path / "spike2vec.json").read_text())["k"] == 3


def test_embed_unknown_method(tmp_path, dna_files, capsys):
    fasta, labels = dna_files
    code = run("embed", "--method", "word2vec", "--fasta", fasta, "--labels", labels,
               "--alphabet", "dna", "--out", tmp_path)
    err = capsys.readouterr().err
    assert code == 1 and "spike2vec" in err and "pwm2vec" in err


def test_embed_missing_labels(tmp_path, dna_files, capsys):
    fasta, _ = dna_files
    missing = tmp_path / "nope.csv"
    code = run("embed", "--method", "spike2vec", "--fasta", fasta, "--labels", missing,
               "--alphabet", "dna", "--out", tmp_path)
    assert code == 1 and str(missing) in capsys.readouterr().err


def test_embed_stage_failure_exit_code(tmp_path, dna_files, capsys):
    fasta, labels = dna_files
    code = run("embed", "--method", "spaced_kmers", "--g", 80, "--fasta", fasta,
               "--labels", labels, "--alphabet", "dna", "--out", tmp_path)
    assert code == cli.STAGE_EXIT["embed"]
    assert "[spaced_kmers/embed]" in capsys.readouterr().err


def test_synth_validate_tsne_metrics(tmp_path, small_ini, capsys):
    assert run("synth", "--config", small_ini, "--out", tmp_path) == 0
    fasta, labels = tmp_path / "sequences.fasta", tmp_path / "labels.csv"
    assert run("validate", "--fasta", fasta, "--labels", labels, "--alphabet", "dna") == 0
    assert "records: 36" in capsys.readouterr().out
    assert run("embed", "--method", "pwm2vec", "--k", 5, "--fasta", fasta, "--labels", labels,
               "--alphabet", "dna", "--out", tmp_path) == 0
    emb = tmp_path / "pwm2vec.csv"
    assert run("tsne", "--config", small_ini, "--embedding", emb, "--out", tmp_path) == 0
    assert len((tmp_path / "pwm2vec_tsne.csv").read_text().splitlines()) == 37
    assert run("metrics", "--config", small_ini, "--embedding", emb, "--fasta", fasta,
               "--labels", labels, "--alphabet", "dna", "--out", tmp_path) == 0
    out = json.loads((tmp_path / "pwm2vec_metrics.json").read_text())
    assert set(out["metrics"]) == {"acc_class", "score_clust", "agree_neighbor", "trust_neighbor"}


def test_config_file_and_flag_precedence(tmp_path, small_ini):
    assert run("synth", "--config", small_ini, "--synth-per-class", 5, "--out", tmp_path) == 0
    text = (tmp_path / "labels.csv").read_text().splitlines()
    assert len(text) == 1 + 3 * 5


def test_config_unknown_key(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[tsne]\nperplexty = 5\n")
    assert run("synth", "--config", bad, "--out", tmp_path) == 1
    assert "perplexty" in capsys.readouterr().err


def test_help_lists_every_field():
    for command, sections in cli.COMMAND_SECTIONS.items():
        parser = cli.build_parser()
        sub = parser._subparsers._group_actions[0].choices[command]
        text = " ".join(sub.format_help().split())
        for f in cli.FIELDS:
            if f.section in sections:
                assert f.flag in text, (command, f.flag)
                assert f"(default: {f.show_default()})" in text, (command, f.flag)


def test_audit_tables_default(capsys):
    assert run("audit-tables") == 0
    out = capsys.readouterr().out
    line = next(ln for ln in out.splitlines() if ln.split()[:2] == ["T1", "Spike2Vec"])
    assert "0.7638" in line and "0.1539" in line and "0.7765" in line


def test_audit_tables_errors(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run("audit-tables", "--csv", empty) == 1
    assert run("audit-tables", "--csv", tmp_path / "missing.csv") == 1
    skew = tmp_path / "skew.csv"
    skew.write_text(
        "table,method,rc,w_class,v_class,w_clust,v_clust,w_neighb,v_neighb,w_trust,v_trust\n"
        "X,m,0.5,0.5,0.9,0.1,0.5,0.1,0.5,0.1,0.5\n"
    )
    assert run("audit-tables", "--csv", skew) == 0
    assert "warning" in capsys.readouterr().err


def test_capacity_needs_source(tmp_path, capsys):
    assert run("capacity", "--out", tmp_path) == 1


def strip_mode(report):
    report = json.loads(json.dumps(report))
    report.pop("aggregation")
    report["config"].pop("aggregation")
    for row in report["rows"]:
        for key in ("rc", "weights", "best_trial"):
            row.pop(key)
    return report


def test_capacity_modes_differ_only_in_rc_and_weights(tmp_path, small_ini, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    common = ("--config", small_ini, "--synthetic", "--methods", "spike2vec,pwm2vec")
    assert run("capacity", *common, "--out", a) == 0
    assert run("capacity", *common, "--aggregation", "additive", "--out", b) == 0
    ra = json.loads((a / "report.json").read_text())
    rb = json.loads((b / "report.json").read_text())
    assert strip_mode(ra) == strip_mode(rb)
    assert [r["rc"] for r in ra["rows"]] != [r["rc"] for r in rb["rows"]]
    for sub in ("embeddings", "tsne", "curves", "history"):
        assert sorted(p.name for p in (a / sub).iterdir())
    assert (a / "report.csv").read_text().startswith("method,rc,")


def test_console_script_version():
    out = subprocess.run(
        [sys.executable, "-m", "repcap.cli", "--version"], capture_output=True, text=True
    )
    assert out.returncode == 0 and "repcap" in out.stdout


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        run("capacity", "--aggregation", "mean")
    assert exc.value.code == 2
