import json

import pytest

from joinlab import cli, config, pipeline

L = "10"


def run(*args):
    return cli.main(list(args))


@pytest.fixture(scope="module")
def conj_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("conj")
    assert run("enumerate", "--config", "conjugate_pair", "--out", str(out),
               "--max-word-length", L, "--threads", "4") == 0
    return out


def test_missing_cache_names_the_stage(tmp_path, capsys):
    assert run("exponents", "--config", "bending_pair", "--out", str(tmp_path)) == 3
    assert "joinlab enumerate" in capsys.readouterr().err


def test_invalid_config_exit_status(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"factors": 3}')
    assert run("exponents", "--config", str(bad), "--out", str(tmp_path)) == 4
    assert "MalformedConfigError" in capsys.readouterr().err


def test_exponents_table(conj_out, capsys):
    assert run("exponents", "--config", "conjugate_pair", "--out", str(conj_out),
               "--max-word-length", L) == 0
    text = capsys.readouterr().out
    for key in ("delta ", "delta_rho1", "delta_rho2", "D_ones", "delta_min", "delta_max"):
        assert key in text
    doc = json.loads((conj_out / "exponents.json").read_text())
    assert doc["schema"] == 1 and doc["dataset_fingerprint"]


def test_cache_depends_on_budgets(conj_out):
    cfg = config.parse_config("conjugate_pair")
    a = pipeline.cache_path(cfg.with_overrides(max_word_length=10), conj_out)
    b = pipeline.cache_path(cfg.with_overrides(max_word_length=11), conj_out)
    assert a.exists() and a != b


def test_report_is_reproducible(conj_out):
    assert run("report", "--config", "conjugate_pair", "--out", str(conj_out),
               "--max-word-length", L) == 0
    first = (conj_out / "report.json").read_bytes()
    for name in ("tables.txt", "profile.csv", "samples.csv", "plots/limitset.svg",
                 "plots/profile.svg", "plots/cone.svg"):
        assert (conj_out / name).exists(), name
    assert run("report", "--config", "conjugate_pair", "--out", str(conj_out),
               "--max-word-length", L, "--threads", "1") == 0
    assert (conj_out / "report.json").read_bytes() == first
    doc = json.loads(first)
    assert doc["schema"] == 1
    assert doc["config"]["max_word_length"] == 10
    assert doc["summary"]["failed"] == 0
    assert "rigidity equality" in {c["name"] for c in doc["checks"]}


def test_report_from_fresh_enumeration_matches(conj_out, tmp_path):
    assert run("report", "--config", "conjugate_pair", "--out", str(tmp_path),
               "--max-word-length", L, "--threads", "2") == 0
    assert (tmp_path / "report.json").read_bytes() == (conj_out / "report.json").read_bytes()


def test_tent_stage_prints_margin_table(tmp_path, capsys):
    assert run("enumerate", "--config", "bending_pair", "--out", str(tmp_path),
               "--max-word-length", L) == 0
    status = run("tent", "--config", "bending_pair", "--out", str(tmp_path), "--max-word-length", L)
    text = capsys.readouterr().out
    assert "margin" in text and "tent property" in text
    assert status in (0, 2)


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        run("--help")
    text = capsys.readouterr().out
    for stage in pipeline.STAGES + ("report",):
        assert stage in text
