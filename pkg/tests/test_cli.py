from __future__ import annotations

import json
import subprocess
import sys

import pytest

from tamc import __version__, corpus
from tamc.cli import run
from tamc.syntax import load_model

from conftest import SPEAKER


@pytest.fixture
def cdir():
    return corpus.corpus_dir()


def test_version(capsys):
    assert run(["--version"]) == 0
    assert f"tamc {__version__} (report schema 1)" in capsys.readouterr().out


def test_usage_error():
    assert run([]) == 2
    assert run(["check"]) == 2


def test_check_violated_and_satisfied(cdir, tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run(["check", str(cdir / "casestudy.ta"), str(cdir / "collision.prop"),
                "--report", str(out)]) == 1
    assert json.loads(out.read_text())["verdict"] == "violated"
    assert run(["check", str(cdir / "pedestrian0_2.ta"), str(cdir / "collision.prop"),
                "--compose", str(cdir / "car.ta")]) == 0
    assert "satisfied" in capsys.readouterr().out


def test_missing_file(cdir, capsys):
    assert run(["check", "missing.ta", str(cdir / "collision.prop")]) == 2
    assert "missing.ta" in capsys.readouterr().err


def test_parse_error_reports_location(tmp_path, cdir, capsys):
    bad = tmp_path / "bad.ta"
    bad.write_text("automaton A {\n  clock t;\n  init l0;\n  loc l0 { inv t<=-1; };\n}\n")
    assert run(["check", str(bad), str(cdir / "collision.prop")]) == 2
    assert "bad.ta:4:" in capsys.readouterr().err


def test_state_cap_exit_code(cdir):
    assert run(["check", str(cdir / "casestudy.ta"), str(cdir / "collision.prop"),
                "--max-states", "1"]) in (1, 3)
    assert run(["check", str(cdir / "pedestrian0_2.ta"), str(cdir / "collision.prop"),
                "--compose", str(cdir / "car.ta"), "--max-states", "3"]) == 3


def test_abstract_rules(tmp_path):
    src = tmp_path / "s.ta"
    src.write_text(SPEAKER)
    out = tmp_path / "w.ta"
    assert run(["abstract", str(src), "--rule", "r1", "--guard", "Speaker.L0->L0#0", "t", "2",
                "--inv", "Speaker.L0", "t", "3", "-o", str(out)]) == 0
    text = out.read_text()
    assert "t>=3" in text and "t<=13" in text
    merged = tmp_path / "m.ta"
    assert run(["abstract", str(src), "--rule", "r2", "--with", str(out), "-o", str(merged)]) == 0
    assert load_model(merged.read_text()) == load_model(text)
    assert run(["abstract", str(src), "--rule", "r3", "--channel", "a1", "-o", str(merged)]) == 2


def test_tree_build_traverse_refine(cdir, tmp_path, capsys):
    tree = tmp_path / "tree.json"
    assert run(["tree", "build", str(cdir / "crossing.plan"), "-o", str(tree)]) == 0
    rep = tmp_path / "rep.json"
    args = ["tree", "traverse", str(tree), str(cdir / "car.ta"), str(cdir / "collision.prop")]
    assert run(args + ["--report", str(rep)]) == 1
    data = json.loads(rep.read_text())
    assert [c["node"] for c in data["counterexamples"]] == ["Pedestrian0_1", "Pedestrian1_2"]
    rep2 = tmp_path / "rep2.json"
    assert run(args + ["--report", str(rep2), "--jobs", "2"]) == 1
    assert rep.read_bytes() == rep2.read_bytes()
    assert run(["tree", "traverse", str(tree), str(cdir / "safecar.ta"),
                str(cdir / "collision.prop")]) == 0
    props = tmp_path / "props"
    assert run(["refine", str(tree), "Pedestrian1_2", "--report", str(rep), "-o", str(props)]) == 0
    assert sorted(p.name for p in props.iterdir()) == ["Pedestrian1_2_sub1.ta", "Pedestrian1_2_sub2.ta"]
    assert "[5,10]" in (props / "Pedestrian1_2_sub2.ta").read_text()
    assert run(["refine", str(tree), "Pedestrian0_1", "-o", str(props)]) == 2
    capsys.readouterr()


def test_refine_with_system_and_property(cdir, tmp_path):
    tree = tmp_path / "tree.json"
    run(["tree", "build", str(cdir / "crossing.plan"), "-o", str(tree)])
    out = tmp_path / "p"
    assert run(["refine", str(tree), "Pedestrian1_2", "--system", str(cdir / "car.ta"),
                "--property", str(cdir / "collision.prop"), "-o", str(out)]) == 0
    assert len(list(out.iterdir())) == 2
    assert run(["refine", str(tree), "Pedestrian1_2", "--system", str(cdir / "car.ta"),
                "-o", str(out)]) == 2


def test_oracle_include(tmp_path, capsys):
    a, b = tmp_path / "a.ta", tmp_path / "b.ta"
    a.write_text(SPEAKER)
    b.write_text(SPEAKER.replace("t>=5", "t>=3").replace("t<=10", "t<=13"))
    assert run(["oracle", "include", str(a), str(b), "--horizon", "26", "--simulation"]) == 0
    assert run(["oracle", "include", str(b), str(a), "--horizon", "26", "--step", "1/2"]) == 1
    assert "a1@3" in capsys.readouterr().out
    assert run(["oracle", "include", str(a), str(b), "--horizon", "x"]) == 2


def _first_mutation_hit():
    from tamc.gen import mutation_fails, trial_seed
    return next(i for i in range(100) if mutation_fails(trial_seed(0, "mut", i)))


def test_selftest_small(capsys):
    k = _first_mutation_hit() + 1
    assert run(["selftest", "--trials", str(k)]) == 0
    out = capsys.readouterr().out
    assert f"r1: {k} trials, 0 failures" in out


def test_module_entry_point(cdir):
    proc = subprocess.run([sys.executable, "-m", "tamc", "check", str(cdir / "casestudy.ta"),
                           str(cdir / "collision.prop")], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "violated" in proc.stdout


def test_selftest_fails_without_a_mutation_hit(capsys):
    # the sign-mutation control has to catch something for the suite to pass
    k = _first_mutation_hit()
    assert k > 0
    assert run(["selftest", "--trials", str(k)]) == 1
    assert f"0 inclusion failures in {k} trials" in capsys.readouterr().out
