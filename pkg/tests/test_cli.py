import filecmp
import json
import shutil
from pathlib import Path

import pytest
import yaml

from honeytrial.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
RCT = str(CONFIGS / "rct-scripted.yaml")
AD = str(CONFIGS / "adaptive-hazard.yaml")


def write(tmp_path, mutate, base=RCT):
    d = yaml.safe_load(Path(base).read_text())
    mutate(d)
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(d))
    return str(p)


def test_validate_reference_config(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["validate", "--config", AD]) == 0
    out = capsys.readouterr().out
    assert "N_total=36" in out
    assert "control: east-1=5 east-2=5 west-1=4 west-2=4 (total 18)" in out
    assert list(tmp_path.iterdir()) == []  # validate writes nothing


def test_validate_equal_incidence(capsys, tmp_path):
    cfg = write(tmp_path, lambda d: d["study"].update(initial_incidence={"p1": 0.2, "p2": 0.2}))
    assert main(["validate", "--config", cfg]) == 4
    assert "initial_incidence" in capsys.readouterr().err


def test_validate_missing_regions(capsys, tmp_path):
    cfg = write(tmp_path, lambda d: d["study"].pop("regions"))
    assert main(["validate", "--config", cfg]) == 3
    assert "regions" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "nope.yaml")]) == 6


def test_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == 2


def test_run_writes_artifacts(capsys, tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--config", RCT, "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert sorted(p.name for p in out.iterdir()) == [
        "events.jsonl", "report.json", "stage_table.txt", "summary.txt", "survival_curves.csv"]
    report = json.loads((out / "report.json").read_text())
    assert report["totals"] == {"deployed": {"control": 72, "corrupted": 72}, "attacks": 7}
    assert len((out / "events.jsonl").read_text().splitlines()) == 144
    assert "RCT | 72 | 72 | 144 | 7" in printed
    assert "stop_reason=completed" in printed


def test_run_twice_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--config", AD, "--seed", "3", "--out", str(tmp_path / name)]) == 0
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert cmp.left_list == cmp.right_list
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", cmp.common_files,
                                           shallow=False)
    assert mismatch == [] and errors == []


def test_rerun_replaces_event_log(tmp_path):
    out = str(tmp_path / "run")
    main(["run", "--config", RCT, "--out", out])
    main(["run", "--config", RCT, "--out", out])
    assert len((tmp_path / "run" / "events.jsonl").read_text().splitlines()) == 144


def test_method_override_vanilla(capsys, tmp_path):
    cfg = write(tmp_path, lambda d: d["study"].update(budget_cap_participants=140))
    assert main(["run", "--config", cfg, "--method", "vanilla", "--out",
                 str(tmp_path / "v")]) == 0
    assert "Vanilla | 0 | 140 | 140 |" in capsys.readouterr().out


def test_report_rerenders_identically(capsys, tmp_path):
    out = str(tmp_path / "run")
    main(["run", "--config", RCT, "--out", out])
    at_run = capsys.readouterr().out
    assert main(["report", out]) == 0
    again = capsys.readouterr().out
    assert at_run.startswith(again)
    assert main(["report", "--out", out]) == 0
    assert capsys.readouterr().out == again


def test_report_empty_dir(tmp_path):
    assert main(["report", str(tmp_path)]) == 6


def test_report_tampered(tmp_path):
    out = tmp_path / "run"
    main(["run", "--config", RCT, "--out", str(out)])
    data = json.loads((out / "report.json").read_text())
    data["totals"]["deployed"]["control"] = 71
    (out / "report.json").write_text(json.dumps(data))
    assert main(["report", str(out)]) == 4


def test_run_only_writes_inside_out(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    shutil.copy(RCT, tmp_path / "c.yaml")
    main(["run", "--config", "c.yaml", "--out", "o"])
    assert sorted(p.name for p in tmp_path.iterdir()) == ["c.yaml", "o"]


def test_output_directory_from_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["run", "--config", RCT]) == 0
    assert (tmp_path / "runs" / "rct" / "report.json").exists()
