import json
import shutil
import subprocess
import sys

import pytest

from bustree.cli import main

SYNTH_CONFIG = {
    "seed": 3, "n_users": 400, "n_items": 300,
    "attributes": [
        {"name": "geo", "cardinality": 3},
        {"name": "tier", "cardinality": 2},
        {"name": "dev", "cardinality": 4, "null_rate": 0.1},
    ],
    "governing": ["geo", "tier"],
    "items_per_segment": 20,
    "n_edges": 150,
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliws")
    config = root / "synth.json"
    config.write_text(json.dumps(SYNTH_CONFIG))
    data = root / "data"
    rc = main(["--quiet", "synth", "--config", str(config),
               "--out-dir", str(data)])
    assert rc == 0
    for name in ("users.csv", "engagements.csv", "edges.csv", "schema.json"):
        assert (data / name).exists()
    tree = root / "tree.json"
    rc = main(["--quiet", "build",
               "--users", str(data / "users.csv"),
               "--engagements", str(data / "engagements.csv"),
               "--schema", str(data / "schema.json"),
               "--out", str(tree), "--k", "10", "--mu", "10",
               "--catalog", str(root / "catalog.json")])
    assert rc == 0
    return root, data, config


def test_build_artifacts_are_deterministic(workspace):
    root, data, config = workspace
    again = root / "tree_again.json"
    rc = main(["--quiet", "build",
               "--users", str(data / "users.csv"),
               "--engagements", str(data / "engagements.csv"),
               "--schema", str(data / "schema.json"),
               "--out", str(again), "--k", "10", "--mu", "10"])
    assert rc == 0
    assert again.read_bytes() == (root / "tree.json").read_bytes()
    log1 = (root / "tree.json.buildlog.jsonl").read_bytes()
    log2 = (root / "tree_again.json.buildlog.jsonl").read_bytes()
    assert log1 == log2  # no timestamps in the build log


def test_synth_output_is_deterministic(workspace, tmp_path):
    root, data, config = workspace
    rerun = tmp_path / "data2"
    assert main(["--quiet", "synth", "--config", str(config),
                 "--out-dir", str(rerun)]) == 0
    for name in ("users.csv", "engagements.csv", "edges.csv", "schema.json"):
        assert (rerun / name).read_bytes() == (data / name).read_bytes()


def test_assign_command(workspace, tmp_path):
    root, data, _ = workspace
    out = tmp_path / "assignments.csv"
    rc = main(["--quiet", "assign", "--tree", str(root / "tree.json"),
               "--schema", str(data / "schema.json"),
               "--users", str(data / "users.csv"), "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "user_id,segment_id,path,partial"
    assert len(lines) == 401
    assert all(line.endswith(",0") for line in lines[1:])  # no partial walks
    # every full walk records one branch value per level
    assert all(line.split(",")[2].count("/") == 2 for line in lines[1:])


def test_read_only_assign_leaves_tree_file_untouched(workspace, tmp_path):
    root, data, _ = workspace
    before = (root / "tree.json").read_bytes()
    users = tmp_path / "novel.csv"
    header = (data / "users.csv").read_text().splitlines()[0]
    users.write_text(f"{header}\nu_new,never_seen,v0,v1\n")
    out = tmp_path / "assignments.csv"
    rc = main(["--quiet", "assign", "--tree", str(root / "tree.json"),
               "--schema", str(data / "schema.json"),
               "--users", str(users), "--out", str(out), "--read-only"])
    assert rc == 0
    assert (root / "tree.json").read_bytes() == before
    row = out.read_text().splitlines()[1].split(",")
    # the novel value either fell back to a catch-all branch or stopped short
    assert "__regress__" in row[2] or row[3] == "1"


def _rows(output: str) -> list:
    lines = output.splitlines()
    assert lines[0] == "user_id,rank,item_id,score"
    return [line.split(",") for line in lines[1:]]


def test_recommend_by_attrs(workspace, capsys):
    root, data, _ = workspace
    rc = main(["--quiet", "recommend", "--tree", str(root / "tree.json"),
               "--catalog", str(root / "catalog.json"),
               "--attrs", '{"geo": "v0", "tier": "v1", "dev": "v2"}',
               "--k", "5"])
    assert rc == 0
    rows = _rows(capsys.readouterr().out)
    assert len(rows) == 5
    assert [r[1] for r in rows] == ["1", "2", "3", "4", "5"]
    scores = [float(r[3]) for r in rows]
    assert scores == sorted(scores, reverse=True)


def test_recommend_rejects_unknown_attribute_names(workspace, capsys):
    root, data, _ = workspace
    rc = main(["--quiet", "recommend", "--tree", str(root / "tree.json"),
               "--catalog", str(root / "catalog.json"),
               "--attrs", '{"geoo": "v0"}'])
    assert rc == 1
    event = json.loads(capsys.readouterr().err.splitlines()[-1])
    assert "geoo" in event["message"]


def test_recommend_connection_aware(workspace, tmp_path, capsys):
    root, data, _ = workspace
    assignments = tmp_path / "assignments.csv"
    assert main(["--quiet", "assign", "--tree", str(root / "tree.json"),
                 "--schema", str(data / "schema.json"),
                 "--users", str(data / "users.csv"),
                 "--out", str(assignments)]) == 0
    rc = main(["recommend", "--tree", str(root / "tree.json"),
               "--catalog", str(root / "catalog.json"),
               "--schema", str(data / "schema.json"),
               "--user", "u000", "--users", str(data / "users.csv"),
               "--connections", str(data / "edges.csv"),
               "--assignments", str(assignments), "--k", "5"])
    assert rc == 0
    captured = capsys.readouterr()
    rows = _rows(captured.out)
    assert rows and all(r[0] == "u000" for r in rows)
    events = [json.loads(line) for line in captured.err.splitlines()]
    profile = next(e for e in events if e["event"] == "connection_profile")
    assert profile["profile"].startswith("own:")


def test_run_config_seeds_options_and_flags_override(workspace, tmp_path, capsys):
    root, data, _ = workspace
    run_config = tmp_path / "run.json"
    run_config.write_text(json.dumps({
        "schema": str(data / "schema.json"),
        "users": str(data / "users.csv"),
        "engagements": str(data / "engagements.csv"),
        "build": {"k": 10, "mu": 10, "out": str(tmp_path / "config_tree.json")},
    }))
    rc = main(["--quiet", "--config", str(run_config), "build"])
    assert rc == 0
    assert (tmp_path / "config_tree.json").read_bytes() == \
        (root / "tree.json").read_bytes()
    # an explicit flag wins over the config value
    rc = main(["--quiet", "--config", str(run_config), "build",
               "--out", str(tmp_path / "flag_tree.json")])
    assert rc == 0
    assert (tmp_path / "flag_tree.json").read_bytes() == \
        (root / "tree.json").read_bytes()


def test_run_config_rejects_unknown_keys(tmp_path, capsys):
    run_config = tmp_path / "run.json"
    run_config.write_text(json.dumps({"bogus": 1}))
    rc = main(["--quiet", "--config", str(run_config), "build"])
    assert rc == 1
    event = json.loads(capsys.readouterr().err.splitlines()[-1])
    assert "bogus" in event["message"]


def test_missing_required_option_names_it(tmp_path, capsys):
    rc = main(["--quiet", "build", "--users", str(tmp_path / "u.csv")])
    assert rc == 1
    event = json.loads(capsys.readouterr().err.splitlines()[-1])
    assert "--engagements" in event["message"]


def test_eval_command(workspace, capsys):
    root, data, _ = workspace
    rc = main(["--quiet", "eval", "--tree", str(root / "tree.json"),
               "--users", str(data / "users.csv"),
               "--engagements", str(data / "engagements.csv"),
               "--schema", str(data / "schema.json"),
               "--k", "10", "--baseline"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["serve_total"] > 0
    assert payload["one_hot_cells"] > payload["n_segments"]


def test_sweep_command(workspace, tmp_path):
    root, data, config = workspace
    out = tmp_path / "sweep.csv"
    timings = tmp_path / "timings.csv"
    rc = main(["--quiet", "sweep", "--config", str(config),
               "--mus", "5,50", "--omegas", "1.0", "--k", "10",
               "--out", str(out), "--timings", str(timings)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("mu,omega,k,n_segments")
    assert timings.exists()


def test_missing_inputs_exit_1(tmp_path, capsys):
    rc = main(["build", "--users", str(tmp_path / "none.csv"),
               "--engagements", str(tmp_path / "none2.csv"),
               "--schema", str(tmp_path / "none3.json"),
               "--out", str(tmp_path / "t.json")])
    assert rc == 1
    err = capsys.readouterr().err
    event = json.loads(err.splitlines()[-1])
    assert event["event"] == "error" and "not found" in event["message"]


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


@pytest.mark.skipif(shutil.which("bustree") is None,
                    reason="console script not on PATH")
def test_console_script_runs():
    out = subprocess.run(["bustree", "--version"], capture_output=True,
                         text=True)
    assert out.returncode == 0
    assert "bustree" in out.stdout
