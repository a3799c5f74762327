import json
import os

import pytest

from acimtools import cli

SMALL = {
    "map": {"example_id": "neutral1d"},
    "seed": 7,
    "induction": {"n_max": 500, "n_samples": 20000, "fit_window": [50, 500]},
    "transfer": {"resolution": 64, "samples_per_cell": 16, "n_levels": 1000},
    "quasi_holder": {"alpha": 0.5, "eps0": 0.1, "k_max": 2},
    "asymptotics": {"orbit_length": 2000},
}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


@pytest.mark.parametrize("command,artifact", [
    ("induce-stats", "tails.csv"),
    ("classify", "classification.json"),
    ("density", "density.csv"),
    ("seminorm", "ly_report.json"),
    ("asymptotics", "asymptotics.json"),
])
def test_commands_write_artifacts(tmp_path, command, artifact):
    out = tmp_path / "out"
    code = cli.main([command, "--config", _write(tmp_path, SMALL), "--out", str(out)])
    assert code == 0
    assert (out / artifact).exists()
    assert not (out / "errors.json").exists()


def test_csv_header_carries_hash_and_seed(tmp_path):
    out = tmp_path / "out"
    cli.main(["induce-stats", "--config", _write(tmp_path, SMALL), "--out", str(out)])
    first = (out / "tails.csv").read_text().splitlines()[0]
    assert first == f"# config_sha256={cli.config_hash(SMALL)} seed=7"


def test_json_header(tmp_path):
    out = tmp_path / "out"
    cli.main(["classify", "--config", _write(tmp_path, SMALL), "--out", str(out)])
    doc = json.loads((out / "classification.json").read_text())
    assert doc["header"]["config_sha256"] == cli.config_hash(SMALL)
    assert doc["header"]["seed"] == 7


def test_missing_seed_is_invalid(tmp_path):
    cfg = {k: v for k, v in SMALL.items() if k != "seed"}
    out = tmp_path / "out"
    code = cli.main(["classify", "--config", _write(tmp_path, cfg), "--out", str(out)])
    assert code == 2
    assert os.listdir(out) == ["errors.json"]


def test_seed_override(tmp_path):
    cfg = {k: v for k, v in SMALL.items() if k != "seed"}
    out = tmp_path / "out"
    assert cli.main(["induce-stats", "--config", _write(tmp_path, cfg), "--seed", "3", "--out", str(out)]) == 0
    assert "seed=3" in (out / "tails.csv").read_text().splitlines()[0]


def test_unknown_key_is_invalid(tmp_path):
    cfg = dict(SMALL, induction={"n_max": 10, "bogus": 1})
    code = cli.main(["induce-stats", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")])
    assert code == 2


def test_missing_block_is_invalid(tmp_path):
    cfg = {"map": {"example_id": 1}, "seed": 0}
    assert cli.main(["audit", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2


def test_bad_map_is_invalid(tmp_path):
    cfg = dict(SMALL, map={"example_id": 9})
    assert cli.main(["classify", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2


def test_config_hash_is_canonical():
    a = {"seed": 1, "map": {"example_id": 1}}
    b = {"map": {"example_id": 1}, "seed": 1}
    assert cli.config_hash(a) == cli.config_hash(b)
    assert cli.config_hash(a) != cli.config_hash(dict(a, seed=2))


def test_same_seed_same_bytes(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        cli.main(["density", "--config", _write(tmp_path, SMALL), "--out", str(out)])
        outs.append((out / "density.csv").read_bytes())
    assert outs[0] == outs[1]


def test_determinism_probe():
    assert cli.determinism_probe(0)


def test_replicate_subset(tmp_path):
    rows, runtimes, ok = cli.replicate_paper(str(tmp_path), budget=0.2, seed=0, criteria=[1, 2])
    assert ok
    assert (tmp_path / "summary.csv").read_text().startswith("# config_sha256=")
    assert set(runtimes) == {"1", "2"}
