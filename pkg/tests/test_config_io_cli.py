import json
import re

import numpy as np
import pytest

from gammagibbs import DiscreteMeasure, LevySpec, Window, sample_batch
from gammagibbs.cli import main
from gammagibbs.config import ConfigError, parse_config, parse_config_dict
from gammagibbs.io import read_samples, write_samples


def test_minimal_config_defaults():
    rc = parse_config_dict({"levy": {"theta": 1.0}, "grid": {"d": 1},
                            "potential": {"family": "step", "A": 5.0}})
    assert rc.potential.certified and rc.potential.family == "step"
    assert rc.grid.range == rc.grid.delta == 1.0
    assert rc.chain["n_steps"] == 200_000
    assert rc.eps_h > 0


def test_rc_violation_names_clause():
    with pytest.raises(ConfigError) as err:
        parse_config_dict({"potential": {"family": "core_shell", "A": 8.0, "b": 1.0}})
    assert "repulsion_condition" in str(err.value)
    assert err.value.values["clause"] == "repulsion_condition"


def test_unknown_key_has_path():
    with pytest.raises(ConfigError) as err:
        parse_config_dict({"chain": {"n_stepz": 10}})
    assert err.value.key_path == "chain.n_stepz"


def test_duplicate_key(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"seed": 1, "seed": 2}')
    with pytest.raises(ConfigError) as err:
        parse_config(p)
    assert "seed" in str(err.value)


def test_parse_error(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{nope")
    with pytest.raises(ConfigError):
        parse_config(p)


def test_dump_roundtrip(tmp_path, rng):
    w = Window.box([0.0, 0.0], [1.0, 2.0])
    batch = sample_batch(LevySpec.gamma(1.0, 1e-2), w, 30, rng)
    path = write_samples(tmp_path / "s.csv", batch, {"seed": 1})
    back = read_samples(path)
    assert back.n_samples == 30
    assert np.array_equal(back.positions, batch.positions)
    assert np.array_equal(back.marks, batch.marks)
    assert np.array_equal(back.sample_id, batch.sample_id)
    assert json.loads((tmp_path / "s.json").read_text())["seed"] == 1


def test_dump_of_measures_with_empty_samples(tmp_path):
    ms = [DiscreteMeasure.empty(1), DiscreteMeasure([[0.25]], [1.5]), DiscreteMeasure.empty(1)]
    path = write_samples(tmp_path / "e.csv", ms, window=Window.box([0.0], [1.0]))
    back = read_samples(path)
    assert back.n_samples == 3
    assert [len(m) for m in back] == [0, 1, 0]


def test_cli_constants(capsys):
    assert main(["constants"]) == 0
    out = capsys.readouterr().out
    rows = dict(re.split(r"\s{2,}", line.strip(), maxsplit=1) for line in out.strip().splitlines())
    assert float(rows["m_phi"]) == 4.0
    assert float(rows["lambda0 = A - m b"]) == 6.0


def test_cli_unknown_subcommand(capsys):
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_cli_bad_config(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text('{"potential": {"family": "core_shell", "A": 1.0, "b": 1.0}}')
    assert main(["constants", "--config", str(p)]) == 2
    assert "repulsion_condition" in capsys.readouterr().err


def test_cli_sample_gamma_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["sample-gamma", "--n", "50", "--out", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "gamma_samples.csv").read_bytes()
    assert a == (tmp_path / "b" / "gamma_samples.csv").read_bytes()
    assert main(["sample-gamma", "--n", "0", "--out", str(tmp_path)]) == 2


def test_cli_sample_gibbs(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"chain": {"n_steps": 5000}}))
    args = ["sample-gibbs", "--config", str(cfg), "--seed", "9"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("gibbs_samples.csv", "diagnostics.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_verify_free_measure_deterministic(tmp_path):
    for name in ("r1.json", "r2.json"):
        assert main(["verify", "--suite", "free-measure",
                     "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()
    rep = json.loads((tmp_path / "r1.json").read_text())
    assert rep["success"] and rep["results"][0]["suite"] == "free-measure"
    assert (tmp_path / "r1.meta.json").exists()


def test_cli_verify_unknown_suite(tmp_path):
    assert main(["verify", "--suite", "nope", "--out", str(tmp_path / "r.json")]) == 2


def test_cli_sweep(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"chain": {"n_steps": 20000}}))
    code = main(["sweep", "--config", str(cfg), "--out", str(tmp_path)])
    assert code in (0, 1)
    assert (tmp_path / "sweep.csv").read_text().startswith("n_cubes,statistic,mean")
