import json
import math

import pytest

from lifshitslab.cli import emit_plot_data, run
from lifshitslab.config import (apply_overrides, config_hash, resolve_config,
                                validate_config)


class TestConfig:
    def test_unknown_key_rejected(self):
        with pytest.raises(KeyError):
            validate_config({"measure": {"intensiti": 1.0}})

    def test_override_parsing(self):
        cfg = resolve_config(overrides=["measure.intensity=0.5",
                                        "experiment.energies=[0.1, 0.2]"])
        assert cfg["measure"]["intensity"] == 0.5
        assert cfg["experiment"]["energies"] == [0.1, 0.2]

    def test_override_unknown_key(self):
        cfg = validate_config({})
        with pytest.raises(KeyError):
            apply_overrides(cfg, ["experiment.energy=0.1"])

    def test_bad_values_rejected(self):
        with pytest.raises(ValueError):
            validate_config({"measure": {"family": "gaussian"}})
        with pytest.raises(ValueError):
            validate_config({"experiment": {"energies": [0.1, -0.2]}})

    def test_infinite_exponent_string(self):
        cfg = validate_config({"potential": {"alpha": ["inf", 2.5],
                                             "dims": [1, 1]}})
        assert cfg["potential"]["alpha"] == ["inf", 2.5]

    def test_hash_stable_under_key_order(self):
        a = validate_config({"measure": {"intensity": 2.0}, "seed": 5})
        b = validate_config({"seed": 5, "measure": {"intensity": 2.0}})
        assert config_hash(a) == config_hash(b)
        c = validate_config({"measure": {"intensity": 2.1}, "seed": 5})
        assert config_hash(a) != config_hash(c)

    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            resolve_config(preset="nope")


class TestRun:
    def test_bad_config_exit_2(self, tmp_path, capsys):
        rc = run(["ids", "--override", "measure.intensiti=1",
                  "--out-dir", str(tmp_path)])
        assert rc == 2
        err = json.loads(capsys.readouterr().err)
        assert err["kind"] == "error"
        assert err["payload"]["stage"] == "config"

    def test_fit_fixture_recovers_unit_exponent(self, tmp_path, capsys):
        rc = run(["fit", "--out-dir", str(tmp_path)])
        assert rc == 0
        recs = [json.loads(line) for line in
                (tmp_path / "results.jsonl").read_text().splitlines()]
        fit = next(r for r in recs if r["kind"] == "fit")
        assert abs(fit["payload"]["eta_hat"] - 1.0) < 1e-6
        assert "eta_hat = 1.000" in capsys.readouterr().out

    def test_artifacts_written(self, tmp_path):
        rc = run(["sample-measure", "--preset", "poisson-1d", "--seed", "3",
                  "--out-dir", str(tmp_path)])
        assert rc == 0
        for name in ("results.jsonl", "summary.csv", "config.lock",
                     "measure.jsonl"):
            assert (tmp_path / name).exists()
        lock = json.loads((tmp_path / "config.lock").read_text())
        assert lock["config"]["seed"] == 3
        assert "timestamp" in lock

    def test_results_schema_valid(self, tmp_path):
        import jsonschema

        from lifshitslab.cli import _load_schema
        run(["eigs", "--preset", "poisson-1d", "--out-dir", str(tmp_path)])
        schema = _load_schema()
        for line in (tmp_path / "results.jsonl").read_text().splitlines():
            jsonschema.validate(json.loads(line), schema)

    def test_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ["ids", "--preset", "poisson-1d", "--seed", "9",
                "--override", "experiment.n_realizations=5"]
        assert run(args + ["--out-dir", str(a)]) == 0
        assert run(args + ["--out-dir", str(b), "--threads", "4"]) == 0
        assert (a / "results.jsonl").read_bytes() == \
               (b / "results.jsonl").read_bytes()

    def test_fit_from_ids_results(self, tmp_path):
        run(["ids", "--preset", "poisson-1d", "--out-dir", str(tmp_path),
             "--override", "experiment.n_realizations=5"])
        rc = run(["fit", "--input", str(tmp_path / "results.jsonl"),
                  "--out-dir", str(tmp_path / "refit")])
        assert rc == 0

    def test_runtime_error_exit_1(self, tmp_path, capsys):
        # k_eigs >= matrix dimension forces a solver ValueError at runtime
        rc = run(["eigs", "--preset", "poisson-1d",
                  "--override", "experiment.k_eigs=100000",
                  "--out-dir", str(tmp_path)])
        assert rc == 1
        recs = [json.loads(line) for line in
                (tmp_path / "results.jsonl").read_text().splitlines()]
        assert recs[-1]["kind"] == "error"


class TestPlotData:
    def test_phase_grid(self, tmp_path):
        out = tmp_path / "grid.csv"
        n = emit_plot_data(None, "phase-grid", str(out))
        lines = out.read_text().splitlines()
        assert len(lines) == n + 1
        header = lines[0].split(",")
        assert header == ["alpha_1", "alpha_2", "eta"]
        # the all-infinite corner is the pure quantum point eta = 1
        row = next(l for l in lines[1:] if l.startswith("inf,inf,"))
        assert math.isclose(float(row.split(",")[2]), 1.0)

    def test_curve_empty_input_warns(self, tmp_path, capsys):
        src = tmp_path / "empty.jsonl"
        src.write_text("")
        out = tmp_path / "curve.csv"
        assert emit_plot_data(str(src), "curve", str(out)) == 0
        assert "warning" in capsys.readouterr().err
        assert out.read_text().strip()  # header-only CSV still written

    def test_curve_rejects_nonmonotone(self, tmp_path):
        src = tmp_path / "bad.jsonl"
        recs = [{"kind": "ids_point", "config_hash": "0" * 16, "seed": 1,
                 "payload": {"E": e, "value": v}}
                for e, v in [(0.1, 0.5), (0.2, 0.1)]]
        src.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
        with pytest.raises(ValueError):
            emit_plot_data(str(src), "curve", str(tmp_path / "c.csv"))

    def test_chain_from_bounds_run(self, tmp_path):
        rc = run(["bounds", "--preset", "poisson-1d",
                  "--override", "experiment.n_realizations=3",
                  "--override", "experiment.mode=qm",
                  "--override", "potential.f0=0.05",
                  "--out-dir", str(tmp_path)])
        assert rc == 0
        out = tmp_path / "chain.csv"
        n = emit_plot_data(str(tmp_path / "results.jsonl"), "chain", str(out))
        assert n == 3
