import json

import pytest

from platoonmpc.cli import main
from platoonmpc.config import ConfigError, build_config, load_config

SHORT_YAML = "scenario:\n  duration: 4.0\n"


@pytest.fixture()
def short_config(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(SHORT_YAML)
    return str(path)


class TestConfigLoading:
    def test_defaults_without_file(self):
        cfg = load_config(None)
        assert cfg.vehicle.mass == 1722.0
        assert cfg.mpc.v_des == 15.64
        assert cfg.mpc.max_decel == pytest.approx(-3.218, abs=1e-3)
        assert cfg.scenario.n_vehicles == 4
        assert cfg.sweep_trust_horizons == (0, 5, 10, 15, 20)

    def test_empty_file_is_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_config(str(path)).digest() == load_config(None).digest()

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="mpc.alpa"):
            build_config({"mpc": {"alpa": 1.0}})

    def test_unknown_section_named(self):
        with pytest.raises(ConfigError, match="vehicles"):
            build_config({"vehicles": {}})

    def test_spacing_constraint_named(self):
        with pytest.raises(ConfigError, match="h_min"):
            build_config({"scenario": {"initial_spacing": 5.0}})

    def test_malformed_yaml_reports_line(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("scenario:\n  duration: [unclosed\n")
        with pytest.raises(ConfigError, match="line"):
            load_config(str(path))

    def test_sweep_validation(self):
        with pytest.raises(ConfigError, match="trust_horizons"):
            build_config({"sweep": {"trust_horizons": []}})
        with pytest.raises(ConfigError, match="outside"):
            build_config({"sweep": {"trust_horizons": [0, 99]}})

    def test_digest_tracks_content(self):
        a = build_config({"mpc": {"trust_horizon": 0}})
        b = build_config({"mpc": {"trust_horizon": 5}})
        assert a.digest() != b.digest()


class TestRunCommand:
    def test_successful_run(self, short_config, tmp_path, capsys):
        out = tmp_path / "out"
        rc = main(["run", "--config", short_config, "--out", str(out),
                   "--trust-horizon", "20"])
        assert rc == 0
        manifest = json.loads((out / "manifest.json").read_text())
        from pathlib import Path
        assert manifest["outputs"]
        for output in manifest["outputs"]:
            assert Path(output).exists()
        lines = (out / "trajectory.csv").read_text().strip().splitlines()
        assert len(lines) - 1 == 40 * 4  # N x duration/dt rows
        assert (out / "trajectories.png").stat().st_size > 1000

    def test_missing_config_exits_2(self, tmp_path):
        rc = main(["run", "--config", str(tmp_path / "nope.yaml"),
                   "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_invalid_spacing_exits_2(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("scenario:\n  initial_spacing: 5.0\n")
        rc = main(["run", "--config", str(path), "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_bad_trust_override_exits_2(self, short_config, tmp_path):
        rc = main(["run", "--config", short_config, "--out",
                   str(tmp_path / "o"), "--trust-horizon", "99"])
        assert rc == 2

    def test_identical_invocations_identical_csv(self, short_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", short_config, "--out", str(out1),
                     "--no-figures"]) == 0
        assert main(["run", "--config", short_config, "--out", str(out2),
                     "--no-figures"]) == 0
        assert (out1 / "trajectory.csv").read_bytes() == \
            (out2 / "trajectory.csv").read_bytes()

    def test_config_roundtrip_through_manifest(self, short_config, tmp_path):
        # a config echoed back by the tool re-parses to an identical run
        import yaml
        out1 = tmp_path / "a"
        assert main(["run", "--config", short_config, "--out", str(out1),
                     "--no-figures"]) == 0
        manifest = json.loads((out1 / "manifest.json").read_text())
        echoed = tmp_path / "echoed.yaml"
        cfg_dict = manifest["config"]
        cfg_dict["mpc"].pop("max_decel")  # derived, not a config key
        echoed.write_text(yaml.safe_dump(cfg_dict))
        out2 = tmp_path / "b"
        assert main(["run", "--config", str(echoed), "--out", str(out2),
                     "--no-figures"]) == 0
        assert (out1 / "trajectory.csv").read_bytes() == \
            (out2 / "trajectory.csv").read_bytes()


class TestSweepCommand:
    def test_single_point(self, short_config, tmp_path):
        out = tmp_path / "out"
        rc = main(["sweep", "--config", short_config, "--out", str(out),
                   "--trust-horizon", "20", "--no-figures"])
        # short run: vehicles may not cross the line; that is a runtime error
        if rc == 0:
            lines = (out / "sweep.csv").read_text().strip().splitlines()
            assert len(lines) == 2

    def test_sweep_five_points_figure(self, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("scenario:\n  duration: 16.0\n")
        out = tmp_path / "out"
        rc = main(["sweep", "--config", str(cfg), "--out", str(out),
                   "--trust-horizon", "0", "20"])
        assert rc == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "F,t_leader,t_last,vph"
        assert len(lines) == 3
        assert (out / "throughput_vs_trust.png").exists()

    def test_out_of_range_trust_exits_2(self, short_config, tmp_path):
        rc = main(["sweep", "--config", short_config, "--out",
                   str(tmp_path / "o"), "--trust-horizon", "0", "25"])
        assert rc == 2

    def test_empty_trust_list_usage_error(self, short_config, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["sweep", "--config", short_config, "--out",
                  str(tmp_path / "o"), "--trust-horizon"])
        assert exc.value.code == 2


class TestSafesetCommand:
    def test_reference_speed(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["safeset", "7.5", "--out", str(out)])
        assert rc == 0
        rows = (out / "safeset_v7.5.csv").read_text().strip().splitlines()
        assert rows[0] == "v,h_boundary"
        pts = [tuple(map(float, r.split(","))) for r in rows[1:]]
        assert any(abs(v - 7.4014) < 0.01 and abs(h - 6.5) < 1e-9
                   for v, h in pts)
        assert any(abs(v - 7.7232) < 0.01 and abs(h - 7.2562) < 0.01
                   for v, h in pts)
        assert (out / "safeset.png").stat().st_size > 1000

    def test_stopped_predecessor(self, tmp_path):
        out = tmp_path / "out"
        assert main(["safeset", "0", "--out", str(out), "--no-figures"]) == 0
        rows = (out / "safeset_v0.csv").read_text().strip().splitlines()
        v, h = map(float, rows[1].split(","))
        assert (v, h) == (0.0, 6.5)

    def test_speed_cap(self, tmp_path):
        out = tmp_path / "out"
        assert main(["safeset", "30", "--out", str(out), "--no-figures"]) == 0
        rows = (out / "safeset_v30.csv").read_text().strip().splitlines()
        assert len(rows) > 90

    def test_out_of_range_exits_2(self, tmp_path):
        assert main(["safeset", "31", "--out", str(tmp_path / "o")]) == 2
