"""End-to-end checks of the experiment driver.

Each test writes a small INI config, runs a subcommand through main()
and inspects exit code and output files.  Scales are kept tiny; the
statistical content of the commands is covered elsewhere.
"""

import json

from finicode.cli import main


def write_config(path, sections):
    with open(path, "w") as fh:
        for name, kv in sections.items():
            fh.write(f"[{name}]\n")
            for k, v in kv.items():
                fh.write(f"{k} = {v}\n")
            fh.write("\n")
    return str(path)


def base_ising(out, seed=11):
    return {
        "experiment": {"seed": seed, "out": out},
        "model": {"kind": "ising", "d": 1, "beta": 0.2},
    }


def fh_stopping(miss_tau=1, window="simple"):
    sec = {"tau": "first_hit", "window": window,
           "hit_symbol": 8, "miss_tau": miss_tau,
           "sigma": "column", "sigma_m": 2}
    if window == "cone":
        sec["delta"] = 1
    return sec


class TestStationarity:
    def test_ising_chain_passes(self, tmp_path):
        out = tmp_path / "out"
        cfg = base_ising(out)
        cfg["domain"] = {"extent": 4}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["stationarity", "--config", path]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["pass"] is True
        assert summary["max_abs_err"] < 1e-10
        assert (out / "measure.csv").exists()
        assert (out / "measure.png").exists()

    def test_torus_and_coloring(self, tmp_path):
        cfg = base_ising(tmp_path / "o1")
        cfg["model"]["d"] = 2
        cfg["domain"] = {"extent": "2x2"}
        p1 = write_config(tmp_path / "c1.ini", cfg)
        assert main(["stationarity", "--config", p1]) == 0
        cfg2 = {"experiment": {"seed": 3, "out": tmp_path / "o2"},
                "model": {"kind": "coloring", "q": 4},
                "domain": {"extent": 5}}
        p2 = write_config(tmp_path / "c2.ini", cfg2)
        assert main(["stationarity", "--config", p2]) == 0

    def test_zero_tolerance_is_statistical_failure(self, tmp_path):
        out = tmp_path / "out"
        cfg = base_ising(out)
        cfg["domain"] = {"extent": 4}
        cfg["stationarity"] = {"tolerance": 0}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["stationarity", "--config", path]) == 2
        summary = json.loads((out / "summary.json").read_text())
        assert summary["pass"] is False


class TestSample:
    def test_chain_outputs(self, tmp_path):
        out = tmp_path / "out"
        cfg = base_ising(out, seed=5)
        cfg["domain"] = {"extent": 6}
        cfg["sample"] = {"n": 30}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["sample", "--config", path]) == 0
        lines = (out / "samples.csv").read_text().splitlines()
        assert lines[0].startswith("# seed=5, config_hash=")
        assert lines[1] == "sample,seed,s0,s1,s2,s3,s4,s5,total_depth"
        assert len(lines) == 32
        assert (out / "depths.png").exists()

    def test_patch_mode(self, tmp_path):
        out = tmp_path / "out"
        cfg = base_ising(out)
        cfg["domain"] = {"patch_radius": 1}
        cfg["sample"] = {"n": 20}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["sample", "--config", path]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["sites"] == 3

    def test_tiny_guard_exits_4(self, tmp_path):
        cfg = base_ising(tmp_path / "out")
        cfg["domain"] = {"extent": 6}
        cfg["sample"] = {"n": 20, "guard_depth": 2}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["sample", "--config", path]) == 4


class TestCoding:
    def test_run_stats_and_checked_mode(self, tmp_path):
        out = tmp_path / "out"
        cfg = base_ising(out, seed=42)
        cfg["stopping"] = fh_stopping(miss_tau=2)
        cfg["transport"] = {"box_radius": 8, "steps": 400,
                            "runs": 40, "checked_runs": 2}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["coding", "--config", path]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["invariant_violations"] == 0
        assert summary["reach_bound_ok"] is True
        assert 0 <= summary["max_tau"] <= 2
        lines = (out / "runs.csv").read_text().splitlines()
        assert len(lines) == 42

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = base_ising(tmp_path / "a", seed=42)
        cfg["stopping"] = fh_stopping()
        cfg["transport"] = {"box_radius": 8, "steps": 400,
                            "runs": 25, "checked_runs": 0}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["coding", "--config", path]) == 0
        assert main(["coding", "--config", path,
                     "--out", str(tmp_path / "b")]) == 0
        for name in ("runs.csv", "summary.json"):
            fa = (tmp_path / "a" / name).read_bytes()
            fb = (tmp_path / "b" / name).read_bytes()
            assert fa == fb

    def test_seed_override_changes_data(self, tmp_path):
        cfg = base_ising(tmp_path / "a", seed=42)
        cfg["stopping"] = fh_stopping()
        cfg["transport"] = {"box_radius": 8, "steps": 400,
                            "runs": 25, "checked_runs": 0}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["coding", "--config", path]) == 0
        assert main(["coding", "--config", path, "--seed", "777",
                     "--out", str(tmp_path / "b")]) == 0
        la = (tmp_path / "a" / "runs.csv").read_text().splitlines()
        lb = (tmp_path / "b" / "runs.csv").read_text().splitlines()
        assert la[0].startswith("# seed=42,")
        assert lb[0].startswith("# seed=777,")
        assert la[0].split("config_hash=")[1] \
            == lb[0].split("config_hash=")[1]
        assert la[2:] != lb[2:]


class TestEquivalence:
    def test_three_arms_agree(self, tmp_path):
        out = tmp_path / "out"
        cfg = base_ising(out, seed=71)
        cfg["stopping"] = fh_stopping(miss_tau=1)
        cfg["transport"] = {"box_radius": 8, "steps": 400}
        cfg["equivalence"] = {"runs": 300, "n_boot": 100}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["equivalence", "--config", path]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["in_band_engine_direct"] is True
        assert summary["in_band_method_ab"] is True
        assert (out / "atoms.csv").exists()
        assert (out / "atoms.png").exists()

    def test_wrong_hit_control_detected(self, tmp_path):
        out = tmp_path / "out"
        cfg = base_ising(out, seed=71)
        cfg["stopping"] = fh_stopping(miss_tau=1)
        cfg["transport"] = {"box_radius": 8, "steps": 400}
        cfg["equivalence"] = {"runs": 300, "n_boot": 100,
                              "control_hit": 0}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["equivalence", "--config", path]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["control"] is True
        assert summary["in_band_engine_direct"] is False


class TestLocality:
    def test_far_identical_near_changed(self, tmp_path):
        out = tmp_path / "out"
        cfg = base_ising(out, seed=9)
        cfg["stopping"] = {"tau": "first_hit", "window": "cone",
                           "delta": 1, "hit_symbol": 8, "miss_tau": 9,
                           "sigma": "column_first_hit",
                           "sigma_hit": 4, "sigma_cap": 30}
        cfg["transport"] = {"steps": 400}
        cfg["locality"] = {"steps": 6, "trials": 3, "power_trials": 2}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["locality", "--config", path]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["far_identical"] == 3
        assert summary["near_changed"] >= 1
        assert summary["radius"] == 180

    def test_simple_window_rejected(self, tmp_path):
        cfg = base_ising(tmp_path / "out")
        cfg["stopping"] = fh_stopping(window="simple")
        cfg["transport"] = {"steps": 400}
        cfg["locality"] = {"steps": 6}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["locality", "--config", path]) == 1


class TestTails:
    def test_depth_arm(self, tmp_path):
        out = tmp_path / "out"
        cfg = base_ising(out, seed=31)
        cfg["tails"] = {"depth_samples": 300}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["tails", "--config", path]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["depth_fit_ok"] is True
        assert summary["depth_r2"] > 0.9
        assert (out / "depth_survival.csv").exists()
        assert (out / "depth_survival.png").exists()

    def test_coding_arm_with_auto_sigma(self, tmp_path):
        out = tmp_path / "out"
        cfg = base_ising(out, seed=32)
        cfg["stopping"] = {"tau": "first_hit", "window": "cone",
                           "delta": 1, "hit_symbol": 8, "miss_tau": 1,
                           "sigma": "auto", "sigma_est_runs": 200}
        cfg["transport"] = {"box_radius": 16, "steps": 400}
        cfg["tails"] = {"coding_runs": 200}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["tails", "--config", path]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["survival_monotone"] is True
        assert summary["survival_reaches_zero"] is True
        assert summary["reach_bound_ok"] is True

    def test_no_arm_is_config_error(self, tmp_path):
        cfg = base_ising(tmp_path / "out")
        cfg["tails"] = {}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["tails", "--config", path]) == 1


class TestConfigHandling:
    def test_missing_file(self, tmp_path):
        assert main(["sample", "--config",
                     str(tmp_path / "nope.ini")]) == 1

    def test_missing_key(self, tmp_path):
        cfg = base_ising(tmp_path / "out")
        del cfg["model"]["beta"]
        cfg["domain"] = {"extent": 4}
        cfg["sample"] = {"n": 5}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["sample", "--config", path]) == 1

    def test_unknown_model_kind(self, tmp_path):
        cfg = base_ising(tmp_path / "out")
        cfg["model"]["kind"] = "potts"
        cfg["domain"] = {"extent": 4}
        cfg["sample"] = {"n": 5}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["sample", "--config", path]) == 1

    def test_table_model_has_no_enumerated_law(self, tmp_path):
        cfg = {"experiment": {"seed": 1, "out": tmp_path / "out"},
               "model": {"kind": "table", "beta": 0.1},
               "domain": {"extent": "2x2"}}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["stationarity", "--config", path]) == 1

    def test_out_flag_wins_over_config(self, tmp_path):
        cfg = base_ising(tmp_path / "ignored")
        cfg["domain"] = {"extent": 4}
        cfg["sample"] = {"n": 5}
        path = write_config(tmp_path / "c.ini", cfg)
        assert main(["sample", "--config", path,
                     "--out", str(tmp_path / "used")]) == 0
        assert (tmp_path / "used" / "samples.csv").exists()
        assert not (tmp_path / "ignored").exists()
