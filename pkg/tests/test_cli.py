"""Command-line pipeline: synth, scan, fit, power, budget, film commands."""

import json
import os
from dataclasses import replace

import numpy as np
import pytest

from cpwloss import cli, dataio, synth
from cpwloss.dataio import ComplexSweep


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def file_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestSynth:
    def test_notch_files(self, tmp_path):
        assert run("synth", "notch", "--out", tmp_path) == 0
        assert (tmp_path / "notch.dat").exists()
        truth = read_json(tmp_path / "truth.json")
        assert truth["kind"] == "notch"
        sweep = dataio.parse_sweep_file(tmp_path / "notch.dat")
        assert sweep.frequency_hz.size == 1001

    def test_deterministic_across_runs(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        for d in (d1, d2):
            assert run("synth", "notch", "noise=0.0005", "--out", d,
                       "--seed", 5) == 0
        assert file_bytes(d1 / "notch.dat") == file_bytes(d2 / "notch.dat")
        assert file_bytes(d1 / "truth.json") == file_bytes(d2 / "truth.json")

    def test_seed_changes_noise(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        assert run("synth", "notch", "noise=0.0005", "--out", d1, "--seed", 5) == 0
        assert run("synth", "notch", "noise=0.0005", "--out", d2, "--seed", 6) == 0
        assert file_bytes(d1 / "notch.dat") != file_bytes(d2 / "notch.dat")

    def test_unknown_param_rejected(self, tmp_path, capsys):
        assert run("synth", "notch", "bogus=1", "--out", tmp_path) == 1
        assert "unknown synth parameter" in capsys.readouterr().err

    def test_all_kinds_write_truth(self, tmp_path):
        for kind, data_file in [("rt", "rt.dat"), ("xrd", "xrd.dat")]:
            d = tmp_path / kind
            assert run("synth", kind, "--out", d) == 0
            assert (d / data_file).exists()
            assert (d / "truth.json").exists()


@pytest.fixture(scope="module")
def feedline_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("feedline")
    assert run("synth", "feedline", "noise=0.0005", "--out", d, "--seed", 42) == 0
    return d


@pytest.fixture(scope="module")
def scanned_dir(feedline_dir):
    assert run("scan", feedline_dir / "feedline.dat", "--out", feedline_dir) == 0
    return feedline_dir


class TestScan:
    def test_finds_all_resonators(self, scanned_dir):
        doc = read_json(scanned_dir / "scan_report.json")
        truth = read_json(scanned_dir / "truth.json")
        windows = doc["body"]["windows"]
        assert doc["body"]["n_windows"] == 9
        frs = sorted(r["fr"] for r in truth["resonators"])
        for w, fr in zip(windows, frs):
            assert w["f_lo_hz"] < fr < w["f_hi_hz"]
            assert abs(w["f_center_hz"] - fr) < 5 * w["est_linewidth_hz"]
            assert w["proximity_flag"] is False

    def test_trace_companion_written(self, scanned_dir):
        assert (scanned_dir / "scan_report_trace.dat").exists()

    def test_flat_trace_fails_loud(self, tmp_path, capsys):
        f = np.linspace(4e9, 5e9, 2001)
        sweep = ComplexSweep(frequency_hz=f, s21=np.full(f.size, 0.9 + 0.1j))
        path = tmp_path / "flat.dat"
        dataio.write_sweep_file(path, sweep)
        assert run("scan", path, "--out", tmp_path) == 1
        assert "no dips" in capsys.readouterr().err

    def test_close_dips_flagged(self, tmp_path):
        d = tmp_path / "close"
        assert run("synth", "feedline", "n_res=2", "spacing=30e6",
                   "noise=0.0002", "--out", d, "--seed", 3) == 0
        assert run("scan", d / "feedline.dat", "--out", d) == 0
        windows = read_json(d / "scan_report.json")["body"]["windows"]
        assert len(windows) == 2
        assert all(w["proximity_flag"] for w in windows)


class TestFit:
    def test_windows_pipeline(self, scanned_dir, tmp_path):
        out = tmp_path / "fits"
        assert run("fit", scanned_dir / "feedline.dat",
                   "--windows", scanned_dir / "scan_report.json",
                   "--out", out, "--jobs", 2) == 0
        doc = read_json(out / "fit_report.json")
        body = doc["body"]
        assert body["n_fits"] == 9
        assert body["n_failures"] == 0
        truth = read_json(scanned_dir / "truth.json")
        by_fr = sorted(truth["resonators"], key=lambda r: r["fr"])
        for entry, res in zip(body["fits"], by_fr):
            assert entry["fr"] == pytest.approx(res["fr"], rel=1e-6)
            assert entry["Ql"] == pytest.approx(res["Ql"], rel=0.02)
            assert entry["Qc_mag"] == pytest.approx(res["Qc_mag"], rel=0.02)

    def test_rerun_byte_identical(self, scanned_dir, tmp_path):
        out = tmp_path / "fits"
        args = ("fit", scanned_dir / "feedline.dat",
                "--windows", scanned_dir / "scan_report.json", "--out", out)
        assert run(*args) == 0
        first = file_bytes(out / "fit_report.json")
        assert run(*args) == 0
        assert file_bytes(out / "fit_report.json") == first

    def test_single_file(self, tmp_path):
        assert run("synth", "notch", "--out", tmp_path) == 0
        assert run("fit", tmp_path / "notch.dat", "--out", tmp_path) == 0
        body = read_json(tmp_path / "fit_report.json")["body"]
        truth = read_json(tmp_path / "truth.json")
        assert body["n_fits"] == 1
        assert body["fits"][0]["fr"] == pytest.approx(truth["fr"], rel=1e-9)
        assert body["fits"][0]["Ql"] == pytest.approx(truth["ql"], rel=1e-6)

    def test_failure_sets_exit_code(self, tmp_path, capsys):
        f = np.linspace(4e9, 4.001e9, 200)
        sweep = ComplexSweep(frequency_hz=f, s21=np.full(f.size, 0.8 + 0.0j))
        path = tmp_path / "flat.dat"
        dataio.write_sweep_file(path, sweep)
        assert run("fit", path, "--out", tmp_path) == 1
        body = read_json(tmp_path / "fit_report.json")["body"]
        assert body["n_failures"] == 1
        assert body["n_fits"] == 0
        assert capsys.readouterr().err.strip() != ""


@pytest.fixture(scope="module")
def power_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("power")
    assert run("synth", "power_series", "noise=0.0005", "process=B/HP/HT/BOE",
               "--out", d, "--seed", 11) == 0
    return d


class TestPower:
    def test_power_series_fit(self, power_dir, tmp_path):
        out = tmp_path / "tls"
        files = sorted(power_dir.glob("power_*.dat"))
        assert len(files) == 12
        assert run("power", *files, "--out", out) == 0
        body = read_json(out / "tls_report.json")["body"]
        truth = read_json(power_dir / "truth.json")
        fit = body["tls_fit"]
        assert fit["delta_tls"] == pytest.approx(truth["delta_tls"], rel=0.05)
        assert fit["n_c"] == pytest.approx(truth["n_c"], rel=0.25)
        assert fit["beta"] == pytest.approx(truth["beta"], rel=0.05)
        assert fit["delta_hp"] == pytest.approx(truth["delta_hp"], rel=0.05)
        assert fit["delta_tls"] == fit["delta_lp"] - fit["delta_hp"]
        assert body["process"] == "B/HP/HT/BOE"
        assert body["attenuation_db"] == 60.0
        assert len(body["points"]) == 12
        assert (out / "tls_report_loss_vs_n.dat").exists()
        assert (out / "tls_report_model_curve.dat").exists()

    def test_missing_attenuation_fails(self, tmp_path, capsys):
        sweeps, _ = synth.synthesize_power_series(seed=2)
        d = tmp_path / "noatten"
        d.mkdir()
        files = []
        for k, s in enumerate(sweeps):
            path = d / f"p{k:02d}.dat"
            dataio.write_sweep_file(path, replace(s, attenuation_db=None))
            files.append(path)
        assert run("power", *files, "--out", d) == 1
        assert "error" in capsys.readouterr().err
        # an explicit value on the command line rescues the series
        assert run("power", *files, "--attenuation-db", 60, "--out", d) == 0


class TestBudget:
    def write_losses(self, tmp_path, **overrides):
        values = {"delta_sa": 1e-3, "delta_ma": 1e-3,
                  "delta_ms": 1e-3, "delta_si": 1e-7}
        values.update(overrides)
        path = tmp_path / "losses.cfg"
        path.write_text("".join(f"{k}={v}\n" for k, v in values.items()))
        return path

    def test_forward_reference(self, tmp_path):
        losses = self.write_losses(tmp_path)
        assert run("budget", "--losses", losses, "--trench-nm", 0,
                   "--out", tmp_path) == 0
        body = read_json(tmp_path / "budget_report.json")["body"]
        assert body["mode"] == "forward"
        assert body["delta_tls"]["value"] == pytest.approx(1.0162e-6, rel=1e-4)

    def test_forward_needs_trench(self, tmp_path, capsys):
        losses = self.write_losses(tmp_path)
        assert run("budget", "--losses", losses, "--out", tmp_path) == 1
        assert "trench" in capsys.readouterr().err

    def test_bad_loss_keys(self, tmp_path, capsys):
        path = tmp_path / "losses.cfg"
        path.write_text("delta_sa=1e-3\ndelta_ma=1e-3\n")
        assert run("budget", "--losses", path, "--trench-nm", 0,
                   "--out", tmp_path) == 1
        assert "expected keys" in capsys.readouterr().err

    def test_needs_exactly_one_mode(self, tmp_path, capsys):
        assert run("budget", "--out", tmp_path) == 1
        assert "exactly one" in capsys.readouterr().err

    def test_decompose_flags_degeneracy(self, tmp_path):
        # interpolated geometries cannot separate four loss tangents
        from cpwloss import lossbudget
        table = lossbudget.load_builtin_table()
        truth = lossbudget.InterfaceLosses(delta_sa=2e-3, delta_ma=8e-4,
                                           delta_ms=1.5e-3, delta_si=2e-7)
        lines = ["trench_nm delta"]
        for t in (0.0, 25.0, 50.0, 75.0, 100.0):
            row = lossbudget.interpolate(table, t)
            lines.append(f"{t} {lossbudget.forward_loss(row, truth):.12e}")
        path = tmp_path / "measured.dat"
        path.write_text("\n".join(lines) + "\n")
        assert run("budget", "--decompose", path, "--out", tmp_path) == 0
        body = read_json(tmp_path / "budget_report.json")["body"]
        assert body["mode"] == "decompose"
        assert body["result"]["rank"] == 3
        assert len(body["result"]["unresolved"]) > 0
        assert len(body["result"]["resolved_combinations"]) == 3


class TestFilmCommands:
    def test_xrd_single_phase(self, tmp_path):
        assert run("synth", "xrd", "noise=2", "--out", tmp_path, "--seed", 9) == 0
        assert run("xrd", tmp_path / "xrd.dat", "--out", tmp_path) == 0
        body = read_json(tmp_path / "xrd_report.json")["body"]
        assert body["orientation"]["orientation"] == "TiN111"
        assert body["peaks"][0]["center"] == pytest.approx(36.9, abs=0.02)
        assert len(body["diagnostics"]) == 1  # empty (200) window reported

    def test_xrd_mixed_with_grain_ratio(self, tmp_path):
        assert run("synth", "xrd", "peaks=36.9:0.4:500:0.3,42.8:1.6:300:0.5",
                   "--out", tmp_path) == 0
        assert run("xrd", tmp_path / "xrd.dat", "--out", tmp_path) == 0
        body = read_json(tmp_path / "xrd_report.json")["body"]
        assert body["orientation"]["orientation"] == "Mixed"
        assert body["grain_ratio_111_over_200"] == pytest.approx(3.926, abs=2e-3)

    def test_rrr_command(self, tmp_path):
        assert run("synth", "rt", "--out", tmp_path) == 0
        assert run("rrr", tmp_path / "rt.dat", "--out", tmp_path) == 0
        body = read_json(tmp_path / "rrr_report.json")["body"]
        assert body["tc_rrr"]["tc"] == pytest.approx(4.7, abs=0.01)
        assert body["tc_rrr"]["rrr"] == pytest.approx(4.0, rel=0.01)

    def test_sheet_command(self, tmp_path):
        sites = ("c", "n", "ne", "e", "se", "s", "sw", "w", "nw")
        maps = [dataio.SheetMap(wafer_id=f"W{k}", sites=sites,
                                r_square_ohm_sq=np.full(9, 11.75))
                for k in range(2)]
        path = tmp_path / "sheet.dat"
        dataio.write_sheet_file(path, maps)
        assert run("sheet", path, "--thickness-nm", 60, "--out", tmp_path) == 0
        body = read_json(tmp_path / "sheet_report.json")["body"]
        assert body["sheet_stats"]["batch_mean_ohm_sq"] == pytest.approx(11.75)
        assert body["resistivity_uohm_cm"]["value"] == pytest.approx(70.5, rel=1e-9)


class TestReport:
    def build_tree(self, root, runs):
        for name, process in runs:
            d = root / name
            assert run("synth", "power_series", "noise=0.0005",
                       f"process={process}" if process else "process=",
                       "--out", d, "--seed", 13) == 0
            files = sorted(d.glob("power_*.dat"))
            assert run("power", *files, "--out", d) == 0

    def test_grouping(self, tmp_path, capsys):
        self.build_tree(tmp_path, [("r1", "B/HP/HT/BOE"), ("r2", "B/HP/HT/BOE"),
                                   ("r3", "A/LP/HT/none"), ("r4", "")])
        assert run("report", tmp_path, "--out", tmp_path) == 0
        body = read_json(tmp_path / "group_report.json")["body"]
        assert body["metric"] == "delta_lp"
        assert body["n_reports"] == 3
        assert len(body["skipped"]) == 1
        keys = set(body["groups"]["by_key"])
        assert keys == {"B/HP/HT/BOE", "A/LP/HT/none"}
        group = body["groups"]["by_key"]["B/HP/HT/BOE"]
        assert group["n"] == 2

    def test_empty_tree_fails(self, tmp_path, capsys):
        (tmp_path / "sub").mkdir()
        assert run("report", tmp_path, "--out", tmp_path) == 1
        assert "no TLS fit reports" in capsys.readouterr().err


class TestConfigMerge:
    def test_config_seed_used(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("seed=7\n")
        d1, d2 = tmp_path / "a", tmp_path / "b"
        assert run("synth", "notch", "noise=0.0005", "--config", cfg,
                   "--out", d1) == 0
        assert run("synth", "notch", "noise=0.0005", "--seed", 7,
                   "--out", d2) == 0
        assert file_bytes(d1 / "notch.dat") == file_bytes(d2 / "notch.dat")

    def test_flag_overrides_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("seed=7\n")
        d1, d2 = tmp_path / "a", tmp_path / "b"
        assert run("synth", "notch", "noise=0.0005", "--config", cfg,
                   "--seed", 9, "--out", d1) == 0
        assert run("synth", "notch", "noise=0.0005", "--seed", 9,
                   "--out", d2) == 0
        assert file_bytes(d1 / "notch.dat") == file_bytes(d2 / "notch.dat")

    def test_out_dir_created(self, tmp_path):
        nested = tmp_path / "deep" / "nested"
        assert run("synth", "notch", "--out", nested) == 0
        assert (nested / "notch.dat").exists()


class TestErrors:
    def test_missing_file(self, tmp_path, capsys):
        assert run("fit", tmp_path / "nope.dat", "--out", tmp_path) == 1

    def test_error_goes_to_stderr(self, tmp_path, capsys):
        assert run("budget", "--out", tmp_path) == 1
        err = capsys.readouterr().err
        assert err.startswith("cpwloss budget: error:")
