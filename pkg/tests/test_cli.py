import json
import subprocess
import sys

import pytest

from cstrack.cli import main

import world


@pytest.fixture
def paths(tmp_path):
    return world.write_world(tmp_path)


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


def build_starmap(paths, tmp_path, out="starmap.json", seed=3):
    out_path = tmp_path / out
    code = run_cli(
        "build-starmap", "--map", paths["map"], "--perturb", paths["perturb"],
        "--constitution", paths["constitution"],
        "--bbox=-300,-300,3900,300", "--rows", 12, "--cols", 22,
        "--samples", 16, "--seed", seed, "--out", out_path,
    )
    assert code == 0
    return out_path


def ingest(paths, tmp_path, out="tracks.json"):
    out_path = tmp_path / out
    code = run_cli("ingest", "--csv", paths["csv"], "--out", out_path,
                   "--dt", 60, f"--origin={world.ORIGIN[0]},{world.ORIGIN[1]}")
    assert code == 0
    return out_path


class TestIngest:
    def test_writes_tracks(self, paths, tmp_path):
        out = ingest(paths, tmp_path)
        doc = json.loads(out.read_text())
        assert len(doc["tracks"]) == 1
        assert doc["ingest_stats"]["records_kept"] == 30

    def test_missing_file_is_user_error(self, tmp_path):
        code = run_cli("ingest", "--csv", tmp_path / "nope.csv",
                       "--out", tmp_path / "o.json")
        assert code == 2

    def test_all_rows_invalid_is_user_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("MMSI,BaseDateTime,LAT,LON\n1,2020-01-01T00:00:00,99.0,0.0\n")
        code = run_cli("ingest", "--csv", bad, "--out", tmp_path / "o.json")
        assert code == 2


class TestBuildStarmap:
    def test_creates_layers(self, paths, tmp_path):
        out = build_starmap(paths, tmp_path)
        doc = json.loads(out.read_text())
        assert doc["resolution"] == [12, 22]
        assert [l["relation"] for l in doc["layers"]] == ["over"]

    def test_rerun_byte_identical(self, paths, tmp_path):
        a = build_starmap(paths, tmp_path, out="a.json", seed=5)
        b = build_starmap(paths, tmp_path, out="b.json", seed=5)
        assert a.read_bytes() == b.read_bytes()

    def test_malformed_geojson_exit_2(self, paths, tmp_path):
        bad = tmp_path / "bad.geojson"
        bad.write_text("{not json")
        code = run_cli(
            "build-starmap", "--map", bad, "--perturb", paths["perturb"],
            "--relations", "over:corridor", "--out", tmp_path / "o.json",
        )
        assert code == 2

    def test_explicit_relations_and_pgm(self, paths, tmp_path):
        pgm_dir = tmp_path / "pgm"
        code = run_cli(
            "build-starmap", "--map", paths["map"], "--perturb", paths["perturb"],
            "--relations", "over:corridor,distance:corridor",
            "--bbox=-300,-300,3900,300", "--rows", 6, "--cols", 10,
            "--samples", 8, "--out", tmp_path / "sm.json", "--pgm-dir", pgm_dir,
        )
        assert code == 0
        assert (pgm_dir / "over_corridor.pgm").exists()
        assert (pgm_dir / "distance_corridor.pgm").exists()


class TestField:
    def test_constant_one_constitution(self, paths, tmp_path):
        starmap = build_starmap(paths, tmp_path)
        cst = tmp_path / "one.cst"
        cst.write_text("1.0 :: constitution(X, Z).\n")
        out = tmp_path / "field.json"
        code = run_cli("field", "--constitution", cst, "--starmap", starmap,
                       "--out", out)
        assert code == 0
        doc = json.loads(out.read_text())
        assert set(doc["values"]) == {1.0}

    def test_values_in_unit_interval(self, paths, tmp_path):
        starmap = build_starmap(paths, tmp_path)
        out = tmp_path / "field.json"
        code = run_cli("field", "--constitution", paths["constitution"],
                       "--starmap", starmap, "--out", out,
                       "--pgm", tmp_path / "field.pgm")
        assert code == 0
        values = [v for v in json.loads(out.read_text())["values"] if v is not None]
        assert values and all(0.0 <= v <= 1.0 for v in values)
        assert (tmp_path / "field.pgm").read_text().startswith("P2")

    def test_missing_layer_names_atom(self, paths, tmp_path, capsys):
        starmap = build_starmap(paths, tmp_path)
        cst = tmp_path / "bad.cst"
        cst.write_text("1.0 :: constitution(X, Z) :- over(X, land).\n")
        code = run_cli("field", "--constitution", cst, "--starmap", starmap,
                       "--out", tmp_path / "f.json")
        assert code == 2
        assert "over" in capsys.readouterr().err

    def test_rerun_byte_identical(self, paths, tmp_path):
        starmap = build_starmap(paths, tmp_path)
        outs = []
        for name in ("f1.json", "f2.json"):
            out = tmp_path / name
            assert run_cli("field", "--constitution", paths["constitution"],
                           "--starmap", starmap, "--out", out) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestTrack:
    def test_tau_zero_equals_no_constitution_bitwise(self, paths, tmp_path):
        starmap = build_starmap(paths, tmp_path)
        tracks = ingest(paths, tmp_path)
        outs = {}
        for label, extra in {
            "tau0": ["--constitution", paths["constitution"], "--starmap", starmap,
                     "--tau", 0],
            "none": ["--no-constitution"],
        }.items():
            logs = tmp_path / f"{label}.jsonl"
            summary = tmp_path / f"{label}.json"
            code = run_cli("track", "--tracks", tracks, "--particles", 200,
                           "--meas-std", 40, "--seed", 9,
                           "--out-logs", logs, "--out-summary", summary, *extra)
            assert code == 0
            outs[label] = logs.read_bytes()
        assert outs["tau0"] == outs["none"]

    def test_field_and_direct_modes_run(self, paths, tmp_path):
        starmap = build_starmap(paths, tmp_path)
        tracks = ingest(paths, tmp_path)
        maes = {}
        for mode in ("field", "direct"):
            logs = tmp_path / f"{mode}.jsonl"
            summary = tmp_path / f"{mode}.json"
            code = run_cli("track", "--tracks", tracks,
                           "--constitution", paths["constitution"],
                           "--starmap", starmap, "--tau", 0.8, "--mode", mode,
                           "--particles", 200, "--meas-std", 40, "--seed", 9,
                           "--out-logs", logs, "--out-summary", summary)
            assert code == 0
            maes[mode] = json.loads(summary.read_text())["tracks"][0]["mae_vs_recorded"]
        assert maes["field"] > 0 and maes["direct"] > 0

    def test_trust_table_source(self, paths, tmp_path):
        starmap = build_starmap(paths, tmp_path)
        tracks = ingest(paths, tmp_path)
        table = tmp_path / "trust.json"
        table.write_text(json.dumps({
            "default_tau": 0.0,
            "entries": [{"vessel_type": "cargo", "waterway_bound": True,
                         "anchoring": False, "tau": 0.7}],
        }))
        summary = tmp_path / "s.json"
        code = run_cli("track", "--tracks", tracks,
                       "--constitution", paths["constitution"],
                       "--starmap", starmap, "--trust-table", table,
                       "--particles", 150, "--meas-std", 40,
                       "--out-logs", tmp_path / "l.jsonl", "--out-summary", summary)
        assert code == 0
        assert json.loads(summary.read_text())["tracks"][0]["tau"] == 0.7

    def test_missing_starmap_is_user_error(self, paths, tmp_path):
        tracks = ingest(paths, tmp_path)
        code = run_cli("track", "--tracks", tracks, "--tau", 0.5,
                       "--out-logs", tmp_path / "l.jsonl",
                       "--out-summary", tmp_path / "s.json")
        assert code == 2

    def test_jsonl_records_schema(self, paths, tmp_path):
        starmap = build_starmap(paths, tmp_path)
        tracks = ingest(paths, tmp_path)
        logs = tmp_path / "steps.jsonl"
        code = run_cli("track", "--tracks", tracks,
                       "--constitution", paths["constitution"],
                       "--starmap", starmap, "--tau", 0.5, "--particles", 150,
                       "--meas-std", 40,
                       "--out-logs", logs, "--out-summary", tmp_path / "s.json")
        assert code == 0
        lines = logs.read_text().strip().splitlines()
        assert len(lines) == 29  # 30 samples -> 29 steps
        rec = json.loads(lines[0])
        assert {"vessel_id", "t", "estimate", "covariance_trace", "n_eff",
                "norm_const", "mean_constitution_prob", "resampled"} <= set(rec)
        assert rec["mean_constitution_prob"] is not None


class TestCalibrate:
    def test_calibrates_and_writes_reports(self, paths, tmp_path):
        starmap = build_starmap(paths, tmp_path)
        tracks = ingest(paths, tmp_path)
        table_path = tmp_path / "trust.json"
        report_path = tmp_path / "report.json"
        hist_path = tmp_path / "hist.csv"
        code = run_cli("calibrate", "--tracks", tracks,
                       "--constitution", paths["constitution"],
                       "--starmap", starmap, "--tau-grid", "0,0.5,1.0",
                       "--particles", 150, "--meas-std", 40, "--seed", 2,
                       "--out-table", table_path, "--out-report", report_path,
                       "--out-hist", hist_path)
        assert code == 0
        table = json.loads(table_path.read_text())
        assert len(table["entries"]) == 1
        report = json.loads(report_path.read_text())
        assert sum(report["histogram_by_track"].values()) == 1
        assert hist_path.read_text().startswith("tau,")

    def test_empty_inputs_exit_2(self, paths, tmp_path):
        empty = tmp_path / "empty.json"
        empty.write_text(json.dumps({"origin_lonlat": [0, 0], "tracks": []}))
        code = run_cli("calibrate", "--tracks", empty,
                       "--constitution", paths["constitution"],
                       "--starmap", tmp_path / "missing.json",
                       "--out-table", tmp_path / "t.json",
                       "--out-report", tmp_path / "r.json")
        assert code == 2


class TestBench:
    def test_runs_and_reruns_identically(self, tmp_path):
        spec = tmp_path / "scenario.json"
        spec.write_text(json.dumps(world.scenario_spec(
            taus=(0.0,), n_seeds=1, steps=15, particles=120, samples=8)))
        outs = []
        for name in ("out1", "out2"):
            out_dir = tmp_path / name
            assert run_cli("bench", "--scenario", spec, "--out-dir", out_dir) == 0
            outs.append((out_dir / "report.json").read_bytes()
                        + (out_dir / "runs.csv").read_bytes())
        assert outs[0] == outs[1]
        doc = json.loads((tmp_path / "out1" / "report.json").read_text())
        assert doc["aggregate"]["0.0"]["relative_mae_median"] == 1.0

    def test_bad_scenario_exit_2(self, tmp_path):
        spec = tmp_path / "scenario.json"
        spec.write_text("{}")
        assert run_cli("bench", "--scenario", spec, "--out-dir", tmp_path / "o") == 2

    def test_scenario_missing_map_is_user_error(self, tmp_path):
        doc = world.scenario_spec(taus=(0.0,), n_seeds=1, steps=5, particles=50,
                                  samples=4)
        del doc["map"]
        spec = tmp_path / "scenario.json"
        spec.write_text(json.dumps(doc))
        assert run_cli("bench", "--scenario", spec, "--out-dir", tmp_path / "o") == 2


class TestEntryPoint:
    def test_console_script_version(self):
        out = subprocess.run(
            [sys.executable, "-m", "cstrack.cli", "--version"],
            capture_output=True, text=True,
        )
        assert out.returncode == 0
        assert "cstrack" in out.stdout

    def test_usage_error_exit_code(self):
        out = subprocess.run(
            [sys.executable, "-m", "cstrack.cli", "no-such-command"],
            capture_output=True, text=True,
        )
        assert out.returncode == 2
