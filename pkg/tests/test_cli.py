"""Config loading, grid runs, CSV/manifest contracts, and reports."""

import csv
import json
import math

import pytest

from ghznet import cli
from ghznet.cli import CSV_COLUMNS, ConfigError, load_config


def write_config(tmp_path, body, name="run.toml"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


STATIC_BODY = """
[run]
engine = "static"
scheme = "2D"
n = 1
L_total_km = 50.0
seed = 11
out_dir = "{out}"

[imperfections]
T_coh_s = inf

[sweep]
L_km = [25.0, 50.0]
eps_a = [0.05, 0.1]
"""


def run_static_config(tmp_path, subdir="out"):
    out = tmp_path / subdir
    cfg = write_config(tmp_path, STATIC_BODY.format(out=out))
    code = cli.main(["run", cfg])
    return code, out


class TestLoadConfig:
    def test_minimal(self, tmp_path):
        cfg = load_config(write_config(tmp_path, """
[run]
engine = "laplace"
n = 2
L_total_km = 100.0
"""))
        assert cfg.engine == "laplace"
        assert cfg.scheme == "2D"
        assert cfg.n == 2
        assert cfg.sweep == {}
        assert math.isinf(cfg.imp.T_coh)

    def test_auto_n(self, tmp_path):
        cfg = load_config(write_config(tmp_path, """
[run]
engine = "static"
n = "auto"
auto_n_max = 3
L_total_km = 50.0
"""))
        assert cfg.n is None
        assert cfg.auto_n_max == 3

    def test_unit_suffixed_imperfections(self, tmp_path):
        cfg = load_config(write_config(tmp_path, """
[run]
engine = "static"
n = 1
L_total_km = 50.0

[imperfections]
T_coh_s = 0.1
L_att_km = 20.0
tau_filter_s = 0.005
"""))
        assert cfg.imp.T_coh == 0.1
        assert cfg.imp.L_att == 20.0
        assert cfg.imp.filter_window == 0.005

    def test_unknown_engine(self, tmp_path):
        with pytest.raises(ConfigError, match="line 2.*engine"):
            load_config(write_config(tmp_path, """
[run]
engine = "warp"
n = 1
L_total_km = 50.0
""".lstrip()))

    def test_unknown_imperfection_key_names_line(self, tmp_path):
        body = """
[run]
engine = "static"
n = 1
L_total_km = 50.0

[imperfections]
decoherence = 0.1
""".lstrip()
        with pytest.raises(ConfigError, match="line 7.*decoherence"):
            load_config(write_config(tmp_path, body))

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown section"):
            load_config(write_config(tmp_path, """
[run]
engine = "static"
n = 1
L_total_km = 50.0

[misc]
x = 1
"""))

    def test_empty_sweep_axis(self, tmp_path):
        with pytest.raises(ConfigError, match="non-empty"):
            load_config(write_config(tmp_path, """
[run]
engine = "static"
n = 1
L_total_km = 50.0

[sweep]
L_km = []
"""))

    def test_missing_required(self, tmp_path):
        with pytest.raises(ConfigError, match="L_total_km"):
            load_config(write_config(tmp_path, """
[run]
engine = "static"
n = 1
"""))

    def test_broken_toml_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError, match="line 1"):
            load_config(write_config(tmp_path, "[run\nbroken\n"))


class TestRunCommand:
    def test_exit_zero_and_columns(self, tmp_path):
        code, out = run_static_config(tmp_path)
        assert code == 0
        with open(out / "results.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert len(rows) == 1 + 4  # 2 L values x 2 eps_a values

    def test_grid_order_and_seeds(self, tmp_path):
        code, out = run_static_config(tmp_path)
        assert code == 0
        with open(out / "results.csv", newline="") as fh:
            recs = list(csv.DictReader(fh))
        # L is the slower axis here; seed increments with grid index
        assert [r["L_km"] for r in recs] == ["25.0", "25.0", "50.0", "50.0"]
        assert [r["eps_a"] for r in recs] == ["0.05", "0.1", "0.05", "0.1"]
        assert [r["seed"] for r in recs] == ["11", "12", "13", "14"]

    def test_reruns_byte_identical(self, tmp_path):
        _, out1 = run_static_config(tmp_path, "out1")
        _, out2 = run_static_config(tmp_path, "out2")
        assert (out1 / "results.csv").read_bytes() == \
            (out2 / "results.csv").read_bytes()

    def test_threads_do_not_change_output(self, tmp_path):
        out1 = tmp_path / "o1"
        out2 = tmp_path / "o2"
        cfg = write_config(tmp_path, STATIC_BODY.format(out=out1))
        cli.main(["run", cfg])
        cli.main(["run", cfg, "--out", str(out2), "--threads", "4"])
        assert (out1 / "results.csv").read_bytes() == \
            (out2 / "results.csv").read_bytes()

    def test_floats_roundtrip_exactly(self, tmp_path):
        _, out = run_static_config(tmp_path)
        with open(out / "results.csv", newline="") as fh:
            rec = next(iter(csv.DictReader(fh)))
        for col in ("fidelity", "q1", "distill_margin"):
            assert rec[col] == repr(float(rec[col]))

    def test_static_rows_have_no_time(self, tmp_path):
        _, out = run_static_config(tmp_path)
        with open(out / "results.csv", newline="") as fh:
            for rec in csv.DictReader(fh):
                assert rec["T_gen_s"] == ""
                assert rec["fidelity_stderr"] == ""

    def test_manifest_has_per_level_q(self, tmp_path):
        _, out = run_static_config(tmp_path)
        manifest = json.loads((out / "run_manifest.json").read_text())
        point = manifest["points"][0]
        assert point["error"] is None
        assert len(point["q_levels"]) == 1  # one nesting level
        assert 0.0 < point["q_levels"][0] <= 1.0

    def test_seed_flag_overrides_config(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, STATIC_BODY.format(out=out))
        cli.main(["run", cfg, "--seed", "99"])
        with open(out / "results.csv", newline="") as fh:
            recs = list(csv.DictReader(fh))
        assert recs[0]["seed"] == "99"

    def test_config_error_exit_2(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "[run]\nengine = 'warp'\n")
        assert cli.main(["run", cfg]) == 2
        assert "engine" in capsys.readouterr().err

    def test_partial_failure_exit_3(self, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, f"""
[run]
engine = "static"
n = 1
L_total_km = 50.0
out_dir = "{out}"

[sweep]
L_km = [50.0, -5.0]
""")
        assert cli.main(["run", cfg]) == 3
        with open(out / "results.csv", newline="") as fh:
            recs = list(csv.DictReader(fh))
        assert recs[0]["fidelity"] != ""
        assert recs[1]["fidelity"] == ""  # failed point, inputs echoed
        assert recs[1]["L_km"] == "-5.0"
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["points"][1]["error"] is not None

    def test_manifest_is_strict_json(self, tmp_path):
        _, out = run_static_config(tmp_path)
        text = (out / "run_manifest.json").read_text()
        json.loads(text)
        assert "Infinity" not in text


class TestAutoNesting:
    def fake_eval(self, table):
        def _eval(cfg, spec, seed):
            return dict(table[spec.n])
        return _eval

    def run_auto(self, tmp_path, table, monkeypatch, scheme="2D"):
        monkeypatch.setattr(cli, "_engine_eval", self.fake_eval(table))
        monkeypatch.setattr(
            cli, "qubit_project",
            lambda state: (state, 0.0),
        )
        monkeypatch.setattr(
            cli, "distillable",
            lambda state: (True, 1.0, None),
        )
        out = tmp_path / "out"
        cfg = write_config(tmp_path, f"""
[run]
engine = "static"
scheme = "{scheme}"
n = "auto"
auto_n_max = 2
L_total_km = 50.0
out_dir = "{out}"
""")
        assert cli.main(["run", cfg]) == 0
        with open(out / "results.csv", newline="") as fh:
            return next(iter(csv.DictReader(fh)))

    class FakeState:
        class space:
            num_modes = 3

    def test_picks_argmax(self, tmp_path, monkeypatch):
        st = self.FakeState()
        rec = self.run_auto(tmp_path, {
            0: {"fidelity": 0.7, "state": st},
            1: {"fidelity": 0.9, "state": st},
            2: {"fidelity": 0.8, "state": st},
        }, monkeypatch)
        assert rec["n"] == "1"

    def test_tie_breaks_to_smaller_n(self, tmp_path, monkeypatch):
        st = self.FakeState()
        rec = self.run_auto(tmp_path, {
            0: {"fidelity": 0.6, "state": st},
            1: {"fidelity": 0.9, "state": st},
            2: {"fidelity": 0.9, "state": st},
        }, monkeypatch)
        assert rec["n"] == "1"

    def test_benchmark_skips_level_zero(self, tmp_path, monkeypatch):
        st = self.FakeState()
        # n=0 absent from the table: the 1D search must not request it
        rec = self.run_auto(tmp_path, {
            1: {"fidelity": 0.5, "state": st},
            2: {"fidelity": 0.4, "state": st},
        }, monkeypatch, scheme="1D")
        assert rec["n"] == "1"


class TestReports:
    def results(self, tmp_path):
        code, out = run_static_config(tmp_path)
        assert code == 0
        return out / "results.csv"

    def test_heatmap_and_curve_render(self, tmp_path):
        path = self.results(tmp_path)
        for kind in ("heatmap", "curve"):
            assert cli.main(["report", str(path), "--kind", kind]) == 0
            svg = path.parent / f"results_{kind}.svg"
            text = svg.read_text()
            assert text.startswith("<svg")
            assert text.rstrip().endswith("</svg>")

    def test_tradeoff_renders(self, tmp_path):
        # tradeoff needs generation times, which static rows lack
        path = tmp_path / "timed.csv"
        path.write_text(
            "T_coh_s,T_gen_s,fidelity\n"
            "0.1,2.0,0.9\n0.1,4.0,0.95\n0.01,3.0,0.7\n0.01,6.0,0.8\n"
        )
        assert cli.main(["report", str(path), "--kind", "tradeoff"]) == 0
        text = (tmp_path / "timed_tradeoff.svg").read_text()
        assert text.count("T_coh_s=") == 2  # one legend entry per family

    def test_provenance_comment(self, tmp_path):
        import hashlib
        path = self.results(tmp_path)
        cli.main(["report", str(path), "--kind", "curve"])
        text = (path.parent / "results_curve.svg").read_text()
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        assert f"sha256={digest}" in text
        assert "results.csv" in text

    def test_deterministic(self, tmp_path):
        path = self.results(tmp_path)
        cli.main(["report", str(path), "--kind", "heatmap"])
        first = (path.parent / "results_heatmap.svg").read_bytes()
        cli.main(["report", str(path), "--kind", "heatmap"])
        assert (path.parent / "results_heatmap.svg").read_bytes() == first

    def test_missing_columns_listed(self, tmp_path, capsys):
        bad = tmp_path / "short.csv"
        bad.write_text("a,b\n1,2\n")
        assert cli.main(["report", str(bad), "--kind", "heatmap"]) == 2
        err = capsys.readouterr().err
        assert "missing columns" in err
        for col in ("T_coh_s", "L_km", "fidelity"):
            assert col in err

    def test_failed_rows_are_skipped(self, tmp_path):
        path = self.results(tmp_path)
        with open(path, "a", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            row = {c: "" for c in CSV_COLUMNS}
            row.update(engine="static", scheme="2D", seed="15",
                       code_version="0")
            writer.writerow([row[c] for c in CSV_COLUMNS])
        assert cli.main(["report", str(path), "--kind", "curve"]) == 0


class TestMcEngine:
    def test_row_carries_stderr_and_time(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, f"""
[run]
engine = "mc"
n = 1
L_total_km = 50.0
seed = 5
out_dir = "{out}"

[mc]
n_trajectories = 24
""")
        assert cli.main(["run", cfg]) == 0
        with open(out / "results.csv", newline="") as fh:
            rec = next(iter(csv.DictReader(fh)))
        assert float(rec["fidelity_stderr"]) > 0.0
        assert float(rec["T_gen_s"]) > 0.0
        assert float(rec["T_gen_stderr"]) > 0.0

    def test_same_seed_same_numbers(self, tmp_path):
        out1 = tmp_path / "o1"
        out2 = tmp_path / "o2"
        cfg = write_config(tmp_path, f"""
[run]
engine = "mc"
n = 1
L_total_km = 50.0
seed = 5
out_dir = "{out1}"

[mc]
n_trajectories = 16
""")
        cli.main(["run", cfg])
        cli.main(["run", cfg, "--out", str(out2)])
        assert (out1 / "results.csv").read_bytes() == \
            (out2 / "results.csv").read_bytes()


class TestLaplaceEngine:
    def test_row_has_time_no_stderr(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, f"""
[run]
engine = "laplace"
n = 1
L_total_km = 50.0
out_dir = "{out}"

[imperfections]
T_coh_s = 0.1
""")
        assert cli.main(["run", cfg]) == 0
        with open(out / "results.csv", newline="") as fh:
            rec = next(iter(csv.DictReader(fh)))
        assert float(rec["T_gen_s"]) > 0.0
        assert rec["T_gen_stderr"] == ""
        assert 0.0 < float(rec["fidelity"]) < 1.0
