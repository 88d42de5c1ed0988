import json
import os
import shutil

import numpy as np
import pytest

from topocurrent import quadratic as qd
from topocurrent.cli import main
from topocurrent.config import ConfigError, RunConfig, apply_overrides, load_config
from topocurrent.heatmap import COLOR_SCALE, FIELD_COLUMNS, color, grid_points, render_svg
from topocurrent.lattice import GeometryError, build_lattice
from topocurrent.parallel import pmap, thread_count
from topocurrent.report import CSV_COLUMNS, RESULT_KEYS, dumps_csv, dumps_json
from topocurrent.runner import execute, run
from topocurrent.selftest import run_selftest

from conftest import CONFIGS, GOLDEN

GOLDEN_RUNS = [("hall_atomic", "hall"), ("pump_rice_mele_static", "pump"),
               ("hall_filter_invalid", "hall"), ("custom_dimer", "hall")]


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


# ------------------------------------------------------------ config
def test_every_shipped_config_validates():
    for path in sorted(CONFIGS.glob("*.json")):
        assert isinstance(load_config(path), RunConfig)


def test_overrides_parse_json_and_nest():
    data = apply_overrides({"model": {"name": "hofstadter"}},
                           ["model.Lx=12", "filter.interpolation=smooth", "geometry.offset=[1,2]"])
    assert data["model"]["Lx"] == 12
    assert data["filter"]["interpolation"] == "smooth"
    assert data["geometry"]["offset"] == [1, 2]
    with pytest.raises(ConfigError):
        apply_overrides({}, ["no_equals_sign"])
    with pytest.raises(ConfigError):
        apply_overrides({"cutoff": 8}, ["cutoff.inner=1"])


@pytest.mark.parametrize("bad", [
    {"model": {"name": "hofstadter"}, "unknown_field": 1},
    {"model": {"name": "hofstadter"}, "cutoff": -1},
    {"model": {"name": "hofstadter"}, "backend": "manybody"},
    {"model": {"name": "rice-mele-interacting"}},
    {"model": {"name": "hofstadter"}, "quantities": ["thouless_pump"]},
    {"model": {"name": "rice-mele"}, "quantities": ["hall_marker"]},
    {"model": {"name": "hofstadter"}, "filter": {"interpolation": "quintic"}},
])
def test_invalid_configs_are_rejected(tmp_path, bad):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, bad))


def test_missing_model_file(tmp_path):
    cfg = {"model": {"name": "custom-hoppings", "path": "nope.csv", "n_particles": 1,
                     "lattice": {"kind": "chain", "Lx": 2, "Ly": 1}}}
    with pytest.raises(ConfigError, match="not found"):
        load_config(_write(tmp_path, cfg))


# ------------------------------------------------------------ reports
def _regen_golden():
    """Rewrite the golden reports; run by hand after an intended output change."""
    GOLDEN.mkdir(exist_ok=True)
    for name, cmd in GOLDEN_RUNS:
        rep, _ = run(load_config(CONFIGS / f"{name}.json"), cmd)
        (GOLDEN / f"{name}.json").write_text(dumps_json(rep))
        (GOLDEN / f"{name}.csv").write_text(dumps_csv(rep))


@pytest.mark.parametrize("name, cmd", GOLDEN_RUNS)
def test_reports_match_golden(name, cmd):
    rep, _ = run(load_config(CONFIGS / f"{name}.json"), cmd)
    assert dumps_json(rep) == (GOLDEN / f"{name}.json").read_text()
    assert dumps_csv(rep) == (GOLDEN / f"{name}.csv").read_text()


def test_report_schema():
    rep, _ = run(load_config(CONFIGS / "hall_filter_invalid.json"), "hall")
    assert rep["schema"] == "topocurrent-report/1"
    assert rep["status"] == "error" and rep["exit_code"] == 1
    for r in rep["results"]:
        assert set(r) == set(RESULT_KEYS)
        assert r["error"]["code"] == "filter_invalid"
    header = dumps_csv(rep).splitlines()[0].split(",")
    assert tuple(header) == CSV_COLUMNS
    # every config field is echoed, defaults included
    assert rep["config"]["geometry"]["angles"] == [90.0, 210.0, 330.0]


def test_non_finite_floats_are_strings():
    from topocurrent.report import _clean
    text = dumps_json(_clean({"a": float("inf"), "b": float("nan"), "c": np.float64(-np.inf)}))
    assert json.loads(text) == {"a": "inf", "b": "nan", "c": "-inf"}


# ------------------------------------------------------------ CLI
def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(["hall", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["hall", "--config", str(CONFIGS / "hall_atomic.json"),
                 "--set", "cutoff=-3"]) == 2
    assert main(["hall", "--config", str(CONFIGS / "hall_atomic.json"), "--set", "bad"]) == 2
    assert main(["pump", "--config", str(CONFIGS / "hall_atomic.json")]) == 2
    assert main(["hall", "--config", str(CONFIGS / "hall_atomic.json")]) == 0
    assert (tmp_path / "out" / "hall_atomic.json").is_file()
    assert main(["hall", "--config", str(CONFIGS / "hall_filter_invalid.json")]) == 1
    assert main(["selftest", "--set", "seed=abc"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["hall"])
    assert exc.value.code == 2


def test_cli_rejects_bad_thread_count(monkeypatch):
    monkeypatch.setenv("TOPOCURRENT_THREADS", "zero")
    assert main(["hall", "--config", str(CONFIGS / "hall_atomic.json")]) == 2
    monkeypatch.setenv("TOPOCURRENT_THREADS", "0")
    with pytest.raises(ValueError):
        thread_count()
    monkeypatch.setenv("TOPOCURRENT_THREADS", "3")
    assert thread_count() == 3


def test_custom_model_path_is_relative_to_config(tmp_path):
    shutil.copy(CONFIGS / "custom_dimer.json", tmp_path)
    shutil.copy(CONFIGS / "custom_dimer.csv", tmp_path)
    cfg = load_config(tmp_path / "custom_dimer.json")
    assert execute(cfg, "hall", base=tmp_path) == 0


# ------------------------------------------------------------ heatmap
def test_grid_points_and_errors(hof12):
    lat = hof12.lattice
    pts = grid_points(lat, 4.0, 2.0)
    assert len(pts) == 36
    with pytest.raises(GeometryError):
        grid_points(lat, 6.0)
    with pytest.raises(GeometryError):
        grid_points(lat, 4.0, spacing=0.5)
    opn = build_lattice("square", 10, 10)
    with pytest.raises(GeometryError, match="interior"):
        grid_points(opn, 4.0, x=(0, 9))
    with pytest.raises(GeometryError, match="no interior"):
        grid_points(opn, 6.0)


def test_colour_scale():
    assert color(-1) == "#2166ac"
    assert color(0) == "#f7f7f7"
    assert color(1) == "#b2182b"
    assert color(5) == color(1)
    assert COLOR_SCALE[1][0] == 0.0
    svg = render_svg([np.array([0.0, 0.0]), np.array([2.0, 0.0])], [-1.0, 1.0], 2.0)
    assert svg.startswith("<svg") and "#2166ac" in svg and "#b2182b" in svg


def _heatmap_cfg(tmp_path):
    return _write(tmp_path, {
        "model": {"name": "hofstadter", "Lx": 12, "Ly": 12},
        "cutoff": 4,
        "geometry": {"grid": {"spacing": 4}},
    })


def test_heatmap_outputs(tmp_path):
    cfg = load_config(_heatmap_cfg(tmp_path))
    code = execute(cfg, "heatmap", base=tmp_path)
    field = (tmp_path / "field.csv").read_text().splitlines()
    assert tuple(field[0].split(",")) == FIELD_COLUMNS
    assert len(field) == 1 + 9
    assert (tmp_path / "heatmap.svg").read_text().startswith("<svg")
    rep = json.loads((tmp_path / "report.json").read_text())
    assert code == rep["exit_code"]


def test_reports_identical_across_thread_counts(tmp_path, monkeypatch):
    cfg = load_config(_heatmap_cfg(tmp_path), ["timing=false"])
    texts = []
    for n in ("1", "2", "8"):
        monkeypatch.setenv("TOPOCURRENT_THREADS", n)
        rep, files = run(cfg, "heatmap")
        texts.append((dumps_json(rep), files["field_csv"], files["svg"]))
    assert texts[0] == texts[1] == texts[2]


def test_pmap_keeps_order(monkeypatch):
    monkeypatch.setenv("TOPOCURRENT_THREADS", "4")
    assert pmap(lambda x: x * x, range(20)) == [x * x for x in range(20)]


# ------------------------------------------------------------ selftest
def test_selftest_catches_injected_wick_fault(monkeypatch):
    assert run_selftest(0, only=["quadratic_vs_ed"])[0].passed
    monkeypatch.setattr(qd, "_WICK_TRANSPOSE", True)
    assert not run_selftest(0, only=["quadratic_vs_ed"])[0].passed


if __name__ == "__main__" and os.environ.get("TOPOCURRENT_REGEN_GOLDEN"):
    _regen_golden()
