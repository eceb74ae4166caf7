import json
import shutil

import pytest

from scenesmith.cli import main
from scenesmith.config import ConfigError, load_config
from scenesmith.envi import read_band_names
from scenesmith.fixtures import make_fixture
from scenesmith.pipeline import PrerequisiteError, run
from scenesmith.scene import read_instance_list, validate_manifest


@pytest.fixture
def fx(tmp_path):
    return make_fixture(tmp_path / "fx")


def test_config_defaults_and_overrides(fx, tmp_path):
    cfg = load_config(fx.config, {"seed": 9, "out_dir": str(tmp_path / "o"), "workers": 3})
    assert cfg.seed == 9 and cfg.workers == 3 and cfg.out_dir == tmp_path / "o"
    assert cfg.block("dtm")["iterations"] == 10 and cfg.block("classify")["k"] == 12
    assert cfg.dsm == fx.dsm.resolve()


def test_config_errors_aggregated(fx):
    text = fx.config.read_text().replace("seed = 0\n", "").replace("k = 12", "k = 0").replace("dsm.hdr", "nope.hdr")
    text += "\n[dtm_extra]\nx = 1\n"
    fx.config.write_text(text)
    with pytest.raises(ConfigError) as exc:
        load_config(fx.config)
    msg = "\n".join(exc.value.problems)
    assert "seed is required" in msg and "k must be" in msg and "nope.hdr" in msg and "dtm_extra" in msg


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.toml")


def test_prerequisite_error(fx):
    with pytest.raises(PrerequisiteError, match="classify"):
        run(load_config(fx.config), "place")


def test_cli_exit_codes(fx, capsys):
    assert main(["--config", str(fx.config), "--stage", "place"]) == 3
    assert "run --stage classify first" in capsys.readouterr().err
    bad = fx.root / "bad.toml"
    bad.write_text("seed = -1\n")
    assert main(["--config", str(bad), "--stage", "all"]) == 2
    assert main(["--config", str(fx.config), "--stage", "bogus"]) == 2
    fx.dsm.with_suffix(".img").write_bytes(b"\0" * 10)
    assert main(["--config", str(fx.config), "--stage", "all"]) == 4


def test_staged_runs_and_cache(fx):
    cfg = load_config(fx.config)
    for stage in ("calibrate", "classify", "dtm", "buildings", "place", "assemble"):
        assert run(cfg, stage)["stages"][0]["status"] == "ran"
    again = run(cfg, "all")
    assert all(e["status"] == "cached" for e in again["stages"])
    cfg.params["place"]["tree_count"] = 3
    changed = run(cfg, "all")
    status = {e["stage"]: e["status"] for e in changed["stages"]}
    assert status == {"calibrate": "cached", "classify": "cached", "dtm": "cached", "buildings": "cached",
                      "place": "ran", "assemble": "ran"}
    assert run(cfg, "dtm", use_cache=False)["stages"][0]["status"] == "ran"


def test_report_counts_match_instance_lists(e2e):
    fx, report = e2e
    out = fx.root / "out"
    counts = report["counts"]
    n = {c: len(read_instance_list(out / "place" / f"{c}.txt")) for c in ("roads", "parking", "trees")}
    assert counts["place.road_cars"] == n["roads"]
    assert counts["place.parked_cars"] == n["parking"]
    assert counts["place.trees"] == n["trees"]
    assert counts["place.objects_placed"] == sum(n.values())
    assert counts["buildings.planes"] >= 3
    rr = json.loads((out / "run_report.json").read_text())
    assert {"started", "finished", "stages", "counts"} <= set(rr)


def test_bundle_contents(e2e):
    fx, _ = e2e
    a = fx.root / "out" / "assemble"
    m = validate_manifest(a / "scene.json")
    kinds = [x["kind"] for x in m["meshes"]]
    assert kinds.count("terrain") == 1 and kinds.count("building") >= 2 and kinds.count("decal") == 3
    names = read_band_names(a / "mixture.hdr")
    mat = [ln.split("\t")[1] for ln in (a / m["material_database"]["path"]).read_text().splitlines()
           if not ln.startswith("#")]
    assert names == mat[:len(names)]


def test_workers_do_not_change_output(fx, tmp_path):
    run(load_config(fx.config, {"out_dir": str(tmp_path / "w1")}), "all")
    run(load_config(fx.config, {"out_dir": str(tmp_path / "w2"), "workers": 2}), "all")
    for p in (tmp_path / "w1").rglob("*"):
        if p.is_file() and p.name != "run_report.json":
            assert p.read_bytes() == (tmp_path / "w2" / p.relative_to(tmp_path / "w1")).read_bytes(), p


def test_fixture_cli(tmp_path, capsys):
    from scenesmith.fixtures import main as fx_main
    assert fx_main([str(tmp_path / "f")]) == 0
    assert (tmp_path / "f" / "config.toml").is_file()
    shutil.rmtree(tmp_path / "f")
