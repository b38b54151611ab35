import json
from pathlib import Path

import pytest

from viewplan import cli, pipeline
from viewplan.evaluation import parse_table
from viewplan.geometry import Viewpoint
from viewplan.pipeline import ConfigError, PipelineConfig
from viewplan.planner import Trajectory, TrajectoryEntry
from viewplan.procedural import wall_mesh
from viewplan.scene import scene_from_triangles

ROOT = Path(__file__).resolve().parents[1]
QUICK = ROOT / "configs" / "quick.json"


def quick(tmp, **over) -> PipelineConfig:
    doc = json.loads(QUICK.read_text())
    doc.update(over)
    doc["output_dir"] = str(tmp)
    return PipelineConfig.from_dict(doc)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("quick")
    cfg = quick(out)
    hist = pipeline.cmd_init_scan(cfg)
    traj = pipeline.cmd_plan(cfg)
    return out, cfg, hist, traj


# -- config ---------------------------------------------------------------------

def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"budget": 10, "bugdet": 10})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"sampler": {"base_stepp": 4}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"method": "simulated_annealing"})


def test_minimal_config_gets_defaults():
    cfg = PipelineConfig.from_dict({"scene": {"builtin": "courtyard"}, "budget": 500})
    assert cfg.budget == 500 and cfg.per_viewpoint_cost == 9.0 and cfg.initial_scan.count == 20
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg


def test_param_hash_ignores_output_location():
    a = PipelineConfig.from_dict({"output_dir": "x", "threads": 1})
    b = PipelineConfig.from_dict({"output_dir": "y", "threads": 4})
    assert a.param_hash() == b.param_hash()
    assert a.param_hash() != PipelineConfig.from_dict({"budget": 1.0}).param_hash()


# -- init-scan ------------------------------------------------------------------------

def test_empty_scene_is_carved_free(tmp_path):
    (tmp_path / "empty.obj").write_text("v 0 0 0\n")
    cfg = PipelineConfig.from_dict({
        "scene": {"mesh": str(tmp_path / "empty.obj"),
                  "config": {"roi": {"min": [-5, -5, 0], "max": [5, 5, 5]},
                             "allowed_space": {"min": [-40, -40, -1], "max": [40, 40, 40]}}},
        "budget": 100, "camera": {"eval_scale": 0.2}, "output_dir": str(tmp_path / "run")})
    res = pipeline.cmd_init_scan(cfg)
    h = res["histogram"]
    assert h["occupied"] == 0 and h["unknown"] == 0 and h["free"] > 0
    assert pipeline.cmd_init_scan(cfg) == {"skipped": True}


def test_courtyard_leaves_unknown_space(run_dir):
    out, cfg, hist, _ = run_dir
    h = hist["histogram"]
    print("courtyard ROI histogram after init-scan:", h)
    assert h["unknown"] > 0 and h["free"] > 0 and h["occupied"] > 0
    assert pipeline.cmd_init_scan(cfg) == {"skipped": True}
    meta = json.loads((out / pipeline.INIT_FILE).read_text())
    assert "param_hash" in meta


def test_changed_params_rerun_init(tmp_path):
    cfg = quick(tmp_path, camera={"raycast_scale": 0.1, "lowres_scale": 0.25, "eval_scale": 0.1})
    assert not pipeline.cmd_init_scan(cfg)["skipped"]
    cfg2 = quick(tmp_path, camera={"raycast_scale": 0.1, "lowres_scale": 0.25, "eval_scale": 0.12})
    assert not pipeline.cmd_init_scan(cfg2)["skipped"]


def test_initial_pose_in_building_is_infeasible(tmp_path):
    cfg = quick(tmp_path, initial_scan={"kind": "meander", "rows": 4, "cols": 4, "extent": [48, 48],
                                        "altitude": 5})
    with pytest.raises(pipeline.InfeasibleError):
        pipeline.cmd_init_scan(cfg)


# -- plan -----------------------------------------------------------------------

def test_plan_writes_trajectory(run_dir):
    out, cfg, _, traj = run_dir
    assert traj.budget_cost <= cfg.budget + 1e-9
    assert Trajectory.load(out / pipeline.TRAJ_FILE).dumps() == traj.dumps()
    assert traj.meta["param_hash"] == cfg.param_hash()
    assert 60 <= traj.meta["candidates"] <= 150


def test_plan_without_scan_fails(tmp_path):
    with pytest.raises(FileNotFoundError):
        pipeline.cmd_plan(quick(tmp_path))


def test_zero_budget_single_viewpoint(run_dir):
    out, cfg, _, _ = run_dir
    t = pipeline.cmd_plan(quick(out, budget=0))
    assert len(t.entries) == 1 and t.budget_cost == 0.0


def test_score_monotone_in_budget(run_dir):
    out = run_dir[0]
    scores = [pipeline.cmd_plan(quick(out, budget=b)).score for b in (0, 50, 100, 200, 300)]
    print("scores by budget:", [round(s, 1) for s in scores])
    assert scores == sorted(scores)


def test_pattern_method_through_plan(run_dir):
    out = run_dir[0]
    t = pipeline.cmd_plan(quick(out, method="circle", budget=200))
    assert t.method == "circle" and t.budget_cost <= 200 + 1e-9 and t.score > 0


# -- evaluate / compare ------------------------------------------------------------------

def test_evaluate_report_parses(run_dir):
    out, cfg, _, traj = run_dir
    pipeline.cmd_plan(cfg)
    rep = pipeline.cmd_evaluate(cfg)
    assert 0 <= rep.recall <= rep.precision <= 100
    assert rep.images == len(traj.entries) + 16
    back = parse_table((out / pipeline.TABLE_FILE).read_text())
    assert len(back) == 1 and back[0].f_score == rep.f_score
    assert pipeline.cmd_evaluate(cfg).to_dict() == rep.to_dict()


def test_full_coverage_recall_near_100():
    cfg = PipelineConfig.from_dict({"evaluation": {"include_initial": False}})
    scene = scene_from_triangles(wall_mesh(10.0, half=3.0), {"roi": {"min": [9.9, -2, -2], "max": [10.1, 2, 2]},
                                                   "allowed_space": {"min": [-5, -50, -50], "max": [20, 50, 50]}})
    traj = Trajectory([TrajectoryEntry(None, "selected", Viewpoint((0.0, 0.0, 0.0)))])
    rep, _ = pipeline.evaluate_trajectory(scene, traj, cfg, pipeline.ground_truth(scene, cfg))
    assert rep.recall > 99.0 and rep.precision > 99.0


def test_compare_one_row_per_method(tmp_path):
    cfg = quick(tmp_path, methods=["recursive_greedy", "greedy", "circle", "meander"])
    reps = pipeline.cmd_compare(cfg)
    assert [r.method for r in reps] == cfg.methods
    assert len(parse_table((tmp_path / "comparison.txt").read_text())) == 4
    assert all(r.budget_cost <= cfg.budget + 1e-9 for r in reps)


# -- iterate --------------------------------------------------------------------

def test_iterate_unknown_nonincreasing(tmp_path):
    hist = pipeline.cmd_iterate(quick(tmp_path), rounds=3)
    unknown = [h["histogram"]["unknown"] for h in hist]
    print("unknown voxels per round:", unknown)
    assert len(hist) == 4
    assert all(b <= a for a, b in zip(unknown, unknown[1:]))
    for h in hist[1:]:
        assert (tmp_path / h["trajectory"]).exists()


def test_iterate_one_round_matches_stages(tmp_path):
    cfg = quick(tmp_path / "it")
    pipeline.cmd_iterate(cfg, rounds=1)
    staged = quick(tmp_path / "st")
    pipeline.cmd_init_scan(staged)
    assert pipeline.cmd_plan(staged).dumps() == Trajectory.load(tmp_path / "it" / pipeline.TRAJ_FILE).dumps()


def test_iterate_rejects_zero_rounds(tmp_path):
    with pytest.raises(ConfigError):
        pipeline.cmd_iterate(quick(tmp_path), rounds=0)


# -- cli ------------------------------------------------------------------------

def test_cli_end_to_end(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert cli.main(["init-scan", "--config", str(QUICK), "--out", out]) == 0
    capsys.readouterr()
    assert cli.main(["plan", "--config", str(QUICK), "--out", out, "--budget", "120"]) == 0
    summary = json.loads(capsys.readouterr().out)
    t = Trajectory.load(Path(out) / pipeline.TRAJ_FILE)
    assert summary["entries"] == len(t.entries) and summary["budget_cost"] <= 120 + 1e-9
    for what in ("map", "graph", "trajectory", "ground-truth"):
        dest = tmp_path / f"{what}.ply"
        assert cli.main(["export", what, "--config", str(QUICK), "--out", out, "--dest", str(dest)]) == 0
        assert dest.read_bytes().startswith(b"ply")


def test_cli_usage_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"budgte": 3}')
    assert cli.main(["init-scan", "--config", str(bad)]) == 1
    bad.write_text("{not json")
    assert cli.main(["init-scan", "--config", str(bad)]) == 1
    assert cli.main(["fly"]) == 1
    assert cli.main(["plan", "--method", "nope", "--out", str(tmp_path)]) == 1


def test_cli_infeasible(tmp_path):
    doc = json.loads(QUICK.read_text())
    doc["initial_scan"]["altitude"] = 5
    p = tmp_path / "low.json"
    p.write_text(json.dumps(doc))
    assert cli.main(["init-scan", "--config", str(p), "--out", str(tmp_path / "r")]) == 2


def test_cli_io_errors(tmp_path):
    assert cli.main(["init-scan", "--config", str(tmp_path / "missing.json")]) == 3
    assert cli.main(["plan", "--config", str(QUICK), "--out", str(tmp_path / "nothing")]) == 3
    assert cli.main(["export", "map", "--config", str(QUICK), "--out", str(tmp_path / "nothing")]) == 3


def test_output_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("VIEWPLAN_OUT", str(tmp_path / "env"))
    (tmp_path / "empty.obj").write_text("v 0 0 0\n")
    conf = {"roi": {"min": [-5, -5, 0], "max": [5, 5, 5]},
            "allowed_space": {"min": [-20, -20, -1], "max": [20, 20, 20]}}
    cfg = PipelineConfig.from_dict({"scene": {"mesh": str(tmp_path / "empty.obj"), "config": conf},
                                    "camera": {"eval_scale": 0.1}, "output_dir": str(tmp_path / "cfg")})
    pipeline.cmd_init_scan(cfg)
    assert (tmp_path / "env" / pipeline.MAP_FILE).exists()
    assert "init-scan" in json.loads((tmp_path / "env" / "manifest.json").read_text())["stages"]
    assert not (tmp_path / "cfg").exists()
