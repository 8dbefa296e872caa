import json

import numpy as np
import pytest

from facerank.cli import main
from facerank.geometry import Window, ellipse_to_box, load_windows, save_windows
from facerank.ranking import load_ranked_csv


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "scene"
    assert run("gen", "--out", d, "--seed", "1") == 0
    return d


class TestTopLevel:
    def test_show_config(self, capsys):
        assert run("--show-config") == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["version"] == 1
        assert payload["lambda_grid_points"] == 101
        assert payload["geometry_by_channel"]["hair"] == "top_over_bottom"

    def test_no_command_is_usage_error(self, capsys):
        assert run() == 2

    def test_unknown_mode_is_usage_error(self, scene_dir, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run("rank", scene_dir, "--out", tmp_path / "r.csv", "--mode", "median")
        assert exc.value.code == 2


class TestGen:
    def test_writes_scene_files(self, scene_dir, capsys):
        for name in ("hair", "eye", "nose", "mouth", "beard"):
            assert (scene_dir / f"{name}.pmap").exists()
        assert (scene_dir / "gt.csv").exists()
        assert (scene_dir / "proposals.csv").exists()
        assert (scene_dir / "plant.json").exists()
        assert len(load_windows(scene_dir / "proposals.csv")) == 440

    def test_rerun_is_byte_identical(self, tmp_path):
        d = tmp_path / "scene"
        assert run("gen", "--out", d, "--seed", "2") == 0
        before = {p.name: p.read_bytes() for p in d.iterdir()}
        assert run("gen", "--out", d, "--seed", "2") == 0
        after = {p.name: p.read_bytes() for p in d.iterdir()}
        assert before == after

    def test_missing_spec_file(self, tmp_path, capsys):
        assert run("gen", "--out", tmp_path / "s", "--spec", tmp_path / "nope.json") == 1
        assert "error:" in capsys.readouterr().err

    def test_invalid_spec_exits_2(self, tmp_path, capsys):
        spec = {
            "width": 160, "height": 160,
            "layout": {
                "hair_lambda": 0.3,
                "eye_band": [0.5, 0.3],  # inverted
                "nose_band": [0.5, 0.64],
                "mouth_band": [0.68, 0.8],
                "beard_lambda": 0.16,
            },
            "faces": [{"box": [10, 10, 80, 110], "occluded": []}],
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(spec))
        assert run("gen", "--out", tmp_path / "s", "--spec", path) == 2
        assert "InvalidSpec" in capsys.readouterr().err

    def test_occlude_flag(self, tmp_path):
        d = tmp_path / "occ"
        assert run("gen", "--out", d, "--seed", "1", "--occlude", "mouth,beard") == 0
        plant = json.loads((d / "plant.json").read_text())
        assert plant["spec"]["faces"][0]["occluded"] == ["beard", "mouth"]


class TestFit:
    def test_recovers_hair_lambda(self, scene_dir, tmp_path, capsys):
        out = tmp_path / "config.json"
        assert run("fit", scene_dir, "--out", out, "--grid", "21", "--parts", "hair") == 0
        payload = json.loads(out.read_text())
        plant = json.loads((scene_dir / "plant.json").read_text())
        (cfg,) = payload["configs"]
        assert cfg["channel"] == "hair"
        assert abs(cfg["lambda"] - plant["lambda"]["hair"]) <= 0.05
        assert "alpha" in cfg and "log_posterior" in cfg

    def test_coarse_grid_still_converges(self, scene_dir, tmp_path):
        out = tmp_path / "coarse.json"
        assert run("fit", scene_dir, "--out", out, "--grid", "11", "--parts", "hair") == 0
        (cfg,) = json.loads(out.read_text())["configs"]
        plant = json.loads((scene_dir / "plant.json").read_text())
        assert abs(cfg["lambda"] - plant["lambda"]["hair"]) <= 0.1

    def test_no_scenes_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run("fit", "--out", tmp_path / "c.json")
        assert exc.value.code == 2

    def test_grid_dump(self, scene_dir, tmp_path):
        out = tmp_path / "config.json"
        assert run("fit", scene_dir, "--out", out, "--grid", "11",
                   "--parts", "hair", "--grid-dump") == 0
        dump = tmp_path / "grid_hair.csv"
        assert dump.exists()
        rows = [l for l in dump.read_text().splitlines() if not l.startswith("#")]
        assert len(rows) == 11


class TestRank:
    def test_ranked_output(self, scene_dir, tmp_path):
        out = tmp_path / "ranked.csv"
        assert run("rank", scene_dir, "--out", out) == 0
        windows, combined = load_ranked_csv(out)
        assert len(windows) == 440
        assert all(a >= b for a, b in zip(combined, combined[1:]))
        assert sorted(w.id for w in windows) == list(range(440))

    def test_parts_subset_leaves_other_columns_blank(self, scene_dir, tmp_path):
        out = tmp_path / "ranked.csv"
        assert run("rank", scene_dir, "--out", out, "--parts", "hair,eye") == 0
        first = next(
            l for l in out.read_text().splitlines() if not l.startswith("#")
        )
        fields = first.split(",")
        assert fields[7] != "" and fields[8] != ""      # hair, eye
        assert fields[9] == fields[10] == fields[11] == ""  # nose, mouth, beard

    def test_nms_shrinks_list(self, scene_dir, tmp_path):
        out = tmp_path / "ranked_nms.csv"
        assert run("rank", scene_dir, "--out", out, "--nms", "0.5") == 0
        windows, _ = load_ranked_csv(out)
        assert 0 < len(windows) < 440

    def test_empty_proposals(self, tmp_path, scene_dir):
        import shutil

        d = tmp_path / "empty_scene"
        shutil.copytree(scene_dir, d)
        (d / "proposals.csv").write_text("# x0,y0,x1,y1,score\n")
        out = tmp_path / "ranked.csv"
        assert run("rank", d, "--out", out) == 0
        windows, _ = load_ranked_csv(out)
        assert windows == []


class TestParts:
    def test_single_impulse(self, tmp_path):
        pmap = tmp_path / "m.pmap"
        grid = np.zeros((12, 12))
        grid[5, 7] = 1.0
        body = "\n".join(" ".join(f"{v:g}" for v in row) for row in grid)
        pmap.write_text(f"PMAPTXT eye 12 12\n{body}\n")
        out = tmp_path / "parts.csv"
        assert run("parts", pmap, "--out", out, "--threshold", "0.5") == 0
        rows = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert len(rows) == 1
        assert rows[0].startswith("eye,7,5,")

    def test_all_zero_map_header_only(self, tmp_path):
        pmap = tmp_path / "z.pmap"
        body = "\n".join("0 0 0 0" for _ in range(4))
        pmap.write_text(f"PMAPTXT nose 4 4\n{body}\n")
        out = tmp_path / "parts.csv"
        assert run("parts", pmap, "--out", out) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("#") and len(lines) == 1

    def test_close_impulses_one_row(self, tmp_path):
        pmap = tmp_path / "m.pmap"
        grid = np.zeros((16, 16))
        grid[8, 8] = 1.0
        grid[8, 11] = 0.9
        body = "\n".join(" ".join(f"{v:g}" for v in row) for row in grid)
        pmap.write_text(f"PMAPTXT eye 16 16\n{body}\n")
        out = tmp_path / "parts.csv"
        assert run("parts", pmap, "--out", out, "--radius", "5", "--threshold", "0.5") == 0
        rows = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert len(rows) == 1


class TestEval:
    def test_perfect_ranking_reports_ap_one(self, tmp_path):
        gt = [Window(10, 10, 60, 70, id=0), Window(100, 90, 160, 170, id=1)]
        save_windows(tmp_path / "gt.csv", gt)
        lines = ["# rank,id,x0,y0,x1,y1,combined"]
        for rank, w in enumerate(gt, 1):
            lines.append(f"{rank},{w.id},{w.x0},{w.y0},{w.x1},{w.y1},{10.0 - rank}")
        (tmp_path / "ranked.csv").write_text("\n".join(lines) + "\n")
        out = tmp_path / "report"
        assert run("eval", "--ranked", tmp_path / "ranked.csv", "--gt", tmp_path / "gt.csv",
                   "--out-dir", out, "--n-list", "1,2,4") == 0
        report = json.loads((out / "report.json").read_text())
        assert report["ap"] == 1.0
        drs = [dr for _n, dr in report["dr"]]
        assert drs == sorted(drs)
        assert report["dr"][-1][1] == 1.0
        for name in ("dr_curve.csv", "pr_curve.csv", "dr_curve.png", "pr_curve.png"):
            assert (out / name).exists()

    def test_ellipse_gt_routes_through_conversion(self, tmp_path):
        from facerank.geometry import Ellipse

        e = Ellipse(50, 50, 20, 10, 0.0)
        box = ellipse_to_box(e)
        (tmp_path / "ellipses.csv").write_text("# cx,cy,ra,rb,theta\n50,50,20,10,0\n")
        (tmp_path / "ranked.csv").write_text(
            f"# rank,id,x0,y0,x1,y1,combined\n1,0,{box.x0},{box.y0},{box.x1},{box.y1},5.0\n"
        )
        out = tmp_path / "report"
        assert run("eval", "--ranked", tmp_path / "ranked.csv",
                   "--gt", tmp_path / "ellipses.csv", "--out-dir", out, "--n-list", "1") == 0
        report = json.loads((out / "report.json").read_text())
        assert report["ap"] == 1.0

    def test_rerun_is_byte_identical(self, tmp_path):
        gt = [Window(10, 10, 60, 70, id=0)]
        save_windows(tmp_path / "gt.csv", gt)
        (tmp_path / "ranked.csv").write_text(
            "# rank,id,x0,y0,x1,y1,combined\n1,0,10,10,60,70,5.0\n"
        )
        out = tmp_path / "report"
        for _ in range(2):
            assert run("eval", "--ranked", tmp_path / "ranked.csv",
                       "--gt", tmp_path / "gt.csv", "--out-dir", out, "--n-list", "1") == 0
        first = {p.name: p.read_bytes() for p in out.iterdir()}
        assert run("eval", "--ranked", tmp_path / "ranked.csv",
                   "--gt", tmp_path / "gt.csv", "--out-dir", out, "--n-list", "1") == 0
        second = {p.name: p.read_bytes() for p in out.iterdir()}
        assert first == second


class TestTargets:
    def test_labels_and_sentinels(self, tmp_path):
        save_windows(tmp_path / "gt.csv", [Window(0, 0, 10, 10, id=0)])
        proposals = [
            Window(0, 0, 10, 10, id=0),    # identity -> face, (0,0,1,1)
            Window(50, 50, 60, 60, id=1),  # disjoint -> sentinel
            Window(0, 0, 10, 20, id=2),    # IoU exactly 0.5 -> non-face
        ]
        save_windows(tmp_path / "proposals.csv", proposals)
        out = tmp_path / "targets.csv"
        assert run("targets", "--proposals", tmp_path / "proposals.csv",
                   "--gt", tmp_path / "gt.csv", "--out", out) == 0
        rows = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert rows[0] == "0,face,0,0,1,1"
        assert rows[1] == "1,non-face,-1,-1,-1,-1"
        assert rows[2].startswith("2,non-face,")
