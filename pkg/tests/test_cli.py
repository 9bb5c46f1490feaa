"""CLI workflows: train, generate, eval; reproducibility of file outputs."""

import json

import pytest

from slider_forge.cli import main


def _files_equal(a, b):
    return a.read_bytes() == b.read_bytes()


class TestTrainCommand:
    def test_writes_checkpoint_and_history(self, tiny_env, capsys):
        out = capsys.readouterr()
        assert tiny_env["brightness"].exists()
        assert (tiny_env["ckpt_dir"] / "brightness_history.tsv").exists()

    def test_rerun_is_byte_identical(self, tiny_env, tmp_path):
        rc = main(
            ["train", "--config", str(tiny_env["config_path"]), "--out-dir", str(tmp_path)]
        )
        assert rc == 0
        assert _files_equal(tmp_path / "brightness.slider", tiny_env["brightness"])
        assert _files_equal(
            tmp_path / "brightness_history.tsv",
            tiny_env["ckpt_dir"] / "brightness_history.tsv",
        )

    def test_invalid_config_names_the_key(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("schedule:\n  steepness: -1\n", encoding="utf-8")
        rc = main(["train", "--config", str(bad), "--out-dir", str(tmp_path)])
        assert rc == 1
        assert "schedule.steepness" in capsys.readouterr().err

    def test_missing_config_reported(self, tmp_path, capsys):
        rc = main(["train", "--config", str(tmp_path / "nope.yaml")])
        assert rc == 1
        assert "not found" in capsys.readouterr().err


class TestGenerateCommand:
    def test_no_sliders_gives_identical_base_and_edited(self, tiny_env, tmp_path):
        rc = main(
            [
                "generate",
                "--config", str(tiny_env["config_path"]),
                "--checkpoint", str(tiny_env["brightness"]),
                "--prompt", "neutral",
                "--seed", "3",
                "--out", str(tmp_path),
            ]
        )
        assert rc == 0
        assert _files_equal(tmp_path / "base.png", tmp_path / "edited.png")

    def test_brightness_slider_raises_mean_pixel(self, tiny_env, tmp_path):
        from slider_forge.imaging import png_bytes_to_tensor

        rc = main(
            [
                "generate",
                "--config", str(tiny_env["config_path"]),
                "--checkpoint", str(tiny_env["brightness"]),
                "--prompt", "neutral",
                "--slider", "brightness:1.5",
                "--seed", "3",
                "--out", str(tmp_path),
            ]
        )
        assert rc == 0
        base = png_bytes_to_tensor((tmp_path / "base.png").read_bytes())
        edited = png_bytes_to_tensor((tmp_path / "edited.png").read_bytes())
        assert float(edited.mean()) > float(base.mean())

    def test_slider_order_does_not_matter(self, tiny_env, tmp_path):
        common = [
            "generate",
            "--config", str(tiny_env["config_path"]),
            "--checkpoint", str(tiny_env["brightness"]),
            "--checkpoint", str(tiny_env["dimmer"]),
            "--prompt", "neutral",
            "--seed", "5",
        ]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(common + ["--slider", "brightness:1", "--slider", "dimmer:1", "--out", str(out_a)]) == 0
        assert main(common + ["--slider", "dimmer:1", "--slider", "brightness:1", "--out", str(out_b)]) == 0
        assert _files_equal(out_a / "edited.png", out_b / "edited.png")

    def test_unknown_slider_name_rejected(self, tiny_env, tmp_path, capsys):
        rc = main(
            [
                "generate",
                "--config", str(tiny_env["config_path"]),
                "--checkpoint", str(tiny_env["brightness"]),
                "--prompt", "neutral",
                "--slider", "contrast:1",
                "--out", str(tmp_path),
            ]
        )
        assert rc == 1
        assert "unknown slider" in capsys.readouterr().err

    def test_unparsable_scale_rejected(self, tiny_env, tmp_path, capsys):
        rc = main(
            [
                "generate",
                "--config", str(tiny_env["config_path"]),
                "--checkpoint", str(tiny_env["brightness"]),
                "--prompt", "neutral",
                "--slider", "brightness:soft",
                "--out", str(tmp_path),
            ]
        )
        assert rc == 1
        assert "unparsable" in capsys.readouterr().err

    def test_incompatible_checkpoint_reports_both_hashes(self, tiny_env, tmp_path, capsys):
        other = tmp_path / "other.yaml"
        other.write_text(
            tiny_env["config_path"].read_text().replace("width: 8", "width: 12"),
            encoding="utf-8",
        )
        rc = main(
            [
                "generate",
                "--config", str(other),
                "--checkpoint", str(tiny_env["brightness"]),
                "--prompt", "neutral",
                "--out", str(tmp_path),
            ]
        )
        assert rc == 1
        err = capsys.readouterr().err
        assert "checkpoint model hash" in err and "config model hash" in err


class TestEvalCommand:
    def test_writes_text_and_json_reports(self, tiny_env, tmp_path):
        rc = main(
            [
                "eval",
                "--config", str(tiny_env["config_path"]),
                "--checkpoint", str(tiny_env["brightness"]),
                "--out", str(tmp_path),
            ]
        )
        assert rc == 0
        assert (tmp_path / "report.txt").exists()
        payload = json.loads((tmp_path / "report.json").read_text())
        assert len(payload["rows"]) == 3  # alphas (-1, 0, 1)

    def test_zero_alpha_grid_gives_zero_lpips_column(self, tiny_env, tmp_path):
        zero_cfg = tmp_path / "zero.yaml"
        original = tiny_env["config_path"].read_text()
        assert "alphas:\n  - -1.0\n  - 0.0\n  - 1.0" in original
        zero_cfg.write_text(
            original.replace("alphas:\n  - -1.0\n  - 0.0\n  - 1.0", "alphas:\n  - 0.0"),
            encoding="utf-8",
        )
        rc = main(
            [
                "eval",
                "--config", str(zero_cfg),
                "--checkpoint", str(tiny_env["brightness"]),
                "--out", str(tmp_path / "rep"),
            ]
        )
        assert rc == 0
        payload = json.loads((tmp_path / "rep" / "report.json").read_text())
        assert all(row["lpips_score"] == 0.0 for row in payload["rows"])

    def test_rerun_is_byte_identical(self, tiny_env, tmp_path):
        args = [
            "eval",
            "--config", str(tiny_env["config_path"]),
            "--checkpoint", str(tiny_env["brightness"]),
        ]
        assert main(args + ["--out", str(tmp_path / "r1")]) == 0
        assert main(args + ["--out", str(tmp_path / "r2")]) == 0
        for name in ("report.txt", "report.json"):
            assert _files_equal(tmp_path / "r1" / name, tmp_path / "r2" / name)

    def test_ablation_mode_writes_four_reports(self, tiny_env, tmp_path):
        rc = main(
            [
                "eval",
                "--config", str(tiny_env["config_path"]),
                "--ablation",
                "--out", str(tmp_path),
            ]
        )
        assert rc == 0
        stems = sorted(p.name for p in tmp_path.glob("report_*.json"))
        assert stems == [
            "report_full.json",
            "report_wo_adv.json",
            "report_wo_adv_and_perp.json",
            "report_wo_perp.json",
        ]
        assert len(list(tmp_path.glob("report_*.txt"))) == 4

    def test_checkpoint_required_without_ablation(self, tiny_env, tmp_path, capsys):
        rc = main(
            ["eval", "--config", str(tiny_env["config_path"]), "--out", str(tmp_path)]
        )
        assert rc == 1
        assert "--checkpoint" in capsys.readouterr().err
