import os

import numpy as np
import pytest

from srim import cli, generator
from srim.image import load_image

from conftest import make_rgb, tiny_gen_config, write_images


@pytest.fixture(scope="module")
def src_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("src")
    write_images(d, [make_rgb(20 + i, 18 + 2 * i, seed=i) for i in range(6)])
    return d


@pytest.fixture(scope="module")
def cache_dir(tmp_path_factory, src_dir):
    out = tmp_path_factory.mktemp("cachebase") / "cache"
    rc = cli.main([
        "prepare-data", "--source", str(src_dir), "--out", str(out),
        "--target-size", "16", "--split-fraction", "0.7", "--seed", "1",
    ])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def ckpt_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("ck") / "model.npz"
    gp = generator.init_params(tiny_gen_config(), seed=0)
    generator.save_checkpoint(path, gp, seed=0)
    return str(path)


def tree_bytes(root):
    out = {}
    for base, _, files in os.walk(root):
        for name in files:
            p = os.path.join(base, name)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


TRAIN_FLAGS = [
    "--conv-layers", "2", "--hidden-channels", "4", "--kernel-size", "3",
    "--outer-iterations", "2", "--inner-steps", "1",
    "--pool-lower", "2", "--pool-upper", "2",
    "--batch-select", "2", "--batch-inner", "1",
    "--projection-dim", "16", "--checkpoint-every", "1",
    "--learning-rate", "1e-3", "--seed", "3",
]


class TestPrepareData:
    def test_writes_cache_and_reports(self, src_dir, tmp_path, capsys):
        out = tmp_path / "cache"
        rc = cli.main([
            "prepare-data", "--source", str(src_dir), "--out", str(out),
            "--target-size", "16", "--split-fraction", "0.7", "--seed", "1",
        ])
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "wrote 4 train / 2 test pairs" in stdout
        assert (out / "manifest.txt").exists()
        names = sorted(os.listdir(out / "hr"))
        assert len(names) == 6
        hr = load_image(out / "hr" / names[0])
        lr = load_image(out / "lr" / names[0])
        assert hr.shape == (16, 16, 3)
        assert lr.shape == (4, 4, 3)

    def test_rerun_is_byte_identical(self, src_dir, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        argv = ["prepare-data", "--source", str(src_dir), "--target-size", "16",
                "--seed", "1"]
        assert cli.main(argv + ["--out", str(a)]) == 0
        assert cli.main(argv + ["--out", str(b)]) == 0
        assert tree_bytes(a) == tree_bytes(b)

    def test_empty_dir_fails(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        rc = cli.main([
            "prepare-data", "--source", str(empty), "--out", str(tmp_path / "o"),
        ])
        assert rc == 1
        assert "no images found" in capsys.readouterr().err

    def test_invalid_target_size_fails(self, src_dir, tmp_path, capsys):
        rc = cli.main([
            "prepare-data", "--source", str(src_dir),
            "--out", str(tmp_path / "o"), "--target-size", "30",
        ])
        assert rc == 1
        assert "multiple of 4" in capsys.readouterr().err

    def test_env_var_applies_and_flag_wins(self, src_dir, tmp_path, monkeypatch):
        monkeypatch.setenv("SRIM_TARGET_SIZE", "20")
        env_out = tmp_path / "env"
        assert cli.main([
            "prepare-data", "--source", str(src_dir), "--out", str(env_out),
        ]) == 0
        name = sorted(os.listdir(env_out / "hr"))[0]
        assert load_image(env_out / "hr" / name).shape == (20, 20, 3)

        flag_out = tmp_path / "flag"
        assert cli.main([
            "prepare-data", "--source", str(src_dir), "--out", str(flag_out),
            "--target-size", "16",
        ]) == 0
        assert load_image(flag_out / "hr" / name).shape == (16, 16, 3)

    def test_config_file_applies(self, src_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("target_size = 20\n")
        out = tmp_path / "cfgout"
        assert cli.main([
            "prepare-data", "--source", str(src_dir), "--out", str(out),
            "--config", str(cfg),
        ]) == 0
        name = sorted(os.listdir(out / "hr"))[0]
        assert load_image(out / "hr" / name).shape == (20, 20, 3)


class TestTrain:
    def test_short_run_writes_artifacts(self, cache_dir, tmp_path, capsys):
        run = tmp_path / "run"
        rc = cli.main([
            "train", "--cache", str(cache_dir), "--run-dir", str(run),
        ] + TRAIN_FLAGS)
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "iter 1/2" in stdout
        assert "finished at iteration 2" in stdout
        assert (run / "checkpoint.npz").exists()
        assert (run / "loss.csv").exists()
        assert (run / "manifest.txt").exists()
        gp, _, _ = generator.load_checkpoint(run / "checkpoint.npz")
        assert gp.step == 2

    def test_zero_iterations_still_checkpoints(self, cache_dir, tmp_path):
        run = tmp_path / "run0"
        flags = list(TRAIN_FLAGS)
        flags[flags.index("--outer-iterations") + 1] = "0"
        rc = cli.main([
            "train", "--cache", str(cache_dir), "--run-dir", str(run),
        ] + flags)
        assert rc == 0
        gp, _, _ = generator.load_checkpoint(run / "checkpoint.npz")
        assert gp.step == 0

    def test_interrupt_resume_matches_straight_run(self, cache_dir, tmp_path):
        solid, split = tmp_path / "solid", tmp_path / "split"
        base = ["train", "--cache", str(cache_dir)] + TRAIN_FLAGS
        assert cli.main(base + ["--run-dir", str(solid)]) == 0
        assert cli.main(base + ["--run-dir", str(split), "--stop-after", "1"]) == 0
        assert cli.main(base + ["--run-dir", str(split), "--resume"]) == 0
        a, _, _ = generator.load_checkpoint(solid / "checkpoint.npz")
        b, _, _ = generator.load_checkpoint(split / "checkpoint.npz")
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])
        assert (solid / "loss.csv").read_bytes() == (split / "loss.csv").read_bytes()

    def test_divergence_reports_iteration(self, cache_dir, tmp_path, capsys):
        flags = list(TRAIN_FLAGS)
        flags[flags.index("--learning-rate") + 1] = "1e200"
        with np.errstate(over="ignore", invalid="ignore"):
            rc = cli.main([
                "train", "--cache", str(cache_dir),
                "--run-dir", str(tmp_path / "div"), "--optimizer", "sgd",
            ] + flags)
        assert rc == 1
        assert "training diverged at iteration" in capsys.readouterr().err

    def test_missing_cache_fails(self, tmp_path, capsys):
        rc = cli.main([
            "train", "--cache", str(tmp_path / "nocache"),
            "--run-dir", str(tmp_path / "run"),
        ] + TRAIN_FLAGS)
        assert rc == 1
        assert "prepare-data" in capsys.readouterr().err

    def test_batch_inner_exceeding_select_fails(self, cache_dir, tmp_path, capsys):
        rc = cli.main([
            "train", "--cache", str(cache_dir), "--run-dir", str(tmp_path / "r"),
            "--batch-select", "2", "--batch-inner", "4",
        ])
        assert rc == 1
        assert "exceeds" in capsys.readouterr().err

    def test_bad_threads_fails(self, cache_dir, tmp_path, capsys):
        rc = cli.main([
            "train", "--cache", str(cache_dir), "--run-dir", str(tmp_path / "r"),
            "--threads", "0",
        ] + TRAIN_FLAGS)
        assert rc == 1
        assert "--threads" in capsys.readouterr().err


class TestSuperResolve:
    def test_upscales_and_preserves_basenames(self, ckpt_path, tmp_path, capsys):
        inputs = tmp_path / "in"
        inputs.mkdir()
        write_images(inputs, [make_rgb(4, 4, seed=31), make_rgb(4, 6, seed=32)],
                     prefix="photo")
        out = tmp_path / "out"
        rc = cli.main([
            "super-resolve", "--checkpoint", ckpt_path, "--out", str(out),
            str(inputs / "photo_00.png"), str(inputs / "photo_01.png"),
        ])
        assert rc == 0
        assert sorted(os.listdir(out)) == ["photo_00.png", "photo_01.png"]
        assert load_image(out / "photo_00.png").shape == (16, 16, 3)
        assert load_image(out / "photo_01.png").shape == (16, 24, 3)
        assert "photo_00.png" in capsys.readouterr().out

    def test_rerun_is_byte_identical(self, ckpt_path, tmp_path):
        inputs = tmp_path / "in"
        inputs.mkdir()
        write_images(inputs, [make_rgb(4, 4, seed=33)])
        a, b = tmp_path / "a", tmp_path / "b"
        argv = ["super-resolve", "--checkpoint", ckpt_path,
                str(inputs / "img_00.png"), "--seed", "9"]
        assert cli.main(argv + ["--out", str(a)]) == 0
        assert cli.main(argv + ["--out", str(b)]) == 0
        assert tree_bytes(a) == tree_bytes(b)

    def test_seed_changes_output(self, ckpt_path, tmp_path):
        inputs = tmp_path / "in"
        inputs.mkdir()
        write_images(inputs, [make_rgb(4, 4, seed=34)])
        a, b = tmp_path / "a", tmp_path / "b"
        base = ["super-resolve", "--checkpoint", ckpt_path,
                str(inputs / "img_00.png")]
        assert cli.main(base + ["--out", str(a), "--seed", "1"]) == 0
        assert cli.main(base + ["--out", str(b), "--seed", "2"]) == 0
        assert not np.array_equal(
            load_image(a / "img_00.png"), load_image(b / "img_00.png")
        )

    def test_missing_checkpoint_fails(self, tmp_path, capsys):
        img = tmp_path / "x.png"
        write_images(tmp_path, [make_rgb(4, 4)], prefix="x")
        rc = cli.main([
            "super-resolve", "--checkpoint", str(tmp_path / "none.npz"),
            "--out", str(tmp_path / "o"), str(tmp_path / "x_00.png"),
        ])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestSampleMulti:
    def test_count_and_grid(self, ckpt_path, tmp_path):
        write_images(tmp_path, [make_rgb(4, 4, seed=35)])
        out = tmp_path / "samples"
        rc = cli.main([
            "sample-multi", "--checkpoint", ckpt_path,
            "--input", str(tmp_path / "img_00.png"), "--out", str(out),
            "--count", "3", "--seed", "4",
        ])
        assert rc == 0
        files = sorted(os.listdir(out))
        assert files == ["grid.png", "sample_00.png", "sample_01.png",
                         "sample_02.png"]
        grid = load_image(out / "grid.png")
        s0 = load_image(out / "sample_00.png")
        assert grid.shape == (16, 48, 3)
        np.testing.assert_array_equal(grid[:, :16], s0)
        # samples differ across indices
        s1 = load_image(out / "sample_01.png")
        assert not np.array_equal(s0, s1)

    def test_count_one_grid_equals_sample(self, ckpt_path, tmp_path):
        write_images(tmp_path, [make_rgb(4, 4, seed=36)])
        out = tmp_path / "one"
        rc = cli.main([
            "sample-multi", "--checkpoint", ckpt_path,
            "--input", str(tmp_path / "img_00.png"), "--out", str(out),
            "--count", "1",
        ])
        assert rc == 0
        np.testing.assert_array_equal(
            load_image(out / "grid.png"), load_image(out / "sample_00.png")
        )

    def test_zero_count_fails(self, ckpt_path, tmp_path, capsys):
        write_images(tmp_path, [make_rgb(4, 4)])
        rc = cli.main([
            "sample-multi", "--checkpoint", ckpt_path,
            "--input", str(tmp_path / "img_00.png"),
            "--out", str(tmp_path / "o"), "--count", "0",
        ])
        assert rc == 1
        assert "--count" in capsys.readouterr().err


class TestEvaluate:
    def test_writes_report(self, ckpt_path, cache_dir, tmp_path, capsys):
        out = tmp_path / "eval.csv"
        rc = cli.main([
            "evaluate", "--checkpoint", ckpt_path, "--cache", str(cache_dir),
            "--out", str(out), "--seed", "2",
        ])
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "srim: mean PSNR" in stdout
        assert "bicubic: mean PSNR" in stdout
        lines = out.read_text().strip().split("\n")
        # header + 2 methods x 2 test images + 2 mean rows
        assert len(lines) == 1 + 2 * 2 + 2
        assert lines[0] == "image,method,psnr_db,ssim"

    def test_train_split_scores_more_images(self, ckpt_path, cache_dir, tmp_path):
        out = tmp_path / "eval_train.csv"
        rc = cli.main([
            "evaluate", "--checkpoint", ckpt_path, "--cache", str(cache_dir),
            "--split", "train", "--out", str(out),
        ])
        assert rc == 0
        assert len(out.read_text().strip().split("\n")) == 1 + 2 * 4 + 2

    def test_missing_cache_fails(self, ckpt_path, tmp_path, capsys):
        rc = cli.main([
            "evaluate", "--checkpoint", ckpt_path,
            "--cache", str(tmp_path / "none"), "--out", str(tmp_path / "e.csv"),
        ])
        assert rc == 1
        assert "error:" in capsys.readouterr().err
