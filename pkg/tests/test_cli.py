import numpy as np

from aibnet.cli import main
from aibnet.data import load_png, save_png


def run(*argv):
    return main(list(argv))


def test_unknown_command_exits_one(capsys):
    assert run("frobnicate") == 1
    assert "error" in capsys.readouterr().err


def test_missing_required_argument_exits_one(capsys):
    assert run("gen-data") == 1


def test_bad_config_key_exits_one(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("not_a_real_key = 3\n")
    assert run("gradcheck", "--target", "losses", "--config", str(cfg)) == 1


def test_bad_config_value_exits_one(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("base_channels = soup\n")
    assert run("gradcheck", "--target", "losses", "--config", str(cfg)) == 1


def test_gradcheck_passes_and_zero_tolerance_fails(capsys):
    assert run("gradcheck", "--target", "decoupler") == 0
    assert "pass" in capsys.readouterr().out
    assert run("gradcheck", "--target", "decoupler", "--tol", "0") == 2
    assert "FAIL" in capsys.readouterr().out


def test_gen_data_twice_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("gen-data", "--out", str(out), "--count", "3", "--image-size", "32",
                   "--length-min", "2", "--length-max", "5", "--kernel-size", "7",
                   "--seed", "11") == 0
    assert (a / "manifest.tsv").read_bytes() == (b / "manifest.tsv").read_bytes()
    names = sorted(p.name for p in (a / "train" / "blur").iterdir())
    assert len(names) == 3
    for n in names:
        assert (a / "train" / "blur" / n).read_bytes() == (b / "train" / "blur" / n).read_bytes()


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text("base_channels = 8\nsub_decoders = 1\nblocks_per_level = 1\n"
                   "enc_blocks_per_level = 1\nseed = 3\n")
    out = tmp_path / "dump"
    assert run("dump-attn", "--out", str(out), "--config", str(cfg),
               "--base-channels", "4") == 0
    att1 = np.loadtxt(out / "att1.csv", delimiter=",")
    assert att1.shape == (4, 4)  # flag overrode the config file's 8
    np.testing.assert_allclose(att1.sum(axis=1), 1.0, atol=1e-5)
    masks = sorted(out.glob("mask_*.csv"))
    assert len(masks) == 4
    support = np.loadtxt(masks[0], delimiter=",")
    assert set(np.unique(support)) <= {0.0, 1.0}
    assert (support.sum(axis=1) == 2).all()  # ceil(4/2)


def _train_tiny(tmp_path):
    data = tmp_path / "data"
    run_dir = tmp_path / "run"
    assert run("gen-data", "--out", str(data), "--count", "3", "--image-size", "32",
               "--length-min", "2", "--length-max", "4", "--kernel-size", "5",
               "--seed", "4") == 0
    common = ["--data", str(data), "--out", str(run_dir), "--base-channels", "4",
              "--blocks-per-level", "1", "--sub-decoders", "1",
              "--enc-blocks-per-level", "1", "--patch", "16", "--batch", "2",
              "--total-iters", "10", "--ckpt-every", "4", "--log-every", "2",
              "--seed", "2"]
    assert run("pretrain-encoder", *common) == 0
    assert run("train", "--stage", "1", *common) == 0
    return data, run_dir


def test_full_cli_pipeline(tmp_path, capsys):
    data, run_dir = _train_tiny(tmp_path)
    ckpt = run_dir / "stage1.ckpt"
    assert ckpt.exists()

    assert run("eval", "--checkpoint", str(ckpt), "--data", str(data),
               "--split", "test") == 0
    out = capsys.readouterr().out
    assert "mean PSNR" in out
    assert (run_dir / "metrics.csv").exists()

    blur = next((data / "test" / "blur").glob("*.png"))
    restored = tmp_path / "restored.png"
    assert run("infer", str(blur), str(restored), "--checkpoint", str(ckpt)) == 0
    assert load_png(restored).shape == load_png(blur).shape

    assert run("plot", "--run", str(run_dir)) == 0
    assert (run_dir / "loss_curves.png").exists()
    assert (run_dir / "psnr_curves.png").exists()

    dump_dir = tmp_path / "attn"
    assert run("dump-attn", "--out", str(dump_dir), "--checkpoint", str(ckpt)) == 0
    assert (dump_dir / "att1.csv").exists()
    assert (dump_dir / "alpha.csv").exists()


def test_train_without_prerequisite_exits_one(tmp_path):
    data = tmp_path / "data"
    assert run("gen-data", "--out", str(data), "--count", "2", "--image-size", "32",
               "--length-min", "2", "--length-max", "3", "--kernel-size", "5") == 0
    assert run("train", "--stage", "1", "--data", str(data), "--out", str(tmp_path / "r"),
               "--base-channels", "4", "--blocks-per-level", "1",
               "--sub-decoders", "1", "--enc-blocks-per-level", "1",
               "--patch", "16", "--batch", "2", "--total-iters", "10") == 1


def test_identity_checkpoint_infer_roundtrips_png(tmp_path):
    # a stage-0-only model keeps zero residual heads: infer must reproduce
    # the input PNG byte for byte
    data, run_dir = _train_tiny(tmp_path)
    ckpt = run_dir / "stage0.ckpt"
    blur = next((data / "test" / "blur").glob("*.png"))
    out = tmp_path / "id.png"
    assert run("infer", str(blur), str(out), "--checkpoint", str(ckpt)) == 0
    assert out.read_bytes() == blur.read_bytes()


def test_nan_abort_exits_three(tmp_path):
    data = tmp_path / "data"
    assert run("gen-data", "--out", str(data), "--count", "2", "--image-size", "32",
               "--length-min", "2", "--length-max", "3", "--kernel-size", "5") == 0
    code = run("pretrain-encoder", "--data", str(data), "--out", str(tmp_path / "r"),
               "--base-channels", "4", "--blocks-per-level", "1", "--sub-decoders", "1",
               "--enc-blocks-per-level", "1", "--patch", "16", "--batch", "2",
               "--total-iters", "40", "--lr-init", "1e18", "--lr-final", "1e17",
               "--grad-clip", "0")
    assert code == 3


def test_sweep_cli_masks_report(tmp_path):
    data = tmp_path / "data"
    assert run("gen-data", "--out", str(data), "--count", "2", "--image-size", "32",
               "--length-min", "2", "--length-max", "3", "--kernel-size", "5") == 0
    out = tmp_path / "sweep"
    assert run("sweep", "--kind", "masks", "--data", str(data), "--out", str(out),
               "--base-channels", "4", "--blocks-per-level", "1", "--sub-decoders", "1",
               "--enc-blocks-per-level", "1", "--patch", "16", "--batch", "2",
               "--total-iters", "5", "--seed", "1") == 0
    report = (out / "sweep_masks.tsv").read_text().strip().splitlines()
    assert report[0] == "row\tlabel\tpsnr_db\tdelta_db\tconfig_hash"
    assert len(report) == 7
    labels = [line.split("\t")[1] for line in report[1:]]
    assert labels == [f"n_m={n}" for n in range(6)]
    assert (out / "sweep_masks.png").exists()
