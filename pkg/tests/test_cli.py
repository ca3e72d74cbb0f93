import glob
import os

import numpy as np
import pytest

from semcom.cli import main, read_config, SCHEMA
from semcom.errors import ConfigError
from semcom.model import ModelConfig, MultiLevelCodec


TINY = """
model.t = 8
model.l = 3
model.e = 2
model.o = 4
model.h = 32
model.w = 32
model.hidden_enc = 6
model.hidden_dec = 6
model.hidden_fusion = 6
train.batch_size = 4
train.steps = {steps}
train.lr = 1e-3
"""


@pytest.fixture
def env(tmp_path, monkeypatch, small_dataset):
    monkeypatch.setenv("SEMCOM_OUTPUT_ROOT", str(tmp_path))
    manifest_path, _ = small_dataset
    return tmp_path, manifest_path


def write_cfg(tmp_path, manifest, steps=2, extra=""):
    path = tmp_path / "run.cfg"
    body = TINY.format(steps=steps) + f"data.train_manifest = {manifest}\n"
    body += f"data.eval_manifest = {manifest}\n" + extra
    path.write_text(body)
    return str(path)


def test_missing_config_file_exit_2(capsys):
    assert main(["train", "/nonexistent/run.cfg"]) == 2
    assert "config" in capsys.readouterr().err


def test_unknown_key_reports_file_and_line(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("model.t = 8\nmodel.bogus = 1\n")
    assert main(["train", str(path)]) == 2
    err = capsys.readouterr().err
    assert f"{path}:2" in err and "model.bogus" in err


def test_bad_value_type_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("model.t = eight\n")
    assert main(["train", str(path)]) == 2
    assert "model.t" in capsys.readouterr().err


def test_bad_override_exit_2(env, capsys):
    tmp_path, manifest = env
    cfg = write_cfg(tmp_path, manifest)
    assert main(["train", cfg, "--no.such.key=1"]) == 2


def test_config_defaults_and_comments(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment only\nmodel.t = 4  # trailing\n")
    cfg = read_config(str(path))
    assert cfg["model.t"] == 4
    for key, (_, default) in SCHEMA.items():
        if key != "model.t":
            assert cfg[key] == default


def test_train_zero_steps_checkpoint_equals_init(env):
    tmp_path, manifest = env
    cfg = write_cfg(tmp_path, manifest, steps=0)
    assert main(["train", cfg]) == 0
    (ckpt,) = glob.glob(str(tmp_path / "runs" / "train-*" / "model.npz"))
    loaded = MultiLevelCodec.load(ckpt)
    init = MultiLevelCodec(ModelConfig(t=8, l=3, e=2, o=4, h=32, w=32,
                                       hidden_enc=6, hidden_dec=6, hidden_fusion=6))
    for name, p in init.params().items():
        np.testing.assert_array_equal(p.data, loaded.params()[name].data)
    run_dir = os.path.dirname(ckpt)
    assert os.path.exists(os.path.join(run_dir, "config.snapshot"))
    assert os.path.exists(os.path.join(run_dir, "run_manifest.json"))


def test_override_changes_run_dir_and_model(env):
    tmp_path, manifest = env
    cfg = write_cfg(tmp_path, manifest, steps=0)
    assert main(["train", cfg]) == 0
    assert main(["train", cfg, "--model.e=3"]) == 0
    ckpts = sorted(glob.glob(str(tmp_path / "runs" / "train-*" / "model.npz")))
    assert len(ckpts) == 2
    widths = sorted(MultiLevelCodec.load(c).cfg.e for c in ckpts)
    assert widths == [2, 3]


def _train_and_eval(tmp_path, manifest, out_name, snr="10,0,20"):
    cfg = write_cfg(tmp_path, manifest, steps=1)
    assert main(["train", cfg]) == 0
    (ckpt,) = glob.glob(str(tmp_path / "runs" / "train-*" / "model.npz"))
    out = tmp_path / out_name
    assert main(["eval", "--ckpt", ckpt, "--manifest", str(manifest),
                 "--snr", snr, "--out", str(out)]) == 0
    return out / "results.csv"


def test_eval_csv_sorted_and_deterministic(env):
    tmp_path, manifest = env
    csv1 = _train_and_eval(tmp_path, manifest, "eval1")
    csv2 = _train_and_eval(tmp_path, manifest, "eval2")
    assert csv1.read_bytes() == csv2.read_bytes()
    lines = csv1.read_text().strip().splitlines()
    assert lines[0] == "system,ratio,train_snr_db,test_snr_db,psnr_db,ssim,failed"
    # three SNRs, learned + baseline rows each
    assert len(lines) == 1 + 6
    snrs = [float(l.split(",")[3]) for l in lines[1:] if l.startswith("learned")]
    assert snrs == sorted(snrs) == [0.0, 10.0, 20.0]
    assert (csv1.parent / "psnr_vs_snr.png").exists()
    assert (csv1.parent / "ssim_vs_snr.png").exists()


def test_eval_single_snr_two_rows(env):
    tmp_path, manifest = env
    csv_path = _train_and_eval(tmp_path, manifest, "eval_one", snr="10")
    lines = csv_path.read_text().strip().splitlines()
    assert len(lines) == 3
    systems = sorted(l.split(",")[0] for l in lines[1:])
    assert systems == ["jpeg_capacity", "learned"]


def test_eval_missing_checkpoint_exit_1(env, capsys):
    tmp_path, manifest = env
    out = main(["eval", "--ckpt", str(tmp_path / "nope.npz"),
                "--manifest", str(manifest), "--snr", "10", "--out", str(tmp_path / "o")])
    assert out == 1
    assert "checkpoint" in capsys.readouterr().err


def test_sweep_requires_e_list(env, capsys):
    tmp_path, manifest = env
    cfg = write_cfg(tmp_path, manifest, steps=0)
    assert main(["sweep", cfg]) == 2
    assert "eval.e_list" in capsys.readouterr().err


def test_sweep_train_missing_writes_csv(env):
    tmp_path, manifest = env
    cfg = write_cfg(tmp_path, manifest, steps=1, extra="eval.e_list = 1,2\neval.snrs = 10\n")
    assert main(["sweep", cfg, "--train-missing"]) == 0
    (csv_path,) = glob.glob(str(tmp_path / "runs" / "sweep-*" / "sweep.csv"))
    lines = open(csv_path).read().strip().splitlines()
    ratios = sorted({l.split(",")[1] for l in lines[1:] if l.startswith("learned")})
    assert len(lines) == 1 + 2 * 2  # two e points x (learned + baseline)
    assert ratios == sorted([repr(1 / 192), repr(2 / 192)])


def test_matrix_train_missing_writes_grid(env):
    tmp_path, manifest = env
    cfg = write_cfg(tmp_path, manifest, steps=1,
                    extra="eval.train_snrs = 0,10\neval.test_snrs = 0,10\n")
    assert main(["matrix", cfg, "--train-missing"]) == 0
    (csv_path,) = glob.glob(str(tmp_path / "runs" / "matrix-*" / "matrix.csv"))
    lines = open(csv_path).read().strip().splitlines()
    assert lines[0] == "train_snr_db,test_snr_db,psnr_db,ssim"
    assert len(lines) == 1 + 4


def test_baseline_command(env, small_dataset):
    tmp_path, manifest = env
    img = os.path.join(os.path.dirname(str(manifest)), "img000.png")
    out = tmp_path / "base"
    assert main(["baseline", "--image", img, "--snr", "20,0", "--e", "4",
                 "--out", str(out)]) == 0
    lines = (out / "baseline.csv").read_text().strip().splitlines()
    assert len(lines) == 3
    assert (out / "baseline_snr0.png").exists()
    assert (out / "baseline_snr20.png").exists()
