import dataclasses
import os

import numpy as np
import pytest

from sepnext.checkpoint import save_model
from sepnext.cli import main
from sepnext.frontend import Waveform, write_wav
from sepnext.models import MODEL_CONFIGS, build
from sepnext.toydata import toy_model_config


@pytest.fixture
def mini(monkeypatch):
    """Register a fast throwaway model under the name 'mini'."""
    cfg = dataclasses.replace(toy_model_config(), name="mini", dims=(8, 16, 24, 32))
    monkeypatch.setitem(MODEL_CONFIGS, "mini", cfg)
    return cfg


@pytest.fixture
def mini_ckpt(mini, tmp_path):
    p = tmp_path / "mini.acnx"
    save_model(p, build("mini", seed=0))
    return str(p)


@pytest.fixture
def wav(tmp_path):
    t = np.arange(6400) / 32000.0
    x = (0.5 * np.sin(2 * np.pi * 800.0 * t)).astype(np.float32)
    p = tmp_path / "tone.wav"
    write_wav(p, Waveform(x, 32000))
    return str(p)


def test_tag_happy_path(mini_ckpt, wav, capsys):
    rc = main(["tag", "--model", "mini", "--checkpoint", mini_ckpt, "--top", "3", wav])
    assert rc == 0
    out = capsys.readouterr().out
    assert wav in out
    assert out.count("class=") == 3
    assert "p=" in out


def test_tag_with_classmap(mini_ckpt, wav, tmp_path, capsys):
    cmap = tmp_path / "classes.csv"
    rows = ["index,display_name"] + [f"{i},label{i}" for i in range(527)]
    cmap.write_text("\n".join(rows) + "\n")
    rc = main(
        [
            "tag",
            "--model",
            "mini",
            "--checkpoint",
            mini_ckpt,
            "--classmap",
            str(cmap),
            "--top",
            "1",
            wav,
        ]
    )
    assert rc == 0
    assert "label" in capsys.readouterr().out


def test_eval_happy_path(mini_ckpt, wav, tmp_path, capsys):
    manifest = tmp_path / "eval.csv"
    manifest.write_text(f"path,labels\n{wav},0;3\n{wav},3\n")
    per_class = tmp_path / "per_class.csv"
    rc = main(
        [
            "eval",
            "--model",
            "mini",
            "--checkpoint",
            mini_ckpt,
            "--manifest",
            str(manifest),
            "--out",
            str(per_class),
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "macro_ap=" in out
    assert f"per_class_csv={per_class}" in out
    assert per_class.read_text().startswith("class_index,positives,ap,auc,d_prime")


def test_eval_empty_manifest_is_usage_error(mini_ckpt, tmp_path, capsys):
    manifest = tmp_path / "empty.csv"
    manifest.write_text("path,labels\n")
    rc = main(
        ["eval", "--model", "mini", "--checkpoint", mini_ckpt, "--manifest", str(manifest)]
    )
    assert rc == 2
    assert "no files" in capsys.readouterr().err


def test_unknown_model_is_usage_error(mini_ckpt, wav, capsys):
    rc = main(["tag", "--model", "nonesuch", "--checkpoint", mini_ckpt, wav])
    assert rc == 2
    assert "unknown model" in capsys.readouterr().err


def test_missing_checkpoint_is_usage_error(mini, wav, tmp_path):
    rc = main(["tag", "--model", "mini", "--checkpoint", str(tmp_path / "no.acnx"), wav])
    assert rc == 2


def test_corrupt_checkpoint_exit_code(mini, mini_ckpt, wav, tmp_path):
    raw = bytearray(open(mini_ckpt, "rb").read())
    raw[len(raw) // 2] ^= 0xFF
    bad = tmp_path / "bad.acnx"
    bad.write_bytes(bytes(raw))
    rc = main(["tag", "--model", "mini", "--checkpoint", str(bad), wav])
    assert rc == 3


def test_mismatched_checkpoint_exit_code(mini, mini_ckpt, wav, monkeypatch, capsys):
    # same file, different architecture: strict apply must refuse
    other = dataclasses.replace(toy_model_config(), name="mini2", dims=(4, 8, 12, 16))
    monkeypatch.setitem(MODEL_CONFIGS, "mini2", other)
    rc = main(["tag", "--model", "mini2", "--checkpoint", mini_ckpt, wav])
    assert rc == 3
    assert "error" in capsys.readouterr().err


def test_undecodable_wav_exit_code(mini_ckpt, tmp_path):
    fake = tmp_path / "fake.wav"
    fake.write_text("this is not audio")
    rc = main(["tag", "--model", "mini", "--checkpoint", mini_ckpt, str(fake)])
    assert rc == 4


def test_profile_output(capsys):
    rc = main(["profile", "--model", "cnn6"])
    assert rc == 0
    out = capsys.readouterr().out
    vals = dict(l.split("=", 1) for l in out.strip().splitlines())
    assert vals["model"] == "cnn6"
    assert int(vals["params"]) == 4_838_415
    assert vals["params_millions"] == "4.838"
    assert vals["macs_giga"] == "9.933"


def test_profile_bench(mini, capsys):
    rc = main(["profile", "--model", "mini", "--bench", "--bench-batch", "2"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "bench_clips_per_sec=" in out


def test_profile_unknown_model(capsys):
    assert main(["profile", "--model", "cnn99"]) == 2


def test_train_toy_command(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("steps = 2\nbatch_size = 4\nmax_lr = 1e-3\n")
    out_dir = tmp_path / "run"
    rc = main(["train-toy", "--config", str(cfg), "--out", str(out_dir)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "steps=2" in out
    assert "train_map=" in out
    assert (out_dir / "history.csv").exists()
    assert (out_dir / "latest.acnx").exists()


def test_train_toy_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus_key = 3\n")
    rc = main(["train-toy", "--config", str(cfg), "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "bogus_key" in capsys.readouterr().err


_THREAD_KEYS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def test_threads_flag_sets_env(monkeypatch, capsys):
    for key in _THREAD_KEYS:
        monkeypatch.delenv(key, raising=False)
    rc = main(["--threads", "2", "profile", "--model", "cnn6"])
    assert rc == 0
    assert os.environ["OMP_NUM_THREADS"] == "2"
    assert os.environ["OPENBLAS_NUM_THREADS"] == "2"
    for key in _THREAD_KEYS:  # monkeypatch restores any pre-existing values
        os.environ.pop(key, None)


def test_threads_env_var(monkeypatch, capsys):
    monkeypatch.setenv("SEPNEXT_THREADS", "3")
    for key in _THREAD_KEYS:
        monkeypatch.delenv(key, raising=False)
    rc = main(["profile", "--model", "cnn6"])
    assert rc == 0
    assert os.environ["OMP_NUM_THREADS"] == "3"
    for key in _THREAD_KEYS:
        os.environ.pop(key, None)


def test_threads_invalid(capsys):
    rc = main(["--threads", "0", "profile", "--model", "cnn6"])
    assert rc == 2
