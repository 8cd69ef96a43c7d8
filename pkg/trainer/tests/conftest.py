"""Shared fixtures: every volume and pair directory is produced by the
despeckling toolkit's command line, never in-process, so the tests
exercise the same boundary a user crosses."""
import shutil
import subprocess

import pytest


def _toolkit():
    exe = shutil.which("octdespeckle")
    if exe is None:
        pytest.fail("the octdespeckle command line tool must be installed "
                    "and on PATH; it generates all test data")
    return exe


def run_toolkit(*args):
    """Runs one octdespeckle command, failing loudly on any error."""
    cmd = [_toolkit()] + [str(a) for a in args]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        pytest.fail(f"{' '.join(cmd)} exited {proc.returncode}:\n"
                    f"{proc.stderr}")
    return proc.stdout


@pytest.fixture(scope="session")
def toolkit():
    return _toolkit()


@pytest.fixture(scope="session")
def tiny_pairs(tmp_path_factory):
    """Six 32x32 pairs with 5-B-scan blocks, for fast unit tests."""
    root = tmp_path_factory.mktemp("tiny")
    run_toolkit("phantom", "--preset", "layers", "--dims", "32,32,12",
                "--seed", "29", "--log-out", root / "raw_db.octv")
    run_toolkit("despeckle", "--input", root / "raw_db.octv",
                "--output", root / "clean_db.octv",
                "--search", "4,4,4", "--patch", "1,1,1")
    run_toolkit("export-pairs", "--input", root / "raw_db.octv",
                "--target", root / "clean_db.octv",
                "--out-dir", root / "pairs", "--pair-n", "2",
                "--pair-count", "6", "--seed", "17",
                "--no-crop-resize", "--no-free-angle")
    return root / "pairs"


@pytest.fixture(scope="session")
def overfit_pairs(tmp_path_factory):
    """32 augmentation-free 64x64 pairs for the overfit acceptance run."""
    root = tmp_path_factory.mktemp("overfit")
    run_toolkit("phantom", "--preset", "layers", "--dims", "64,64,24",
                "--seed", "41", "--log-out", root / "raw_db.octv")
    run_toolkit("despeckle", "--input", root / "raw_db.octv",
                "--output", root / "clean_db.octv")
    run_toolkit("export-pairs", "--input", root / "raw_db.octv",
                "--target", root / "clean_db.octv",
                "--out-dir", root / "pairs", "--pair-n", "8",
                "--pair-count", "32", "--seed", "17",
                "--no-flip", "--no-rotate",
                "--no-crop-resize", "--no-free-angle",
                "--lower-jitter-lo", "0", "--lower-jitter-hi", "0",
                "--upper-jitter-lo", "0", "--upper-jitter-hi", "0")
    return root / "pairs"


@pytest.fixture(scope="session")
def generalization_data(tmp_path_factory):
    """Augmented training pairs plus a held-out phantom of the same
    family, windowed with the held-out volume's own floor-to-tissue
    contrast, everything in the signed domain."""
    root = tmp_path_factory.mktemp("gen")
    run_toolkit("phantom", "--preset", "layers", "--dims", "64,64,48",
                "--seed", "41", "--log-out", root / "train_db.octv")
    run_toolkit("despeckle", "--input", root / "train_db.octv",
                "--output", root / "train_clean_db.octv")
    run_toolkit("export-pairs", "--input", root / "train_db.octv",
                "--target", root / "train_clean_db.octv",
                "--out-dir", root / "pairs", "--pair-n", "8",
                "--pair-count", "64", "--seed", "17",
                "--no-crop-resize", "--no-free-angle")

    run_toolkit("phantom", "--preset", "layers", "--dims", "64,64,24",
                "--seed", "43", "--log-out", root / "held_db.octv")
    run_toolkit("despeckle", "--input", root / "held_db.octv",
                "--output", root / "held_clean_db.octv")
    # A zero-jitter single-pair export records the held-out volume's
    # noise floor and bright-tissue mean as its contrast window.
    run_toolkit("export-pairs", "--input", root / "held_db.octv",
                "--target", root / "held_clean_db.octv",
                "--out-dir", root / "probe", "--pair-n", "8",
                "--pair-count", "1", "--seed", "1",
                "--no-flip", "--no-rotate",
                "--no-crop-resize", "--no-free-angle",
                "--lower-jitter-lo", "0", "--lower-jitter-hi", "0",
                "--upper-jitter-lo", "0", "--upper-jitter-hi", "0")
    import json
    probe = json.loads((root / "probe" / "manifest.json").read_text())
    lower = probe["noise_floor_db"]
    upper = probe["entries"][0]["transform"]["voi_mean_db"]
    for src, dst in (("held_db.octv", "held_in.octv"),
                     ("held_clean_db.octv", "held_ref.octv")):
        run_toolkit("convert", "--input", root / src, "--output", root / dst,
                    "--to", "signed",
                    "--lower-db", lower, "--upper-db", upper)
    return root


@pytest.fixture(scope="session")
def generalization_models(generalization_data, tmp_path_factory):
    """The toy 3D model and its 2D control, trained on the augmented
    pairs; shared by the held-out comparisons."""
    from octgan import (DiscriminatorSpec, GeneratorSpec, TrainConfig,
                        train, train_2d_baseline)
    out = tmp_path_factory.mktemp("gen_models")
    g_spec = GeneratorSpec(channels=17, scale=16)
    d_spec = DiscriminatorSpec(channels=18, scale=16)
    cfg = TrainConfig(epochs=100, seed=0)
    manifest = generalization_data / "pairs" / "manifest.json"
    train(manifest, g_spec, d_spec, cfg, out / "run3d")
    train_2d_baseline(manifest, g_spec, d_spec, cfg, out / "run2d")
    return {"root": generalization_data,
            "checkpoint_3d": out / "run3d" / "checkpoint.pt",
            "checkpoint_2d": out / "run2d" / "checkpoint.pt"}


@pytest.fixture
def report(capfd):
    """Verdict printer that bypasses capture, so runs always show it."""
    def _report(name, ok, detail):
        with capfd.disabled():
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}",
                  flush=True)
        assert ok, f"{name}: {detail}"
    return _report
