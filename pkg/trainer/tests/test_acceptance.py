"""Go/no-go acceptance runs for the adversarial trainer.

Each test prints one [PASS]/[FAIL] line with the measured numbers, so
a full run doubles as the release report. The training data always
comes from the despeckling toolkit's command line; the scores come
back through its metrics subcommand, so both directions of the file
boundary are exercised.
"""
import math
import time

import numpy as np
import torch

from octgan import (DiscriminatorSpec, GeneratorSpec, PairDataset,
                    PatchDiscriminator, TrainConfig, UNetGenerator,
                    infer_file, load_checkpoint, losses, train, write_volume)
from octgan.octv import SIGNED

from conftest import run_toolkit


def _metric(*args):
    out = run_toolkit("metrics", *args)
    return [float(v) for v in out.split()]


def test_1_architecture_shapes(report):
    g_spec = GeneratorSpec()
    d_spec = DiscriminatorSpec()
    with torch.device("meta"):
        generator = UNetGenerator(g_spec)
        bottleneck = {}
        generator.encoder[-1].register_forward_hook(
            lambda m, i, o: bottleneck.update(size=tuple(o.shape[-2:])))
        discriminator = PatchDiscriminator(d_spec)
        block = torch.zeros(1, 17, 1024, 1024)
        bscan = generator(block, noise=False)
        patches = discriminator(block, bscan)
        toy = {}
        for scale, extent, d_out in ((4, 256, 30),):
            tg = UNetGenerator(GeneratorSpec(scale=scale))
            td = PatchDiscriminator(DiscriminatorSpec(scale=scale))
            tx = torch.zeros(1, 17, extent, extent)
            toy[scale] = (tuple(tg(tx, noise=False).shape),
                          tuple(td(tx, tg(tx, noise=False)).shape))
    ok = (bscan.shape == (1, 1, 1024, 1024)
          and bottleneck["size"] == (32, 32)
          and patches.shape == (1, 1, 126, 126)
          and toy[4] == ((1, 1, 256, 256), (1, 1, 30, 30)))
    report("architecture shapes", ok,
           f"full scale 1024x1024x17 -> {tuple(bscan.shape[-2:])} B-scan, "
           f"bottleneck {bottleneck['size']}, patches "
           f"{tuple(patches.shape[-2:])}; scale 4 G {toy[4][0][-2:]} "
           f"D {toy[4][1][-2:]}")


def test_2_equilibrium_and_overfit(report, overfit_pairs, tmp_path):
    # Closed-form part: an indifferent discriminator scores 2 log 2.
    half = torch.full((1, 1, 6, 6), 0.5)
    target = torch.zeros(1, 1, 64, 64)
    _, d_loss = losses(target, target, half, half)
    equilibrium_err = abs(float(d_loss) - 2.0 * math.log(2.0))

    # Training part: overfit 32 pairs at 1/16 scale, stopping once the
    # discriminator holds inside the acceptance band for three epochs.
    g_spec = GeneratorSpec(channels=17, scale=16)
    d_spec = DiscriminatorSpec(channels=18, scale=16)
    cfg = TrainConfig(epochs=200, seed=0, stop_tolerance=0.4,
                      stop_patience=3)
    start = time.perf_counter()
    checkpoint = train(overfit_pairs / "manifest.json", g_spec, d_spec,
                       cfg, tmp_path / "run")
    wall = time.perf_counter() - start
    rows = checkpoint["log"]
    final_gap = abs(rows[-1]["d_loss"] - 2.0 * math.log(2.0))

    generator = load_checkpoint(tmp_path / "run" / "checkpoint.pt").generator
    dataset = PairDataset(overfit_pairs / "manifest.json", extent=64)
    scores = []
    with torch.no_grad():
        for i in range(len(dataset)):
            pv, tg = dataset[i]
            pred = generator(pv.unsqueeze(0), noise=False)[0, 0].numpy()
            gen_path = tmp_path / f"gen_{i}.octv"
            ref_path = tmp_path / f"ref_{i}.octv"
            write_volume(gen_path, pred[:, :, None], domain=SIGNED)
            write_volume(ref_path, tg[0].numpy()[:, :, None], domain=SIGNED)
            scores.append(_metric("--metric", "ssim", "--ref", ref_path,
                                  "--test", gen_path)[0])
    mean_ssim = float(np.mean(scores))

    ok = (equilibrium_err < 1e-6 and final_gap < 0.4 and mean_ssim >= 0.85
          and len(rows) <= 200 and wall < 1800.0)
    report("equilibrium and overfit", ok,
           f"2log2 error {equilibrium_err:.1e} (< 1e-6); stopped after "
           f"{len(rows)} epochs with |D loss - 2log2| {final_gap:.3f} "
           f"(< 0.4), center-B-scan SSIM {mean_ssim:.4f} (>= 0.85, min "
           f"{min(scores):.4f}) in {wall:.0f} s (< 1800)")


def test_3_volumetric_model_beats_2d_baseline(report, generalization_models,
                                              tmp_path):
    root = generalization_models["root"]
    torch.manual_seed(0)
    out3d = tmp_path / "held_out3d.octv"
    out2d = tmp_path / "held_out2d.octv"
    infer_file(load_checkpoint(generalization_models["checkpoint_3d"]),
               root / "held_in.octv", out3d, noise=False)
    infer_file(load_checkpoint(generalization_models["checkpoint_2d"]),
               root / "held_in.octv", out2d, noise=False)

    ref = root / "held_ref.octv"
    ssim_3d = _metric("--metric", "ssim", "--ref", ref, "--test", out3d)[0]
    ssim_2d = _metric("--metric", "ssim", "--ref", ref, "--test", out2d)[0]
    ssim_raw = _metric("--metric", "ssim", "--ref", ref,
                       "--test", root / "held_in.octv")[0]
    t_stat, p_value = _metric("--metric", "ssim-ttest", "--ref", ref,
                              "--test", out3d, "--test2", out2d)

    ok = ssim_3d > ssim_2d and p_value < 0.01
    report("volumetric model beats 2d baseline", ok,
           f"held-out SSIM 3d {ssim_3d:.4f} > 2d {ssim_2d:.4f} "
           f"(raw input {ssim_raw:.4f}); local-SSIM t-test t "
           f"{t_stat:.1f}, p {p_value:.2e} (< 0.01)")


def _slow_axis_hf_energy(path):
    from octgan import read_volume
    data, _, _ = read_volume(path)
    spectrum = np.fft.rfft(data.astype(np.float64), axis=2)
    cut = spectrum.shape[2] // 2
    return float(np.sum(np.abs(spectrum[:, :, cut:]) ** 2))


def test_4_slow_axis_continuity(report, generalization_models, tmp_path):
    # Sliding-window inference must not reintroduce frame-to-frame
    # flicker: the output's high-frequency slow-axis spectral energy
    # stays within twice the despeckled target's.
    root = generalization_models["root"]
    torch.manual_seed(0)
    out3d = tmp_path / "held_out3d.octv"
    out2d = tmp_path / "held_out2d.octv"
    infer_file(load_checkpoint(generalization_models["checkpoint_3d"]),
               root / "held_in.octv", out3d, noise=False)
    infer_file(load_checkpoint(generalization_models["checkpoint_2d"]),
               root / "held_in.octv", out2d, noise=False)

    target_energy = _slow_axis_hf_energy(root / "held_ref.octv")
    ratio_3d = _slow_axis_hf_energy(out3d) / target_energy
    ratio_2d = _slow_axis_hf_energy(out2d) / target_energy
    ratio_raw = _slow_axis_hf_energy(root / "held_in.octv") / target_energy

    ok = ratio_3d <= 2.0
    report("slow-axis continuity", ok,
           f"high-frequency slow-axis energy ratio vs target: 3d "
           f"{ratio_3d:.3f} (<= 2.0); 2d baseline {ratio_2d:.3f}, raw "
           f"input {ratio_raw:.3f}")
