"""Profile one training epoch and one tiled prediction on the desk network.

Splits wall time between the forward pass, the backward pass and the
optimizer step, then runs cProfile over a few batches to show the hot
layer functions. Run: uv run scripts/profile_training.py
"""
import cProfile
import io
import pstats
import sys
import time
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import numpy as np

from canopy_pipeline import PipelineConfig
from inference import predict_map
from raster.filters import compute_chm
from synth import gen_scene
from training import focal_loss, training_data
from training.dataset import sample_train_windows
from unet import AdamState, backward, forward, init_model, opt_step

ROOT = Path(__file__).resolve().parent.parent


def main():
    config = PipelineConfig.load(ROOT / "config.yaml")
    spec = replace(config.scene, extent_m=512, n_plots=0)
    t0 = time.perf_counter()
    scene = gen_scene(spec)
    print(f"scene {spec.extent_m} m: {time.perf_counter() - t0:.2f}s")

    chm = compute_chm(scene.dsm, scene.dtm)
    labels = scene.truth
    data = training_data(scene.dtm, chm, labels)
    net, train = config.net, config.train
    params = init_model(net, seed=0)
    state = AdamState()
    rng = np.random.default_rng(0)
    windows = sample_train_windows(data.shape, (), train.tile_px, train.tiles_per_epoch, rng)

    fwd_time = bwd_time = opt_time = 0.0
    t_start = time.perf_counter()
    for start in range(0, len(windows), train.batch_size):
        batch = [data.tile(r, c, train.tile_px) for r, c in windows[start:start + train.batch_size]]
        x = np.stack([f for f, _ in batch])
        y = np.stack([lab for _, lab in batch])
        t0 = time.perf_counter()
        logits, tape = forward(params, net, x)
        fwd_time += time.perf_counter() - t0
        _, dlogits = focal_loss(logits, y, config.focal)
        t0 = time.perf_counter()
        grads = backward(params, net, tape, dlogits)
        bwd_time += time.perf_counter() - t0
        t0 = time.perf_counter()
        params, state = opt_step(params, grads, state, train.learning_rate)
        opt_time += time.perf_counter() - t0
    total = time.perf_counter() - t_start
    n_batches = -(-len(windows) // train.batch_size)
    print(f"\nepoch of {len(windows)} tiles ({n_batches} batches of {train.batch_size}) in {total:.2f}s")
    print(f"  forward:   {fwd_time:.2f}s ({fwd_time/total*100:.0f}%)")
    print(f"  backward:  {bwd_time:.2f}s ({bwd_time/total*100:.0f}%)")
    print(f"  optimizer: {opt_time:.2f}s ({opt_time/total*100:.0f}%)")
    print(f"  per-batch cost: {total/n_batches*1000:.0f}ms")

    t0 = time.perf_counter()
    predict_map(scene.dtm, chm, params, net, config.infer, threads=1)
    print(f"\npredict {spec.extent_m}x{spec.extent_m} map on one thread: {time.perf_counter() - t0:.2f}s")

    print("\n--- cProfile: 4 training batches ---")
    x = np.stack([data.tile(r, c, train.tile_px)[0] for r, c in windows[:train.batch_size]])
    y = np.stack([data.tile(r, c, train.tile_px)[1] for r, c in windows[:train.batch_size]])
    pr = cProfile.Profile()
    pr.enable()
    for _ in range(4):
        logits, tape = forward(params, net, x)
        _, dlogits = focal_loss(logits, y, config.focal)
        backward(params, net, tape, dlogits)
    pr.disable()
    s = io.StringIO()
    pstats.Stats(pr, stream=s).sort_stats('cumulative').print_stats(15)
    print(s.getvalue())


if __name__ == '__main__':
    main()
