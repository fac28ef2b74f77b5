"""Compare the three inter-clip matchers on interrupted synthetic scenarios.

Trains a summarizer on a drift-matched scenario family, then runs the low-fps
pipeline with each matcher over a seeded suite and prints mean IDF1 and total
id switches per matcher.

    python scripts/compare_matchers.py [n_scenarios] [epochs]
"""

import sys
import time
from dataclasses import replace

import numpy as np

from cliptrack.metrics import evaluate, tracks_from_global
from cliptrack.pipeline import PipelineConfig, run
from cliptrack.scenario import Interruption, ScenarioConfig, generate
from cliptrack.summarizer import SummarizerConfig
from cliptrack.training import AugmentConfig, TrainConfig, scenario_sample_source, train


def suite_scenario(k: int) -> ScenarioConfig:
    first = 18 + (k % 3)
    second = 55 + (k % 4)
    return ScenarioConfig(
        frames=100, identities=5, embedding_dim=16,
        embedding_noise=0.2, drift_rate=0.035, box_jitter=0.5,
        fp_rate=0.10, fn_rate=0.03,
        interruptions=(
            Interruption("occlusion", first, first + 13 + (k % 5), ((k % 5),)),
            Interruption("occlusion", second, second + 15, (((k + 2) % 5),)),
        ),
        seed=10_000 + k,
    )


def main() -> int:
    n_scen = int(sys.argv[1]) if len(sys.argv) > 1 else 20
    epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 1200

    train_cfg = TrainConfig(
        learning_rate=1e-3, momentum=0.0, epochs=epochs, steps_per_epoch=4,
        videos_per_batch=3, tracks_per_video=8, seed=11,
        track_len_min=3, track_len_max=10, sample_span=10, frame_window=30,
    )
    model_cfg = SummarizerConfig(input_dim=16, model_dim=64, n_layers=3, n_heads=8)
    videos = [
        ScenarioConfig(frames=60, identities=5, embedding_dim=16, embedding_noise=0.2,
                       drift_rate=0.035, box_jitter=0.5, seed=1_000 + i)
        for i in range(6)
    ]
    print(f"training summarizer ({epochs} epochs) ...")
    t0 = time.time()
    weights, history = train(scenario_sample_source(videos, AugmentConfig(), train_cfg),
                             model_cfg, train_cfg)
    print(f"  loss {history[0]:.3f} -> {history[-1]:.3f} in {time.time() - t0:.0f}s")

    base = PipelineConfig.low_fps()
    print(f"{'matcher':20s} {'mean idf1':>10s} {'total idsw':>11s}")
    for inter in ("iou_chain", "temporal_average", "clip_tracker"):
        idf1s, idsw = [], 0
        for k in range(n_scen):
            gt, dets = generate(suite_scenario(k))
            tracks = run(dets, replace(base, inter=inter),
                         weights if inter == "clip_tracker" else None)
            rep = evaluate(gt.as_tracks(), tracks_from_global(tracks))
            idf1s.append(rep.idf1)
            idsw += rep.id_switches
        print(f"{inter:20s} {np.mean(idf1s):10.4f} {idsw:11d}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
