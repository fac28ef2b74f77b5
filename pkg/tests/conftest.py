"""Shared fixtures: the interruption scenario suite and desk-scale trained
summarizers used by the acceptance criteria."""

from __future__ import annotations

import numpy as np
import pytest

from cliptrack.scenario import Interruption, ScenarioConfig
from cliptrack.summarizer import SummarizerConfig
from cliptrack.training import (
    AugmentConfig,
    TrainConfig,
    scenario_sample_source,
    train,
)

# One place for the desk-scale experiment protocol shared by the acceptance
# criteria: the low-fps pipeline profile (clip 6/3, buffer 10) over scenarios
# with appearance drift, long occlusions, and clutter.
N_SUITE = 50
SUITE_IDENTITIES = 5
SUITE_FRAMES = 100
SUITE_DRIFT = 0.045
SUITE_NOISE = 0.2
EMBED_DIM = 16

MODEL = SummarizerConfig(input_dim=EMBED_DIM, model_dim=64, n_layers=3, n_heads=8)
TRAIN = TrainConfig(
    learning_rate=0.05,
    momentum=0.0,
    epochs=300,
    steps_per_epoch=4,
    videos_per_batch=3,
    tracks_per_video=8,
    seed=11,
    track_len_min=2,
    track_len_max=10,
    sample_span=10,
    frame_window=30,
)


def suite_scenario(k: int) -> ScenarioConfig:
    """k-th test scenario: two occlusions longer than the directional patience,
    staggered so that in a large fraction of scenarios an occlusion covers a
    whole clip-overlap region (the IoU-chain blind spot)."""
    first = 18 + (k % 3)
    second = 55 + (k % 4)
    occlusions = (
        Interruption("occlusion", first, first + 13 + (k % 5), ((k % SUITE_IDENTITIES),)),
        Interruption("occlusion", second, second + 15, (((k + 2) % SUITE_IDENTITIES),)),
    )
    return ScenarioConfig(
        frames=SUITE_FRAMES,
        identities=SUITE_IDENTITIES,
        embedding_dim=EMBED_DIM,
        embedding_noise=SUITE_NOISE,
        drift_rate=SUITE_DRIFT,
        box_jitter=0.5,
        fp_rate=0.10,
        fn_rate=0.03,
        interruptions=occlusions,
        seed=10_000 + k,
    )


def training_scenario(i: int) -> ScenarioConfig:
    """Training family: same appearance statistics, no interruptions (tracks
    are sampled from ground truth), seeds disjoint from the test suite."""
    return ScenarioConfig(
        frames=60,
        identities=SUITE_IDENTITIES,
        embedding_dim=EMBED_DIM,
        embedding_noise=SUITE_NOISE,
        drift_rate=SUITE_DRIFT,
        box_jitter=0.5,
        seed=1_000 + i,
    )


def train_summarizer(aug: AugmentConfig):
    source = scenario_sample_source([training_scenario(i) for i in range(6)], aug, TRAIN)
    weights, history = train(source, MODEL, TRAIN)
    assert np.isfinite(history).all()
    return weights


@pytest.fixture(scope="session")
def crit7_suite():
    return [suite_scenario(k) for k in range(N_SUITE)]


@pytest.fixture(scope="session")
def weights_full_aug():
    return train_summarizer(AugmentConfig.full())


@pytest.fixture(scope="session")
def weights_neg_only():
    return train_summarizer(AugmentConfig.with_negatives())


@pytest.fixture(scope="session")
def weights_pos_only():
    return train_summarizer(AugmentConfig.positives_only())
