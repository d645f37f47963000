import os

import hypothesis
import numpy as np
import pytest

from mba.core import Library
from mba.scores import GameConfig, build_score_table, qos_thresholds, random_game

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=500, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def small_instance(seed, M, N, K, rho=0.9, game=None):
    """Library, normalised score table and thresholds for a random game."""
    rng = np.random.default_rng(seed)
    task_model = [int(t) for t in rng.permutation(M)[:K]]
    g = random_game(M, N, task_model, rng, game or GameConfig())
    table = build_score_table(g, task_model)
    return Library(M, N, tuple(task_model)), table, qos_thresholds(table, task_model, rho)


@pytest.fixture
def instance_factory():
    return small_instance
