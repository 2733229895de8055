import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


class ExperimentRuns:
    """Runs bundled experiments once per session, keyed by seed and overrides."""

    def __init__(self, root):
        self.root = root
        self.cache = {}

    def run(self, name, seed=None, overrides=None, tag=""):
        import json

        from gpslearn.config import bundled_configs, load_config
        from gpslearn.harness import run_experiment

        key = (name, seed, json.dumps(overrides, sort_keys=True), tag)
        if key not in self.cache:
            path = next(p for p in bundled_configs() if p.stem == name)
            extra = dict(overrides or {})
            if seed is not None:
                extra["seed"] = seed
            config = load_config(path, extra)
            out = self.root / f"{name}-{len(self.cache)}"
            status, _ = run_experiment(config, out)
            self.cache[key] = (status, out)
        return self.cache[key]


@pytest.fixture(scope="session")
def experiment_runs(tmp_path_factory):
    return ExperimentRuns(tmp_path_factory.mktemp("runs"))
