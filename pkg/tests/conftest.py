import numpy as np
import pytest

from metroshape import instances, pipeline


@pytest.fixture(scope="session")
def pipeline_runs():
    """Full pipeline results for every bundled instance, run once."""
    runs = {}
    for name, net, shape in instances.pipeline_instances():
        cfg = pipeline.PipelineConfig(keep_history=True)
        runs[name] = pipeline.run_pipeline(net, shape, cfg)
    return runs


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
