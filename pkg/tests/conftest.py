import pytest

from mtpa_sim import (ScenarioTimeline, controller_setup, load_config, motor_params,
                      run_scenario, sim_options)


@pytest.fixture(scope="session")
def default_cfg():
    return load_config(None)


@pytest.fixture(scope="session")
def params(default_cfg):
    return motor_params(default_cfg)


@pytest.fixture(scope="session")
def scenario_runs():
    """Lazy cache of full 1.0 s scenario runs keyed by (mode, torque_source)."""
    cache = {}

    def get(mode="dcee", source="ideal"):
        key = (mode, source)
        if key not in cache:
            cfg = load_config(None)
            timeline = (ScenarioTimeline.from_config(cfg["timeline"])
                        .with_mode(mode).with_torque_source(source))
            cache[key] = run_scenario(timeline, motor_params(cfg),
                                      controller_setup(cfg), sim_options(cfg))
        return cache[key]

    return get
