import pytest

from gfra.system import Seeds, SystemConfig, build_deployment


def small_config(**overrides) -> SystemConfig:
    base = dict(num_aps=4, num_users=10, pilot_length=8, pilot_fraction=None, fading_mode="fixed")
    base.update(overrides)
    return SystemConfig(**base)


@pytest.fixture
def small_deployment():
    return build_deployment(small_config(), Seeds())
