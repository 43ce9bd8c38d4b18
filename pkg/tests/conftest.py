import pytest

from prefender import CacheConfig, DefenseConfig, Pipeline


class NullPort:
    """Port with fixed latency and no trackers, for core-only tests."""

    def __init__(self, latency=2):
        self.latency = latency
        self.loads = []
        self.flushes = []
        self.writes = []

    def load(self, ins, addr, now):
        from prefender.memory import AccessResult, HitLevel

        self.loads.append((addr, now))
        return AccessResult(self.latency, HitLevel.L1)

    def flush(self, ins, addr, now):
        self.flushes.append(addr)

    def reg_write(self, ins):
        self.writes.append(ins)


@pytest.fixture
def cfg():
    return CacheConfig()


@pytest.fixture
def null_port():
    return NullPort()


@pytest.fixture
def bare_pipeline(cfg):
    return Pipeline(cfg, DefenseConfig.preset("none"))
