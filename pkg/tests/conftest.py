import numpy as np
import pytest
from hypothesis import settings

from rffguard import iqdata, radiosim
from rffguard.iqdata import Role

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ROLES = {3: Role.ROGUE, 4: Role.ROGUE, 10: Role.VALIDATION_ONLY}


def small_fleet(frames_per_device=40, raw_len=12, seed=0, **kw):
    cfg = radiosim.SimConfig(n_devices=10, frames_per_device=frames_per_device,
                             raw_frame_len=raw_len, master_seed=seed, **kw)
    fleet = radiosim.synthesize_fleet(cfg)
    for cap in fleet:
        cap.role = ROLES.get(cap.device_id, Role.GENUINE)
    return fleet


@pytest.fixture
def fleet():
    return small_fleet()


@pytest.fixture
def std_split(fleet):
    merged = [iqdata.merge_frames(c, 2) for c in fleet]
    split = iqdata.split_dataset(merged, seed=0)
    stats = iqdata.fit_standardizer(split.train.frames)
    return iqdata.standardize_split(split, stats), stats


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
