import math

import numpy as np
import pytest

from mlpf_hw.baseline import BafConfig, BafSession, baf_denoise, neighbor_dt
from mlpf_hw.events import EventArray, SensorGeometry
from mlpf_hw.synth import NoiseConfig, make_dataset, shot_noise

G = SensorGeometry(30, 20)


def test_lone_event_is_noise():
    d = baf_denoise(EventArray([100], [5], [5], [1]), BafConfig(geometry=G))
    assert d[0].predicted == "noise" and d.scores[0] == -np.inf


def test_adjacent_events_1us_apart():
    ev = EventArray([100, 101], [5, 6], [5, 5], [1, -1])
    d = baf_denoise(ev, BafConfig(1000, geometry=G))
    assert [x.predicted for x in d] == ["noise", "signal"]
    assert d.scores[1] == -1


def test_own_pixel_excluded_and_window_inclusive():
    ev = EventArray([0, 10, 1010, 1012], [5, 5, 6, 9], [5, 5, 5, 5], [1, 1, 1, 1])
    d = baf_denoise(ev, BafConfig(1000, geometry=G))
    # second event: only its own pixel fired before -> noise
    # third event: neighbor fired exactly 1000 us earlier -> signal (inclusive)
    assert d.signal.tolist() == [False, False, True, False]


def test_radius_two():
    ev = EventArray([0, 5], [5, 7], [5, 5], [1, 1])
    assert not baf_denoise(ev, BafConfig(geometry=G)).signal[1]
    assert baf_denoise(ev, BafConfig(radius=2, geometry=G)).signal[1]


def test_noise_fpr_matches_poisson_coincidence():
    g = SensorGeometry()
    noise = shot_noise(NoiseConfig(5.0, 2.0, seed=11), g)
    fpr = baf_denoise(noise, BafConfig(1000, geometry=g)).signal.mean()
    analytic = 1 - math.exp(-8 * 5 * 0.001)
    assert abs(fpr - analytic) / analytic < 0.2


@pytest.mark.parametrize("seed", [0, 3])
def test_batch_equals_session(seed):
    ev = make_dataset("dense", 50.0, 0.2, seed=seed, geometry=G)[:1500]
    cfg = BafConfig(800, geometry=G)
    s = BafSession(cfg)
    assert [s.process(e) for e in ev] == list(baf_denoise(ev, cfg))


def test_larger_window_keeps_superset():
    ev = make_dataset("dense", 50.0, 0.2, seed=1, geometry=G)
    prev = None
    for tau in (10, 100, 1000, 5000, 20000):
        sig = baf_denoise(ev, BafConfig(tau, geometry=G)).signal
        if prev is not None:
            assert not (prev & ~sig).any()
        prev = sig


def test_neighbor_dt_empty():
    assert neighbor_dt(EventArray.empty(), BafConfig(geometry=G)).size == 0


def test_config_validation():
    with pytest.raises(ValueError):
        BafConfig(0)
    with pytest.raises(ValueError):
        BafConfig(radius=0)
