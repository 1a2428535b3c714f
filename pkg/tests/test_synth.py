import numpy as np
import pytest
from scipy import stats

from mlpf_hw.events import NOISE, SIGNAL, SensorGeometry, format_stream
from mlpf_hw.synth import (Edge, NoiseConfig, SceneConfig, generate_signal, inject_noise,
                           make_dataset, merge, preset_scene, shot_noise)

G = SensorGeometry()


def test_edge_never_enters():
    scene = SceneConfig((Edge(0.0, 1.0, 1, -100.0),), duration=1.0)
    assert len(generate_signal(scene)) == 0


def test_vertical_edge_count_and_order():
    g = SensorGeometry(10, 8)
    ev = generate_signal(SceneConfig((Edge(0.0, 100.0, 1, -1.0),), duration=0.2, geometry=g))
    assert len(ev) == 10 * g.height
    assert np.all(np.diff(ev.x) >= 0)              # columns crossed in order
    assert np.all(np.diff(ev.t_us) >= 0)
    assert (ev.label == SIGNAL).all() and (ev.p == 1).all()
    # column x is crossed at (x + 1) / 100 s
    assert set(ev.t_us[ev.x == 4]) == {50_000}


@pytest.mark.parametrize("k", [1, 2, 3])
def test_events_per_crossing_linear(k):
    edges = (Edge(35.0, 150.0, -1, -1.0),)
    one = generate_signal(SceneConfig(edges, 0.5, events_per_crossing=1, spacing_us=0))
    many = generate_signal(SceneConfig(edges, 0.5, events_per_crossing=k, spacing_us=0))
    assert len(many) == k * len(one)


def test_rate_zero_is_identity():
    sig = generate_signal(preset_scene("sparse", 0.5))
    assert inject_noise(sig, NoiseConfig(0.0, 0.5)) == sig


def test_noise_count_within_three_sigma():
    n = len(shot_noise(NoiseConfig(5.0, 2.0, seed=4), G))
    mean = 5 * 346 * 260 * 2
    assert mean == 899_600
    assert abs(n - mean) <= 3 * np.sqrt(mean)


def test_noise_polarity_and_labels():
    ev = shot_noise(NoiseConfig(5.0, 1.0, seed=1), G)
    assert (ev.label == NOISE).all()
    assert abs((ev.p == 1).mean() - 0.5) < 0.01
    assert np.all(np.diff(ev.t_us) >= 0) and ev.t_us.max() < 1_000_000


def per_pixel_gaps(ev, g):
    pix = ev.y.astype(np.int64) * g.width + ev.x
    order = np.lexsort((ev.t_us, pix))
    pix, t = pix[order], ev.t_us[order]
    same = pix[1:] == pix[:-1]
    return (t[1:] - t[:-1])[same] / 1e6


def test_noise_interarrivals_exponential():
    g = SensorGeometry(20, 20)
    rate, duration = 5.0, 400.0
    ev = shot_noise(NoiseConfig(rate, duration, seed=2), g)
    gaps = per_pixel_gaps(ev, g)
    assert gaps.size > 100_000
    assert stats.kstest(gaps, stats.expon(scale=1 / rate).cdf).pvalue > 0.01


def test_determinism():
    a = make_dataset("dense", 5.0, 0.3, seed=7)
    b = make_dataset("dense", 5.0, 0.3, seed=7)
    assert format_stream(a) == format_stream(b)
    assert format_stream(make_dataset("dense", 5.0, 0.3, seed=8)) != format_stream(a)


def test_signal_preserved():
    sig = generate_signal(preset_scene("dense", 0.3))
    mixed = inject_noise(sig, NoiseConfig(5.0, 0.3, seed=1))
    kept = mixed[mixed.label == SIGNAL]
    assert kept == sig
    assert np.all(np.diff(mixed.t_us) >= 0)


def test_merge_tie_order():
    a = generate_signal(SceneConfig((Edge(0.0, 100.0, 1, -1.0),), 0.05, geometry=SensorGeometry(10, 8)))
    m = merge(a, a)
    assert len(m) == 2 * len(a) and np.all(np.diff(m.t_us) >= 0)


def test_presets():
    with pytest.raises(ValueError):
        preset_scene("fog")
    dense = generate_signal(preset_scene("dense", 0.5))
    sparse = generate_signal(preset_scene("sparse", 0.5))
    assert len(dense) > 5 * len(sparse) > 0


def test_config_validation():
    with pytest.raises(ValueError):
        Edge(speed=0)
    with pytest.raises(ValueError):
        NoiseConfig(rate=-1)
    with pytest.raises(ValueError):
        SceneConfig(duration=0)
