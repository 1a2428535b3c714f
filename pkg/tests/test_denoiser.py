import numpy as np
import pytest

from mlpf_hw.denoiser import DenoiseConfig, DenoiseSession, Decisions, denoise_stream
from mlpf_hw.events import EventArray, OrderingError, SensorGeometry
from mlpf_hw.mlpf import MlpfWeights, Threshold
from mlpf_hw.synth import Edge, SceneConfig, generate_signal, make_dataset
from mlpf_hw.tpi import CENTER, InputVector

from oracles import mlp_logit_rational

G = SensorGeometry(40, 30)


def weights(seed):
    rng = np.random.default_rng(seed)
    r = lambda *s: rng.integers(-16, 16, size=s)  # noqa: E731
    return MlpfWeights(r(98, 10), r(10), r(10), int(r(1)[0]))


def small_stream(seed=0, n=800):
    return make_dataset("dense", 40.0, 0.3, seed=seed, geometry=G)[:n]


def test_empty_stream():
    d = denoise_stream(EventArray.empty(), DenoiseConfig(weights(0), geometry=G))
    assert len(d) == 0 and list(d) == []
    assert d.to_csv() == "t_us,x,y,p,pred,logit\n"


@pytest.mark.parametrize("pol", [1, -1])
def test_lone_event_matches_oracle(pol):
    w = weights(3)
    ev = EventArray([1234], [10], [12], [pol])
    d = denoise_stream(ev, DenoiseConfig(w, geometry=G))
    x = np.zeros(98)
    x[49 + CENTER] = pol
    want = mlp_logit_rational(w.w1, w.b1, w.w2, w.b2, x) * 512
    assert d.scores[0] == int(want)
    assert d[0].predicted == ("signal" if want >= 0 else "noise")
    canonical = InputVector(np.zeros(49, np.int8), np.eye(1, 49, CENTER, dtype=np.int8)[0] * pol)
    assert np.array_equal(canonical.real(), x)


@pytest.mark.parametrize("seed", [0, 1])
def test_batch_equals_session(seed):
    ev = small_stream(seed)
    cfg = DenoiseConfig(weights(seed), Threshold(-200), geometry=G)
    batch = denoise_stream(ev, cfg)
    session = DenoiseSession(cfg)
    assert [session.process(e) for e in ev] == list(batch)


def test_determinism():
    ev = small_stream()
    cfg = DenoiseConfig(weights(1), geometry=G)
    assert denoise_stream(ev, cfg).to_csv() == denoise_stream(ev, cfg).to_csv()


def test_prefix_causality():
    ev = small_stream(2)
    cfg = DenoiseConfig(weights(2), geometry=G)
    full = denoise_stream(ev, cfg)
    for k in (1, 57, 400):
        pre = denoise_stream(ev[:k], cfg)
        assert np.array_equal(pre.scores, full.scores[:k])


def test_threshold_monotone():
    ev = small_stream(4)
    prev = None
    for t in range(-3000, 3001, 250):
        sig = denoise_stream(ev, DenoiseConfig(weights(4), Threshold(t), geometry=G)).signal
        if prev is not None:
            assert not (sig & ~prev).any()
        prev = sig


def test_errors_propagate():
    bad = EventArray([5, 3], [0, 0], [0, 0], [1, 1])
    with pytest.raises(OrderingError):
        denoise_stream(bad, DenoiseConfig(weights(0), geometry=G))


def test_csv_round_trip_columns():
    ev = small_stream(5, 50)
    d = denoise_stream(ev, DenoiseConfig(weights(5), geometry=G))
    lines = d.to_csv().splitlines()
    assert lines[0] == "t_us,x,y,p,pred,logit,label"
    assert len(lines) == 51
    t, x, y, p, pred, logit, label = lines[1].split(",")
    assert int(logit) == d.scores[0] and int(pred) == int(d.signal[0])
    no_scores = denoise_stream(ev, DenoiseConfig(weights(5), geometry=G, emit_scores=False))
    assert no_scores.to_csv().splitlines()[0] == "t_us,x,y,p,pred,label"
    assert d.kept() == ev[d.signal]


def test_decisions_length_checked():
    with pytest.raises(ValueError):
        Decisions(EventArray([1], [0], [0], [1]), np.array([True, False]))


def test_coherent_burst_beats_spatial_shuffle(dense):
    """A trained model keeps more of a moving edge than of the same events scattered."""
    g = SensorGeometry()
    burst = generate_signal(SceneConfig((Edge(0.0, 150.0, 1, 20.0),), duration=0.6,
                                        jitter_us=2000, seed=9))
    rng = np.random.default_rng(0)
    pix = rng.permutation(g.n_pixels)[:len(burst)]
    shuffled = EventArray(burst.t_us, pix % g.width, pix // g.width, burst.p)
    cfg = DenoiseConfig(dense.model(4).weights)
    coherent = denoise_stream(burst, cfg).signal.mean()
    scattered = denoise_stream(shuffled, cfg).signal.mean()
    assert coherent > 0.8 and scattered < 0.2
    assert coherent > scattered
