import math

import numpy as np
import pytest
from scipy import stats

from photonloc import oracle
from photonloc.sampler import (
    BINARY_DTYPE,
    EnvelopeError,
    EventBatch,
    SamplerConfig,
    apply_loss,
    lose_photons,
    sample_events,
    sample_unentangled,
)
from photonloc.spectral import FrequencyAmplitude, TransverseAmplitude, density_sigmas
from photonloc.state import StateSpec


def test_config_validation():
    with pytest.raises(ValueError, match="method"):
        SamplerConfig(method="gibbs")
    with pytest.raises(ValueError):
        SamplerConfig(rejection_envelope_inflation=0.9)
    with pytest.raises(ValueError):
        SamplerConfig(max_rejection_iters=999)


@pytest.mark.parametrize("method", ["exact_mixture", "rejection"])
def test_determinism_and_worker_independence(psi, scene, method):
    spec = StateSpec.partial(2, psi, 2.0)
    a = sample_events(spec, scene, SamplerConfig(seed=7, method=method, block_size=1000), 5000)
    b = sample_events(spec, scene, SamplerConfig(seed=7, method=method, block_size=1000), 5000)
    c = sample_events(spec, scene, SamplerConfig(seed=7, method=method, block_size=1000, workers=4), 5000)
    d = sample_events(spec, scene, SamplerConfig(seed=8, method=method, block_size=1000), 5000)
    assert a.equals(b) and a.equals(c)
    assert not a.equals(d)


def test_prefix_stability(psi, scene):
    spec = StateSpec.maximal(3, psi)
    cfg = SamplerConfig(seed=3, block_size=256)
    short = sample_events(spec, scene, cfg, 512)
    long = sample_events(spec, scene, cfg, 2048)
    np.testing.assert_array_equal(short.arrivals, long.arrivals[:512])


def test_maximal_pair_average_width(psi, scene):
    ev = sample_events(StateSpec.maximal(2, psi), scene, SamplerConfig(seed=11), 100_000)
    std = ev.arrivals.mean(axis=1).std(axis=0, ddof=1)
    np.testing.assert_allclose(std, density_sigmas(psi) / 2, rtol=0.02)


def test_single_photon_ks(psi, scene):
    ev = sample_events(StateSpec.maximal(1, psi), scene, SamplerConfig(seed=5), 50_000)
    sig = density_sigmas(psi)
    for ax in range(3):
        z = (ev.arrivals[:, 0, ax] - scene.origin[ax]) / sig[ax]
        d = stats.kstest(z, "norm").statistic
        assert d < 1.63 / math.sqrt(len(z))  # 1% critical value


def _moments(ev):
    x = ev.arrivals.reshape(len(ev), -1)
    return x.mean(axis=0), x.var(axis=0, ddof=1), x


def test_mixture_and_rejection_agree(psi, scene):
    spec = StateSpec.partial(2, psi, 2.0)
    n = 100_000
    m1, v1, x1 = _moments(sample_events(spec, scene, SamplerConfig(seed=1), n))
    m2, v2, x2 = _moments(sample_events(spec, scene, SamplerConfig(seed=2, method="rejection"), n))
    se_mean = np.sqrt(v1 / n + v2 / n)
    assert np.all(np.abs(m1 - m2) <= 3 * se_mean)
    k1 = ((x1 - m1) ** 4).mean(axis=0)
    k2 = ((x2 - m2) ** 4).mean(axis=0)
    se_var = np.sqrt((k1 - v1**2) / n + (k2 - v2**2) / n)
    assert np.all(np.abs(v1 - v2) <= 3 * se_var)


def test_rejection_handles_off_center_difference_amplitudes(psi, scene):
    sig_w, sig_k = psi.freq.sigma_omega, psi.trans.sigma_k[0]
    spec = StateSpec(2, psi, FrequencyAmplitude(0.7 * sig_w, 0.5 * sig_w),
                     TransverseAmplitude((0.4 * sig_k, 0.0), (0.5 * sig_k, 0.5 * sig_k)))
    grid = oracle.pair_grid(spec)
    n = 100_000
    ev = sample_events(spec, scene, SamplerConfig(seed=4, method="rejection"), n)
    avg = ev.arrivals.mean(axis=1)
    c1 = ev.arrivals[:, 0]
    for ax in range(3):
        for x, target in ((avg[:, ax], grid.average_variance(ax)), (c1[:, ax], grid.photon_variance(ax))):
            v = x.var(ddof=1)
            se = v * math.sqrt(2 / n) * 1.5  # mild kurtosis allowance
            assert abs(v - target) <= 3 * se


def test_envelope_failure_names_inflation(psi, scene):
    spec = StateSpec.partial(4, psi, 2.0)
    cfg = SamplerConfig(seed=0, method="rejection", rejection_envelope_inflation=12.0)
    with pytest.raises(EnvelopeError, match="rejection_envelope_inflation"):
        sample_events(spec, scene, cfg, 100)


def test_unentangled_independent(psi, scene):
    ev = sample_unentangled(psi, scene, 2, SamplerConfig(seed=9), 50_000)
    r = np.corrcoef(ev.arrivals[:, 0, 0], ev.arrivals[:, 1, 0])[0, 1]
    assert abs(r) < 4 / math.sqrt(50_000)


@pytest.mark.parametrize("n,beta", [(1, None), (2, None), (3, None), (4, None), (2, 2.0), (3, 0.5)])
def test_average_is_unbiased(psi, scene, n, beta):
    spec = StateSpec.maximal(n, psi) if beta is None else StateSpec.partial(n, psi, beta)
    ev = sample_events(spec, scene, SamplerConfig(seed=n), 40_000)
    avg = ev.arrivals.mean(axis=1)
    se = avg.std(axis=0, ddof=1) / math.sqrt(len(avg))
    assert np.all(np.abs(avg.mean(axis=0) - scene.origin) <= 3 * se)


def test_exchangeability(psi, scene):
    ev = sample_events(StateSpec.partial(2, psi, 2.0), scene, SamplerConfig(seed=21), 40_000)
    for ax in range(3):
        p = stats.ks_2samp(ev.arrivals[:20_000, 0, ax], ev.arrivals[20_000:, 1, ax]).pvalue
        assert p > 0.01


# --- loss ---


def test_zero_loss_is_identity(psi, scene):
    ev = sample_events(StateSpec.maximal(2, psi), scene, SamplerConfig(seed=1), 1000)
    assert apply_loss(ev, 0.0, 3).equals(ev)


def test_loss_fraction_is_binomial(psi, scene):
    ev = sample_events(StateSpec.maximal(2, psi), scene, SamplerConfig(seed=1), 50_000)
    lossy = apply_loss(ev, 0.5, 3)
    m = lossy.lost.size
    assert abs(lossy.lost.mean() - 0.5) <= 3 * math.sqrt(0.25 / m)
    np.testing.assert_array_equal(lossy.arrivals, ev.arrivals)  # lost values kept for audit
    assert apply_loss(ev, 0.5, 3).equals(lossy)
    with pytest.raises(ValueError):
        apply_loss(ev, 1.0, 3)


def test_surviving_photon_uniform_over_window(psi, scene):
    sig = density_sigmas(psi)
    spec = StateSpec.maximal(2, psi, window_factor=40.0)
    ev = lose_photons(sample_events(spec, scene, SamplerConfig(seed=13), 100_000), [1])
    survivors = ev.arrivals[~ev.lost].reshape(-1, 3)
    assert len(survivors) == 100_000
    for ax in range(3):
        w = spec.window[ax]
        x = survivors[:, ax] - scene.origin[ax]
        counts, _ = np.histogram(x, bins=20, range=(-w / 2, w / 2))
        p = counts / len(x)
        tv = 0.5 * (np.abs(p - 1 / 20).sum() + (1 - p.sum()))
        assert tv < 0.02
    assert 40 * sig[0] == pytest.approx(spec.window[0])


# --- export ---


def test_csv_and_binary_round_trip(psi, scene, tmp_path):
    ev = apply_loss(sample_events(StateSpec.partial(3, psi, 2.0), scene, SamplerConfig(seed=2), 257),
                    0.3, 1)
    ev.to_csv(tmp_path / "e.csv")
    ev.to_binary(tmp_path / "e.bin")
    assert EventBatch.from_csv(tmp_path / "e.csv").equals(ev)
    assert EventBatch.from_binary(tmp_path / "e.bin").equals(ev)
    raw = (tmp_path / "e.bin").read_bytes()
    assert BINARY_DTYPE.itemsize == 35 and len(raw) == 35 * 257 * 3
    assert int.from_bytes(raw[35:43], "little") == 0 and int.from_bytes(raw[43:45], "little") == 1
    header = (tmp_path / "e.csv").read_text().splitlines()[0]
    assert header == "shot_id,photon_index,t,x,y,lost"


def test_event_view(psi, scene):
    ev = sample_events(StateSpec.maximal(2, psi), scene, SamplerConfig(seed=2), 3)
    events = list(ev)
    assert [e.shot_id for e in events] == [0, 1, 2]
    assert events[1].n_photons == 2 and events[1].positions.shape == (2, 2)
