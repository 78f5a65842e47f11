import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sdipbit.certification import (CertificationMonitor, CertificationParams, CertifiedSample, Reason,
                                   certification_rate, certify, certify_batch, estimate_n, estimate_n_block,
                                   sample_sum_voltage, trace_to_csv)
from sdipbit.entropy import EntropyStream
from sdipbit.photonics import DetectionParams, PhotonicSource, auto_range, sample_analog


@pytest.fixture
def det():
    return auto_range(PhotonicSource.fock(10_000), 1.0, 50.0, 8)


@pytest.fixture
def params():
    return CertificationParams.for_photons(10_000)


def dropout_trace(det, params, count=20_000, fault_at=10_000, seed=0):
    stream = EntropyStream(seed)
    photons = np.where(np.arange(count) >= fault_at, 0, 10_000)
    v, n = sample_analog(PhotonicSource.fock(10_000), det, count, stream, photons=photons)
    sums = sample_sum_voltage(n, params, stream)
    return certify_batch(det.digitize(v), sums, params, det)


class TestParams:
    @pytest.mark.parametrize("kwargs", [dict(alpha_S=0), dict(sigma_S=-1), dict(n_min=-1), dict(z=-0.5)])
    def test_invalid(self, kwargs):
        base = dict(alpha_S=1.0, sigma_S=1.0, n_min=10, z=3.0)
        with pytest.raises(ValueError):
            CertificationParams(**{**base, **kwargs})

    def test_for_photons(self, params):
        assert params.n_min == 5000 and params.sigma_S == pytest.approx(100)


class TestEstimate:
    def test_noiseless_inversion(self):
        p = CertificationParams(2.5, 1.0, 0, z=0)
        assert estimate_n(100 * 2.5, p) == 100

    def test_floor_at_zero(self):
        assert estimate_n(0.0, CertificationParams(1.0, 1.0, 0)) == 0
        assert estimate_n(-50.0, CertificationParams(1.0, 1.0, 0)) == 0

    def test_soundness(self):
        p = CertificationParams(1.0, 10.0, 0, z=3.0)
        sums = sample_sum_voltage(np.full(100_000, 1000), p, EntropyStream(1))
        over = np.mean(estimate_n(sums, p) > 1000)
        assert np.mean(estimate_n(sums, p) <= 1000) >= 0.998
        assert over <= 0.005

    @pytest.mark.parametrize("n_true", [10, 1000, 100_000])
    def test_soundness_any_n(self, n_true):
        p = CertificationParams(0.3, 5.0, 0, z=3.0)
        sums = sample_sum_voltage(np.full(100_000, n_true), p, EntropyStream(n_true))
        assert np.mean(estimate_n(sums, p) > n_true) <= 0.005

    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=50))
    def test_monotone(self, volts):
        p = CertificationParams(1.3, 2.0, 0)
        v = np.sort(np.asarray(volts))
        assert np.all(np.diff(estimate_n(v, p)) >= 0)

    def test_block_estimate_tighter(self):
        p = CertificationParams(1.0, 100.0, 0, z=3.0)
        sums = sample_sum_voltage(np.full(64, 10_000), p, EntropyStream(5))
        assert estimate_n_block(sums, p) > np.median(estimate_n(sums, p))
        assert estimate_n_block(sums, p) <= 10_000 + 50


class TestCertify:
    def test_starved(self, det):
        s = certify(100, 0.0, CertificationParams(1.0, 1.0, 100), det)
        assert s == CertifiedSample(100, 0, False, Reason.BELOW_FLOOR)

    def test_nominal(self, det, params):
        s = certify(130, 10_000.0, params, det)
        assert s.certified and s.reason is Reason.OK and s.n_hat == 9700

    @pytest.mark.parametrize("code", [0, 255])
    def test_saturated(self, det, params, code):
        s = certify(code, 10_000.0, params, det)
        assert not s.certified and s.reason is Reason.OUT_OF_RANGE

    def test_saturation_check_optional(self, det):
        p = CertificationParams(1.0, 100.0, 5000, reject_saturated=False)
        assert certify(0, 10_000.0, p, det).certified

    def test_floor_reason_wins(self, det, params):
        assert certify(0, 0.0, params, det).reason is Reason.BELOW_FLOOR

    @given(st.integers(0, 255), st.floats(-1e5, 1e5, allow_nan=False))
    def test_certified_iff_ok(self, code, volts):
        det = DetectionParams(1.0, 1.0, -1, 1, 8)
        s = certify(code, volts, CertificationParams(1.0, 10.0, 100), det)
        assert s.certified == (s.reason is Reason.OK)

    def test_monotone_in_n_hat(self, det, params):
        volts = np.linspace(0, 20_000, 500)
        _, ok, _ = certify_batch(np.full(500, 128), volts, params, det)
        assert np.all(np.diff(ok.astype(int)) >= 0)

    def test_block_mode(self, det, params):
        sums = np.full(10, 10_000.0)
        n_hat, ok, _ = certify_batch(None, sums, params, None, block=5)
        assert np.all(n_hat == n_hat[0]) and ok.all()


class TestRate:
    def test_all_certified(self):
        assert np.all(certification_rate([True] * 10, 4) == 1.0)

    def test_alternating(self):
        rate = certification_rate(np.array([True, False] * 50), 10)
        assert rate[-1] == 0.5

    def test_rolling_definition(self):
        rate = certification_rate([1, 0, 0, 1], 2)
        assert rate.tolist() == [1.0, 0.5, 0.0, 0.5]

    def test_errors(self):
        with pytest.raises(ValueError):
            certification_rate([True], 0)
        with pytest.raises(ValueError):
            certification_rate([], 3)

    def test_accepts_samples(self):
        stream = [CertifiedSample(1, 9, True, Reason.OK), CertifiedSample(1, 0, False, Reason.BELOW_FLOOR)]
        assert certification_rate(stream, 2)[-1] == 0.5

    def test_monitor_matches_batch(self):
        flags = np.random.default_rng(0).random(500) < 0.7
        mon = CertificationMonitor(37)
        online = [mon.push(f) for f in flags]
        assert np.allclose(online, certification_rate(flags, 37))

    def test_monitor_empty(self):
        with pytest.raises(ValueError):
            CertificationMonitor(5).rate


class TestDropout:
    def test_rejection_jumps(self, det, params):
        _, ok, reason = dropout_trace(det, params)
        assert 1 - ok[:10_000].mean() < 0.01
        window = 1000
        assert 1 - ok[10_000:10_000 + window].mean() > 0.99
        assert np.all(reason[10_000:] == Reason.BELOW_FLOOR)

    def test_rate_crosses_half_once(self, det, params):
        _, ok, _ = dropout_trace(det, params)
        rate = certification_rate(ok, 1000)
        above = rate >= 0.5
        crossings = np.flatnonzero(above[1:] != above[:-1])
        assert crossings.size == 1
        assert 10_000 <= crossings[0] + 1 <= 10_000 + 1000


def test_trace_csv():
    text = trace_to_csv([10, 0], [True, False], [Reason.OK, Reason.BELOW_FLOOR])
    lines = text.splitlines()
    assert lines[0].startswith("# generated-by")
    assert lines[1:] == ["index,n_hat,certified,reason", "0,10,1,ok", "1,0,0,below_floor"]
