import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from sdipbit.entropy import EntropyExhausted, EntropyStream
from sdipbit.photonics import (AnalogMixture, DetectionParams, PhotonicParams, PhotonicSource, adc_bins,
                               analog_mixture, auto_range, binomial_difference_pmf, binomial_terms,
                               center_threshold, compute_alpha, pmf_to_csv, sample_analog, sample_digitized,
                               sdi_output_pmf)


def path_enumeration(n, r):
    """Independent oracle: sum over all 2^n reflect/transmit histories."""
    out = Counter()
    for path in itertools.product((0, 1), repeat=n):
        a = sum(path)
        out[2 * a - n] += r**a * (1 - r) ** (n - a)
    return dict(out)


def symmetric_det(sigma, half, bits=8, alpha=1.0):
    return DetectionParams(sigma, alpha, -half, half, bits)


class TestDetectionParams:
    def test_delta_v_consistency(self):
        det = DetectionParams(1.0, 1.0, -8, 8, 4)
        assert det.delta_V == 1.0 and det.J == 16
        with pytest.raises(ValueError, match="inconsistent"):
            DetectionParams(1.0, 1.0, -8, 8, 4, delta_V=0.5)

    @pytest.mark.parametrize("kwargs", [dict(sigma_D=0), dict(alpha_D=-1), dict(V_min=2.0), dict(bit_depth=0)])
    def test_invalid(self, kwargs):
        base = dict(sigma_D=1.0, alpha_D=1.0, V_min=-1.0, V_max=1.0, bit_depth=8)
        with pytest.raises(ValueError):
            DetectionParams(**{**base, **kwargs})


class TestBinomialDifference:
    def test_two_photons(self):
        assert binomial_difference_pmf(2, 0.5) == pytest.approx({-2: 0.25, 0: 0.5, 2: 0.25})

    def test_vacuum(self):
        assert binomial_difference_pmf(0, 0.3) == {0: 1.0}

    @pytest.mark.parametrize("n,r", [(10, 0.3), (7, 0.5), (5, 0.9)])
    def test_path_enumeration(self, n, r):
        got, want = binomial_difference_pmf(n, r), path_enumeration(n, r)
        assert set(got) == set(want)
        for k in want:
            assert got[k] == pytest.approx(want[k], rel=1e-12, abs=1e-300)

    def test_parity(self):
        assert all(k % 2 == 7 % 2 for k in binomial_difference_pmf(7, 0.4))

    @pytest.mark.parametrize("n,r", [(-1, 0.5), (3, 1.2), (3, -0.1), (2.5, 0.5)])
    def test_invalid(self, n, r):
        with pytest.raises(ValueError):
            binomial_difference_pmf(n, r)

    @pytest.mark.parametrize("n", [50, 500, 1000])
    @pytest.mark.parametrize("r", [0.1, 0.5, 0.83])
    def test_log_and_linear_agree(self, n, r):
        _, lin = binomial_terms(n, r, "linear")
        _, lg = binomial_terms(n, r, "log")
        mask = lin > 1e-250
        assert np.allclose(lg[mask], lin[mask], rtol=1e-9, atol=0)

    @pytest.mark.parametrize("n", [100, 10_000, 2_000_000])
    def test_large_n_normalized(self, n):
        _, w = binomial_terms(n, 0.37, window=True)
        assert w.sum() == pytest.approx(1, abs=1e-12)

    @pytest.mark.parametrize("n,r", [(2_000_000, 0.37), (10_000, 0.5), (5_000, 0.02)])
    def test_log_path_against_scipy(self, n, r):
        a, w = binomial_terms(n, r, "log", window=True)
        ref = stats.binom.pmf(a, n, r)
        central = ref > 1e-12 * ref.max()
        assert np.allclose(w[central], ref[central], rtol=1e-10, atol=0)

    def test_window_matches_scipy(self):
        a, w = binomial_terms(10_000, 0.001, window=True)
        assert np.allclose(w, stats.binom.pmf(a, 10_000, 0.001), rtol=1e-9)
        assert w.sum() == pytest.approx(1, abs=1e-12)


class TestAlpha:
    def test_example_value(self):
        p = PhotonicParams(1550e-9, 1e9, 0.8, 1e4)
        expected = 6.62607015e-34 * 299792458 * 1e9 * 0.8 * 1e4 / 1550e-9
        assert compute_alpha(p) == pytest.approx(expected, rel=1e-12)
        assert compute_alpha(p) == pytest.approx(1.03e-6, rel=0.01)

    def test_scaling(self):
        p = PhotonicParams(1550e-9, 1e9, 0.8, 1e4)
        assert compute_alpha(PhotonicParams(1550e-9, 1e9, 0.8, 2e4)) == pytest.approx(2 * compute_alpha(p))
        assert compute_alpha(PhotonicParams(3100e-9, 1e9, 0.8, 1e4)) == pytest.approx(compute_alpha(p) / 2)

    @pytest.mark.parametrize("field", range(4))
    def test_nonpositive_rejected(self, field):
        args = [1550e-9, 1e9, 0.8, 1e4]
        args[field] = 0.0
        with pytest.raises(ValueError):
            PhotonicParams(*args)


class TestMixture:
    def test_vacuum_is_noise_only(self):
        mix = analog_mixture(PhotonicSource.fock(0), symmetric_det(0.7, 5))
        assert np.array_equal(mix.means, [0.0]) and mix.std == 0.7

    def test_two_photons(self):
        mix = analog_mixture(PhotonicSource.fock(2), symmetric_det(0.3, 5, alpha=1.5))
        assert np.allclose(mix.means, [-3, 0, 3]) and np.allclose(mix.weights, [0.25, 0.5, 0.25])

    def test_weights_sum(self):
        assert analog_mixture(PhotonicSource.fock(50, 0.37), symmetric_det(1, 60)).weights.sum() == \
            pytest.approx(1, abs=1e-12)

    def test_moments_against_closed_form(self):
        n, r, a, s = 400, 0.3, 0.5, 2.0
        mix = analog_mixture(PhotonicSource.fock(n, r), symmetric_det(s, 1, alpha=a))
        assert mix.mean() == pytest.approx(a * n * (2 * r - 1), rel=1e-12)
        assert mix.variance() == pytest.approx(4 * a * a * n * r * (1 - r) + s * s, rel=1e-10)

    def test_poisson_against_skellam(self):
        # K - (n - K) with n ~ Poisson(mu) is Skellam(mu r, mu (1 - r))
        mu, r = 40.0, 0.3
        mix = analog_mixture(PhotonicSource.poisson(mu, r), symmetric_det(1, 1))
        want = stats.skellam.pmf(mix.means.astype(int), mu * r, mu * (1 - r))
        assert np.allclose(mix.weights, want, atol=1e-9)

    def test_poisson_zero_mean(self):
        mix = analog_mixture(PhotonicSource.poisson(0.0), symmetric_det(1, 1))
        assert np.array_equal(mix.means, [0.0])

    def test_gaussian_approx_close_at_crossover(self):
        det = symmetric_det(50, 300)
        src = PhotonicSource.fock(10_000, 0.5)
        exact, approx = sdi_output_pmf(src, det), sdi_output_pmf(src, det, gaussian_approx=True)
        assert np.abs(exact - approx).max() < 1e-3

    def test_cdf_matches_quadrature(self):
        mix = AnalogMixture(np.array([0.2, 0.8]), np.array([-1.0, 2.0]), 0.5)
        pdf = lambda x: sum(w * stats.norm.pdf(x, m, 0.5) for w, m in zip(mix.weights, mix.means))
        assert mix.cdf(np.array([0.3]))[0] == pytest.approx(integrate.quad(pdf, -np.inf, 0.3)[0], abs=1e-10)

    def test_higher_moments(self):
        mix = AnalogMixture(np.array([0.5, 0.5]), np.array([-1.0, 1.0]), 1.0)
        assert mix.central_moment(3) == pytest.approx(0, abs=1e-14)
        # fourth moment of the mixture: E[X^4] = 1 + 6 + 3
        assert mix.central_moment(4) == pytest.approx(10)


class TestBins:
    def test_one_bit(self):
        assert adc_bins(DetectionParams(1, 1, -1, 1, 1)) == [(-np.inf, 0.0), (0.0, np.inf)]

    def test_eight_bit(self):
        det = symmetric_det(1, 4)
        bins = adc_bins(det)
        assert len(bins) == 256
        widths = [hi - lo for lo, hi in bins[1:-1]]
        assert np.allclose(widths, det.delta_V)

    @settings(max_examples=200)
    @given(st.floats(-100, 100, allow_nan=False))
    def test_partition(self, v):
        det = DetectionParams(1, 1, -10, 10, 4)
        hits = [j for j, (lo, hi) in enumerate(adc_bins(det)) if lo <= v < hi]
        assert hits == [int(det.digitize(v))]


class TestOutputPMF:
    @pytest.mark.parametrize("n,r,bits", [(n, r, b) for n in (0, 1, 2, 10, 100, 10_000)
                                          for r in (0.0, 0.3, 0.5, 1.0) for b in (1, 8, 12)])
    def test_normalized(self, n, r, bits):
        src = PhotonicSource.fock(n, r)
        det = auto_range(src.with_ratio(0.5), 1.0, max(0.5 * math.sqrt(n), 0.3), bits)
        assert sdi_output_pmf(src, det).sum() == pytest.approx(1, abs=1e-9)

    def test_matches_numerical_quadrature(self):
        src = PhotonicSource.fock(6, 0.4)
        det = DetectionParams(0.6, 1.0, -8, 8, 4)
        mix = analog_mixture(src, det)
        pdf = lambda x: sum(w * stats.norm.pdf(x, m, 0.6) for w, m in zip(mix.weights, mix.means))
        want = [integrate.quad(pdf, lo, hi)[0] for lo, hi in adc_bins(det)]
        assert np.allclose(sdi_output_pmf(src, det), want, atol=1e-9)

    @pytest.mark.parametrize("n,r", [(10, 0.3), (11, 0.5), (40, 0.8)])
    def test_mirror_symmetry(self, n, r):
        det = symmetric_det(0.9, n + 5)
        p = sdi_output_pmf(PhotonicSource.fock(n, r), det)
        q = sdi_output_pmf(PhotonicSource.fock(n, 1 - r), det)
        assert np.abs(p - q[::-1]).max() < 1e-9

    def test_noise_limit_recovers_binomial(self):
        n, r = 12, 0.35
        # lattice points at bin midpoints, bins 1/4 of the lattice spacing
        det = DetectionParams(1e-12, 1.0, -n - 0.25, -n - 0.25 + 256 * 0.5, 8)
        p = sdi_output_pmf(PhotonicSource.fock(n, r), det)
        for k, w in binomial_difference_pmf(n, r).items():
            assert p[int(det.digitize(float(k)))] == pytest.approx(w, abs=1e-6)

    @pytest.mark.parametrize("r,sign", [(0.0, -1), (1.0, 1)])
    def test_degenerate_ratio(self, r, sign):
        det = symmetric_det(1.0, 30)
        p = sdi_output_pmf(PhotonicSource.fock(20, r), det)
        edges = np.concatenate([[-np.inf], det.edges, [np.inf]])
        want = np.diff(stats.norm.cdf(edges, loc=sign * 20, scale=1.0))
        assert np.allclose(p, want, atol=1e-12)

    def test_smearing_monotone(self):
        src = PhotonicSource.fock(10)
        peaks = [sdi_output_pmf(src, symmetric_det(s, 16)).max() for s in (0.05, 0.1, 0.2, 0.5, 1, 2, 4)]
        assert all(a >= b - 1e-15 for a, b in zip(peaks, peaks[1:]))

    def test_smearing_shapes(self):
        src = PhotonicSource.fock(10)
        sharp = sdi_output_pmf(src, symmetric_det(0.2, 16))
        smooth = sdi_output_pmf(src, symmetric_det(1.0, 16))

        def modes(p):
            return int(np.sum((p[1:-1] > p[:-2]) & (p[1:-1] >= p[2:]) & (p[1:-1] > 1e-6)))

        assert modes(sharp) >= 5
        assert modes(smooth) == 1

    def test_degenerate_detector_single_bin(self):
        det = DetectionParams(1.0, 1.0, 100, 101, 8)
        p = sdi_output_pmf(PhotonicSource.fock(0), det)
        assert p[0] == pytest.approx(1.0)


class TestSampling:
    def test_goodness_of_fit(self):
        src = PhotonicSource.fock(200, 0.45)
        det = auto_range(src, 1.0, 4.0, 8)
        codes = sample_digitized(src, det, 10**6, EntropyStream(3))
        p = sdi_output_pmf(src, det)
        obs = np.bincount(codes, minlength=det.J)
        keep = p * codes.size > 5
        exp_ = p[keep] * codes.size
        chi2 = np.sum((obs[keep] - exp_) ** 2 / exp_) + 0.0
        pval = stats.chi2.sf(chi2, keep.sum() - 1)
        assert pval > 1e-4

    def test_noise_only(self):
        det = symmetric_det(2.0, 10)
        v, n = sample_analog(PhotonicSource.fock(0), det, 50_000, EntropyStream(0))
        assert np.all(n == 0)
        assert v.mean() == pytest.approx(0, abs=0.05) and v.std() == pytest.approx(2.0, rel=0.02)

    def test_poisson_photon_numbers(self):
        v, n = sample_analog(PhotonicSource.poisson(30.0), symmetric_det(1, 50), 50_000, 1)
        assert n.mean() == pytest.approx(30, rel=0.01) and n.var() == pytest.approx(30, rel=0.05)

    def test_exhausted(self):
        with pytest.raises(EntropyExhausted):
            sample_digitized(PhotonicSource.fock(10), symmetric_det(1, 12), 100, EntropyStream(0, limit=150))

    def test_count_positive(self):
        with pytest.raises(ValueError):
            sample_digitized(PhotonicSource.fock(1), symmetric_det(1, 2), 0, 0)


class TestAutoRange:
    def test_threshold_alignment_balances_center(self):
        src = PhotonicSource.fock(10_000)
        det = auto_range(src, 1.0, 50.0, 8)
        p = sdi_output_pmf(src, det)
        assert 2 * p[:center_threshold(det) + 1].sum() - 1 == pytest.approx(0, abs=1e-9)

    def test_span(self):
        src = PhotonicSource.fock(10_000)
        det = auto_range(src, 1.0, 50.0, 8, align="symmetric")
        sd = math.sqrt(4 * 10_000 * 0.25 + 2500)
        assert det.V_max == pytest.approx(4 * sd / 0.8) and det.V_min == pytest.approx(-det.V_max)

    def test_saturation_negligible(self):
        src = PhotonicSource.fock(10_000)
        p = sdi_output_pmf(src, auto_range(src, 1.0, 50.0, 8))
        assert p[0] + p[-1] < 1e-5


def test_pmf_csv():
    det = DetectionParams(1, 1, -1, 1, 1)
    text = pmf_to_csv(sdi_output_pmf(PhotonicSource.fock(0), det), det)
    lines = text.splitlines()
    assert lines[0].startswith("# generated-by")
    assert lines[1] == "code,lower_edge_volts,probability"
    assert lines[2].split(",")[:2] == ["0", "-inf"] and len(lines) == 4
