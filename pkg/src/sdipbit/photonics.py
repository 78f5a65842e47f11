"""Output statistics of the balanced-detection photonic p-bit.

Photons hit a beamsplitter (reflection probability ``r``), the difference
signal ``k = M_A - M_B`` is converted to volts (``alpha_D`` per photon),
blurred by Gaussian electronic noise ``sigma_D`` and digitised by a
``b``-bit ADC whose end bins are half-infinite.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import constants, special, stats

from .entropy import as_stream

log = logging.getLogger(__name__)

LINEAR_MAX_N = 1000
WEIGHT_CUTOFF = 1e-18
POISSON_COVERAGE = 1e-9


@dataclass(frozen=True)
class DetectionParams:
    """Difference-channel noise, conversion factor, ADC range and bit depth."""

    sigma_D: float
    alpha_D: float
    V_min: float
    V_max: float
    bit_depth: int = 8
    delta_V: float | None = None

    def __post_init__(self):
        if not self.sigma_D > 0:
            raise ValueError(f"sigma_D must be > 0, got {self.sigma_D}")
        if not self.alpha_D > 0:
            raise ValueError(f"alpha_D must be > 0, got {self.alpha_D}")
        if int(self.bit_depth) != self.bit_depth or self.bit_depth < 1:
            raise ValueError(f"bit_depth must be an integer >= 1, got {self.bit_depth}")
        if not self.V_max > self.V_min:
            raise ValueError("V_max must exceed V_min")
        dv = (self.V_max - self.V_min) / (1 << int(self.bit_depth))
        if self.delta_V is None:
            object.__setattr__(self, "delta_V", dv)
        elif not math.isclose(self.delta_V, dv, rel_tol=1e-9):
            raise ValueError(f"delta_V={self.delta_V} inconsistent with (V_max - V_min)/J = {dv}")

    @property
    def J(self) -> int:
        return 1 << int(self.bit_depth)

    @property
    def edges(self) -> np.ndarray:
        """The J - 1 interior bin edges V_min + j*delta_V, j = 1..J-1."""
        return self.V_min + np.arange(1, self.J) * self.delta_V

    def midpoints(self) -> np.ndarray:
        return self.V_min + (np.arange(self.J) + 0.5) * self.delta_V

    def digitize(self, v):
        """ADC code of each voltage; consistent with the half-open bins of :func:`adc_bins`."""
        return np.searchsorted(self.edges, np.asarray(v, dtype=float), side="right")


@dataclass(frozen=True)
class PhotonicParams:
    """Wavelength (m), detection bandwidth (Hz), responsivity (A/W), TIA gain (V/A)."""

    wavelength: float
    bandwidth: float
    responsivity: float
    gain: float

    def __post_init__(self):
        for name in ("wavelength", "bandwidth", "responsivity", "gain"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class PhotonicSource:
    """Input photon statistics (Fock ``n`` or Poisson mean) and splitting ratio."""

    kind: str
    photons: float
    ratio: float = 0.5

    def __post_init__(self):
        if self.kind not in ("fock", "poisson"):
            raise ValueError(f"unknown input model {self.kind!r}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"splitting ratio must lie in [0, 1], got {self.ratio}")
        if self.photons < 0:
            raise ValueError("photon number must be nonnegative")
        if self.kind == "fock" and int(self.photons) != self.photons:
            raise ValueError("Fock photon number must be an integer")

    @classmethod
    def fock(cls, n: int, ratio: float = 0.5) -> "PhotonicSource":
        return cls("fock", int(n), ratio)

    @classmethod
    def poisson(cls, mean: float, ratio: float = 0.5) -> "PhotonicSource":
        return cls("poisson", float(mean), ratio)

    def with_ratio(self, ratio: float) -> "PhotonicSource":
        return replace(self, ratio=float(ratio))

    def with_photons(self, photons) -> "PhotonicSource":
        return replace(self, photons=int(photons) if self.kind == "fock" else float(photons))


@dataclass(frozen=True)
class AnalogMixture:
    """Gaussian mixture of the analog difference voltage; one component per k."""

    weights: np.ndarray
    means: np.ndarray
    std: float

    def mean(self) -> float:
        return float(self.weights @ self.means)

    def variance(self) -> float:
        d = self.means - self.mean()
        return float(self.std**2 + self.weights @ d**2)

    def central_moment(self, order: int) -> float:
        d = self.means - self.mean()
        s2 = self.std**2
        if order == 3:
            return float(self.weights @ (d**3 + 3 * d * s2))
        if order == 4:
            return float(self.weights @ (d**4 + 6 * d**2 * s2 + 3 * s2**2))
        raise ValueError("only orders 3 and 4 are supported")

    def skewness(self) -> float:
        return self.central_moment(3) / self.variance() ** 1.5

    def excess_kurtosis(self) -> float:
        return self.central_moment(4) / self.variance() ** 2 - 3.0

    def cdf(self, x):
        """P(v <= x) for scalar or array ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape)
        step = max(1, (1 << 22) // max(x.size, 1))
        for lo in range(0, self.weights.size, step):
            w = self.weights[lo:lo + step]
            mu = self.means[lo:lo + step]
            out += special.ndtr((x[None, :] - mu[:, None]) / self.std).T @ w
        return out


def compute_alpha(params: PhotonicParams) -> float:
    """Volts per photon of the difference channel: h c nu_D eta G / lambda."""
    return constants.h * constants.c * params.bandwidth * params.responsivity * params.gain / params.wavelength


def _check_nr(n, r) -> None:
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"splitting ratio must lie in [0, 1], got {r}")
    if n < 0 or int(n) != n:
        raise ValueError(f"photon number must be a nonnegative integer, got {n}")


_NORMAL_MIN = np.finfo(float).tiny


def _stirlerr(x: np.ndarray) -> np.ndarray:
    """log(x!) - [(x + 1/2) log x - x + log(2 pi)/2], the Stirling-series remainder."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= 15
    xs = x[small]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[small] = special.gammaln(xs + 1) - (xs + 0.5) * np.log(xs) + xs - 0.5 * math.log(2 * math.pi)
    xl = x[~small]
    x2 = 1.0 / (xl * xl)
    out[~small] = (1 / 12 - x2 * (1 / 360 - x2 * (1 / 1260 - x2 * (1 / 1680 - x2 / 1188)))) / xl
    return out


def _bd0(x: np.ndarray, m: float) -> np.ndarray:
    """Deviance term x log(x/m) + m - x without cancellation near x = m."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = special.xlogy(x, x / m) + m - x
    near = np.abs(x - m) < 0.1 * (x + m)
    if near.any():
        xn = x[near]
        v = (xn - m) / (xn + m)
        acc = (xn - m) * v
        ej = 2 * xn * v
        v2 = v * v
        for j in range(1, 40):
            ej = ej * v2
            acc = acc + ej / (2 * j + 1)
        out[near] = acc
    return out


def _log_terms(n: int, r: float, a: np.ndarray) -> np.ndarray:
    """Binomial weights via the saddle-point form (Stirling remainders plus deviances).

    Accurate to a few ulps relative even for n in the millions, where plain
    log-gamma differences lose digits to cancellation.
    """
    a = np.asarray(a, dtype=float)
    out = np.zeros_like(a)
    if r == 0.0 or r == 1.0:
        out[a == (n if r == 1.0 else 0)] = 1.0
        return out
    edge_lo, edge_hi = a == 0, a == n
    out[edge_lo] = math.exp(n * math.log1p(-r))
    out[edge_hi] = math.exp(n * math.log(r))
    mid = ~(edge_lo | edge_hi)
    am = a[mid]
    b = n - am
    lc = (_stirlerr(np.array([float(n)]))[0] - _stirlerr(am) - _stirlerr(b)
          - _bd0(am, n * r) - _bd0(b, n * (1 - r)))
    out[mid] = np.exp(lc) * np.sqrt(n / (2 * math.pi * am * b))
    return out


def binomial_terms(n: int, r: float, method: str = "auto", window: bool = False):
    """Binomial weights C(n, a) r^a (1-r)^(n-a) for reflected counts ``a``.

    Returns ``(a, w)``. ``method`` is ``"linear"``, ``"log"`` or ``"auto"``
    (log-gamma whenever the linear form is not representable). With
    ``window=True`` only the terms above ``WEIGHT_CUTOFF`` relative to the
    peak are kept.
    """
    _check_nr(n, r)
    n = int(n)
    if method == "auto":
        method = "linear" if n <= LINEAR_MAX_N else "log"
    if window and n > 64:
        sd = math.sqrt(n * r * (1 - r))
        half = int(math.ceil(12 * sd)) + 30
        lo, hi = max(0, int(n * r) - half), min(n, int(n * r) + half)
        a = np.arange(lo, hi + 1)
    else:
        a = np.arange(n + 1)
    if method == "linear":
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            pa, pb = np.power(r, a), np.power(1 - r, n - a)
            w = special.comb(n, a) * pa * pb
        if not np.all(np.isfinite(w)):
            log.debug("linear binomial path not representable for n=%d; switching to log-space", n)
            return binomial_terms(n, r, "log", window)
        # factors in the subnormal range have lost precision
        tiny = ((pa < _NORMAL_MIN) & (pa > 0)) | ((pb < _NORMAL_MIN) & (pb > 0)) | (w < _NORMAL_MIN)
        if tiny.any():
            log.debug("binomial terms below the normal float range for n=%d; using log-space there", n)
            w[tiny] = _log_terms(n, r, a[tiny])
    elif method == "log":
        w = _log_terms(n, r, a)
    else:
        raise ValueError(f"unknown method {method!r}")
    if window:
        keep = w >= WEIGHT_CUTOFF * w.max()
        a, w = a[keep], w[keep]
    return a, w


def binomial_difference_pmf(n: int, r: float, method: str = "auto") -> dict[int, float]:
    """Distribution of the photon-count difference k = 2a - n over k = -n, -n+2, ..., n."""
    a, w = binomial_terms(n, r, method)
    return {int(2 * ai - n): float(wi) for ai, wi in zip(a, w)}


def _gaussian_lattice(n: int, r: float):
    """Normal approximation N(n(2r-1), 4nr(1-r)) evaluated on the k lattice."""
    mean = n * (2 * r - 1)
    sd = 2 * math.sqrt(n * r * (1 - r))
    if sd == 0:
        return np.array([int(round(mean))]), np.array([1.0])
    lo = max(-n, int(mean - 12 * sd))
    hi = min(n, int(mean + 12 * sd))
    k = np.arange(lo - ((lo + n) % 2), hi + 2, 2)
    k = k[(k >= -n) & (k <= n)]
    w = np.exp(-0.5 * ((k - mean) / sd) ** 2)
    return k, w / w.sum()


def difference_weights(source: PhotonicSource, gaussian_approx: bool = False):
    """Weights over the photon difference k for any supported input model."""
    if source.kind == "fock":
        n = int(source.photons)
        if gaussian_approx:
            return _gaussian_lattice(n, source.ratio)
        a, w = binomial_terms(n, source.ratio, window=True)
        return 2 * a - n, w
    return _poisson_difference_weights(source.photons, source.ratio)


def _poisson_difference_weights(mean: float, r: float):
    if mean == 0:
        return np.array([0]), np.array([1.0])
    lo = int(stats.poisson.ppf(POISSON_COVERAGE / 2, mean))
    hi = int(stats.poisson.isf(POISSON_COVERAGE / 2, mean))
    ns = np.arange(lo, hi + 1)
    pn = stats.poisson.pmf(ns, mean)
    if pn.sum() < 1 - POISSON_COVERAGE:
        raise ValueError(f"Poisson truncation covers only {pn.sum():.3e} of the photon-number mass")
    acc = np.zeros(2 * hi + 1)
    for n, weight in zip(ns, pn):
        a, w = binomial_terms(int(n), r, window=True)
        np.add.at(acc, 2 * a - n + hi, weight * w)
    k = np.arange(-hi, hi + 1)
    keep = acc > 0
    return k[keep], acc[keep] / acc[keep].sum()


def analog_mixture(source: PhotonicSource, det: DetectionParams, gaussian_approx: bool = False) -> AnalogMixture:
    """Gaussian-by-binomial mixture of the analog difference voltage."""
    k, w = difference_weights(source, gaussian_approx)
    w = w / w.sum()
    return AnalogMixture(weights=w, means=det.alpha_D * k.astype(float), std=det.sigma_D)


def adc_bins(det: DetectionParams) -> list[tuple[float, float]]:
    """Half-open ADC intervals [lower, upper); the end bins extend to -inf / +inf."""
    e = det.edges
    lowers = np.concatenate([[-np.inf], e])
    uppers = np.concatenate([e, [np.inf]])
    return list(zip(lowers.tolist(), uppers.tolist()))


def sdi_output_pmf(source: PhotonicSource, det: DetectionParams, gaussian_approx: bool = False) -> np.ndarray:
    """p(j | n, r) for every ADC code j.

    The integral of each Gaussian component over a bin is taken in closed
    form as a difference of normal CDFs at the bin edges.
    """
    cdf = analog_mixture(source, det, gaussian_approx).cdf(det.edges)
    return np.diff(np.concatenate([[0.0], cdf, [1.0]]))


def sample_analog(source: PhotonicSource, det: DetectionParams, count: int, entropy, photons=None):
    """Draw ``count`` analog difference voltages; returns ``(v, n)``.

    ``photons`` overrides the per-sample photon number (used for fault
    injection); otherwise it follows the source's input model.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    stream = as_stream(entropy)
    if photons is not None:
        n = np.broadcast_to(np.asarray(photons, dtype=np.int64), (count,)).copy()
    elif source.kind == "fock":
        n = np.full(count, int(source.photons), dtype=np.int64)
    else:
        n = np.asarray(stream.poisson(source.photons, size=count), dtype=np.int64)
    reflected = np.asarray(stream.binomial(n, source.ratio, size=count), dtype=np.int64)
    v = det.alpha_D * (2 * reflected - n) + det.sigma_D * stream.normal(count)
    return v, n


def sample_digitized(source: PhotonicSource, det: DetectionParams, count: int, entropy) -> np.ndarray:
    """I.i.d. ADC codes drawn by simulating photons, electronics and the ADC."""
    v, _ = sample_analog(source, det, count, entropy)
    return det.digitize(v)


def center_threshold(det: DetectionParams) -> int:
    """Default comparison code c = 2^(b-1)."""
    return 1 << (int(det.bit_depth) - 1)


def auto_range(source: PhotonicSource, alpha_D: float, sigma_D: float, bit_depth: int = 8,
               span: float = 0.8, z: float = 4.0, align: str = "threshold") -> DetectionParams:
    """Pick an ADC range so the +-z-sigma analog signal fills ``span`` of it.

    ``align="threshold"`` shifts the range so the upper edge of the centre
    code c = 2^(b-1) sits at the mean signal voltage; a state comparison
    j <= c is then exactly balanced at the symmetric operating point.
    ``align="symmetric"`` centres the range on the mean instead (and is
    always used for b = 1).
    """
    if align not in ("threshold", "symmetric"):
        raise ValueError(f"unknown alignment {align!r}")
    probe = DetectionParams(sigma_D, alpha_D, -1.0, 1.0, bit_depth)
    mix = analog_mixture(source, probe)
    mu, sd = mix.mean(), math.sqrt(mix.variance())
    half = z * sd / span
    if align == "symmetric" or bit_depth == 1:
        return DetectionParams(sigma_D, alpha_D, mu - half, mu + half, bit_depth)
    dv = 2 * half / (1 << bit_depth)
    v_min = mu - (center_threshold(probe) + 1) * dv
    return DetectionParams(sigma_D, alpha_D, v_min, v_min + 2 * half, bit_depth)


def pmf_to_csv(pmf, det: DetectionParams, generated_by: str = "sdipbit") -> str:
    """CSV with columns code, lower_edge_volts, probability."""
    buf = io.StringIO()
    buf.write(f"# generated-by {generated_by}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["code", "lower_edge_volts", "probability"])
    lowers = [lo for lo, _ in adc_bins(det)]
    for j, (lo, p) in enumerate(zip(lowers, pmf)):
        writer.writerow([j, repr(float(lo)), repr(float(p))])
    return buf.getvalue()
