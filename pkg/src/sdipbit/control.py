"""Bias control of the photonic p-bit and its continuous (g-bit) readout.

Three knobs steer the mean state: the beamsplitter ratio, the reference
voltage of a comparator on the analog signal, and a digital threshold on
the ADC code. State +1 is always the low side (code <= threshold, or
voltage <= reference).
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .entropy import as_stream
from .photonics import (
    DetectionParams,
    PhotonicSource,
    analog_mixture,
    center_threshold,
    sample_analog,
    sdi_output_pmf,
)

KINDS = ("splitting_ratio", "comparator", "digital_threshold")


class NonMonotoneCurve(ValueError):
    def __init__(self, kind: str, segment: tuple[int, int], values: tuple[float, float]):
        self.segment = segment
        super().__init__(
            f"{kind} bias curve is not monotone between grid points {segment[0]} and {segment[1]} "
            f"(mean states {values[0]:.6g} -> {values[1]:.6g}); check the detector range"
        )


class DegeneratePMFWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ControlMethod:
    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown control method {self.kind!r}")
        if not math.isfinite(self.value):
            raise ValueError("control value must be finite")
        if self.kind == "splitting_ratio" and not 0 <= self.value <= 1:
            raise ValueError("splitting ratio must lie in [0, 1]")

    @classmethod
    def splitting_ratio(cls, r: float) -> "ControlMethod":
        return cls("splitting_ratio", float(r))

    @classmethod
    def comparator(cls, v_bias: float) -> "ControlMethod":
        return cls("comparator", float(v_bias))

    @classmethod
    def digital_threshold(cls, t: int) -> "ControlMethod":
        return cls("digital_threshold", int(t))


def state_from_code(j, c, J: int | None = None):
    """+1 when j <= c, -1 when j > c."""
    ja = np.asarray(j)
    if J is not None:
        if np.any((ja < 0) | (ja > J - 1)) or not 0 <= c <= J - 1:
            raise ValueError(f"ADC codes must lie in [0, {J - 1}]")
    out = np.where(ja <= c, 1, -1).astype(np.int8)
    return int(out) if out.ndim == 0 else out


def _check_pmf(pmf: np.ndarray) -> None:
    if max(pmf[0], pmf[-1]) >= 1 - 1e-9:
        warnings.warn("digitised PMF has all its mass in a saturated end bin; detector is mis-ranged",
                      DegeneratePMFWarning, stacklevel=3)


def mean_state(method: ControlMethod, source: PhotonicSource, det: DetectionParams,
               threshold: int | None = None) -> float:
    """Exact expected bipolar state for one control setting.

    ``threshold`` is the comparison code used by the splitting-ratio method
    (default: centre code 2^(b-1)).
    """
    if method.kind == "splitting_ratio":
        c = center_threshold(det) if threshold is None else threshold
        if c >= det.J - 1:
            return 1.0
        upper = det.V_min + (c + 1) * det.delta_V
        mix = analog_mixture(source.with_ratio(method.value), det)
        return float(np.clip(2 * mix.cdf(upper)[0] - 1, -1, 1))
    if method.kind == "comparator":
        mix = analog_mixture(source, det)
        return float(np.clip(2 * mix.cdf(method.value)[0] - 1, -1, 1))
    t = int(method.value)
    if not 0 <= t <= det.J - 1:
        raise ValueError(f"digital threshold must lie in [0, {det.J - 1}]")
    pmf = sdi_output_pmf(source, det)
    _check_pmf(pmf)
    return float(np.clip(2 * pmf[: t + 1].sum() - 1, -1, 1))


@dataclass(frozen=True)
class BiasCurve:
    """Mean state tabulated over a monotone grid of control settings."""

    kind: str
    settings: np.ndarray
    values: np.ndarray
    orientation: int
    model: Callable[[float], float] | None = field(default=None, compare=False, repr=False)

    @property
    def discrete(self) -> bool:
        return self.kind == "digital_threshold"

    def normalized(self) -> np.ndarray:
        """Values oriented so they increase along the grid."""
        return self.values * self.orientation

    @property
    def achievable(self) -> tuple[float, float]:
        return float(self.values.min()), float(self.values.max())


def _check_monotone(kind: str, values: np.ndarray, orientation: int, tol: float = 1e-12) -> None:
    d = np.diff(values * orientation)
    bad = np.flatnonzero(d < -tol)
    if bad.size:
        i = int(bad[0])
        raise NonMonotoneCurve(kind, (i, i + 1), (float(values[i]), float(values[i + 1])))


def calibrate(kind: str, source: PhotonicSource, det: DetectionParams, size: int | None = None,
              settings=None, threshold: int | None = None) -> BiasCurve:
    """Tabulate the exact bias response of one control mechanism.

    Digital thresholds are evaluated exhaustively over all J codes; the
    continuous knobs default to a uniform grid (``size`` points) and carry
    the exact forward model for refinement during inversion.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown control method {kind!r}")
    if size is not None and size < 3:
        raise ValueError("calibration grid needs at least 3 points")
    model = None
    if kind == "digital_threshold":
        pmf = sdi_output_pmf(source, det)
        _check_pmf(pmf)
        grid = np.arange(det.J) if settings is None else np.asarray(settings, dtype=int)
        cum = np.clip(2 * np.cumsum(pmf) - 1, -1, 1)
        cum[-1] = 1.0
        values = cum[grid]
    else:
        if kind == "splitting_ratio":
            grid = np.linspace(0, 1, size or 201) if settings is None else np.asarray(settings, dtype=float)

            def model(x, _c=threshold):
                return mean_state(ControlMethod("splitting_ratio", min(max(x, 0.0), 1.0)), source, det, _c)
        else:
            mix = analog_mixture(source, det)
            mu, sd = mix.mean(), math.sqrt(mix.variance())
            grid = (np.linspace(mu - 6 * sd, mu + 6 * sd, size or 201) if settings is None
                    else np.asarray(settings, dtype=float))

            def model(x, _mix=mix):
                return float(np.clip(2 * _mix.cdf(x)[0] - 1, -1, 1))
        values = np.array([model(float(x)) for x in grid])
    if np.any(np.diff(grid) <= 0):
        raise ValueError("calibration settings must be strictly increasing")
    span = values[-1] - values[0]
    if span == 0:
        raise NonMonotoneCurve(kind, (0, len(grid) - 1), (float(values[0]), float(values[-1])))
    orientation = 1 if span > 0 else -1
    _check_monotone(kind, values, orientation)
    return BiasCurve(kind, np.asarray(grid), values, orientation, model)


@dataclass(frozen=True)
class Inversion:
    setting: float
    mean: float
    saturated: bool


def invert_mean(target: float, curve: BiasCurve, refine: bool = True) -> Inversion:
    """Control setting whose mean state equals ``target``.

    Piecewise-linear interpolation between grid points (exact at grid
    points, nearest step for digital thresholds). For continuous knobs with
    a forward model the interpolated setting is polished with a bracketed
    root solve inside the same grid segment.
    """
    vals = curve.normalized()
    t = target * curve.orientation
    s = curve.settings
    if t < vals[0] or t > vals[-1]:
        edge = 0 if t < vals[0] else len(vals) - 1
        return Inversion(_setting(curve, s[edge]), float(curve.values[edge]), True)
    hi = int(np.searchsorted(vals, t, "left"))
    if vals[hi] == t:
        return Inversion(_setting(curve, s[hi]), float(curve.values[hi]), False)
    lo = hi - 1
    frac = (t - vals[lo]) / (vals[hi] - vals[lo])
    if curve.discrete:
        k = hi if frac >= 0.5 else lo
        return Inversion(_setting(curve, s[k]), float(curve.values[k]), False)
    x = s[lo] + frac * (s[hi] - s[lo])
    if refine and curve.model is not None:
        x = optimize.brentq(lambda v: curve.model(v) - target, s[lo], s[hi],
                            xtol=1e-15 * max(1.0, abs(s[hi] - s[lo])), rtol=4 * np.finfo(float).eps)
    mean = curve.model(x) if curve.model is not None else target
    return Inversion(float(x), float(mean), False)


def _setting(curve: BiasCurve, x):
    return int(x) if curve.discrete else float(x)


def invert_bias(target_I: float, beta: float, curve: BiasCurve, refine: bool = True) -> Inversion:
    """Setting realising the p-bit response tanh(beta * I) on photonic hardware."""
    target = math.copysign(1.0, target_I) if math.isinf(beta) and target_I != 0 else math.tanh(beta * target_I)
    return invert_mean(target, curve, refine)


def quantization_bound(curve: BiasCurve, target: float) -> float:
    """Largest possible error of a nearest-step digital inversion at ``target``."""
    vals = curve.normalized()
    t = target * curve.orientation
    hi = int(np.clip(np.searchsorted(vals, t, "left"), 1, len(vals) - 1))
    return 0.5 * float(vals[hi] - vals[hi - 1])


def empirical_mean_state(method: ControlMethod, source: PhotonicSource, det: DetectionParams,
                         samples: int, entropy, threshold: int | None = None) -> tuple[float, float]:
    """Monte Carlo estimate of the mean state and its standard error."""
    if method.kind == "splitting_ratio":
        v, _ = sample_analog(source.with_ratio(method.value), det, samples, entropy)
        c = center_threshold(det) if threshold is None else threshold
        m = state_from_code(det.digitize(v), c)
    elif method.kind == "comparator":
        v, _ = sample_analog(source, det, samples, entropy)
        m = np.where(v <= method.value, 1, -1)
    else:
        v, _ = sample_analog(source, det, samples, entropy)
        m = state_from_code(det.digitize(v), int(method.value))
    m = np.asarray(m, dtype=float)
    return float(m.mean()), float(m.std(ddof=1) / math.sqrt(samples))


def relative_error(measured, model):
    """Relative error of the +1 probability, (1 + m) / 2, against the model."""
    p_meas = (1 + np.asarray(measured, dtype=float)) / 2
    p_model = (1 + np.asarray(model, dtype=float)) / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(p_meas - p_model) / p_model
    return np.where(p_model == 0, np.where(p_meas == 0, 0.0, np.inf), rel)


def sigmoid_report(curve: BiasCurve) -> dict:
    """Qualitative sigmoid checks on a calibrated curve.

    Reports monotonicity, endpoint saturation, zero crossing, the odd
    symmetry error about that crossing, the slope-matched effective beta and
    the largest deviation from tanh(beta_eff * x).
    """
    vals = curve.normalized()
    s = curve.settings.astype(float)
    x0 = invert_mean(0.0, curve).setting
    d = np.linspace(0, min(x0 - s[0], s[-1] - x0), 41)[1:]
    up = np.interp(x0 + d, s, vals)
    down = np.interp(x0 - d, s, vals)
    k = int(np.clip(np.searchsorted(s, x0), 1, len(s) - 1))
    slope = (vals[k] - vals[k - 1]) / (s[k] - s[k - 1])
    if curve.model is not None:
        h = 1e-6 * (s[-1] - s[0])
        slope = curve.orientation * (curve.model(x0 + h) - curve.model(x0 - h)) / (2 * h)
    beta_eff = float(slope)
    dev = float(np.max(np.abs(vals - np.tanh(beta_eff * (s - x0)))))
    return {
        "kind": curve.kind,
        "monotone": bool(np.all(np.diff(vals) >= -1e-12)),
        "low_end": float(vals[0]),
        "high_end": float(vals[-1]),
        "zero_crossing": float(x0),
        "odd_symmetry_error": float(np.max(np.abs(up + down))) if d.size else 0.0,
        "beta_eff": beta_eff,
        "tanh_deviation": dev,
    }


def curve_to_csv(curve: BiasCurve, empirical=None, generated_by: str = "sdipbit") -> str:
    """CSV columns: setting, mean_state, analytic_mean, relative_error.

    ``mean_state`` is the measured value when ``empirical`` is given,
    otherwise the calibrated value itself.
    """
    measured = curve.values if empirical is None else np.asarray(empirical, dtype=float)
    rel = relative_error(measured, curve.values)
    buf = io.StringIO()
    buf.write(f"# generated-by {generated_by}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["setting", "mean_state", "analytic_mean", "relative_error"])
    for x, m, a, e in zip(curve.settings, measured, curve.values, rel):
        writer.writerow([repr(x.item()), repr(float(m)), repr(float(a)), repr(float(e))])
    return buf.getvalue()


@dataclass
class GBitSamples:
    values: np.ndarray
    mean: float
    std: float
    saturation_fraction: float
    warning: str | None = None


def gbit_sample(source: PhotonicSource, det: DetectionParams, entropy, count: int = 1) -> GBitSamples:
    """Continuous readout: bin midpoint V_min + (j + 0.5) delta_V of each sampled code."""
    v, _ = sample_analog(source, det, count, as_stream(entropy))
    codes = det.digitize(v)
    values = det.V_min + (codes + 0.5) * det.delta_V
    sat = float(np.mean((codes == 0) | (codes == det.J - 1)))
    note = None
    if sat > 0.01:
        note = f"{sat:.1%} of g-bit samples fell in saturated ADC end bins"
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    std = float(values.std(ddof=1)) if count > 1 else 0.0
    return GBitSamples(values, float(values.mean()), std, sat, note)
