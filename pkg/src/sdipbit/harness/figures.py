"""Data series for the published plots, emitted as long-format CSV.

Every figure uses the columns ``series, parameter, x, y``; what ``x`` and
``y`` mean per series is listed in :data:`FIGURES`.
"""

from __future__ import annotations

import csv
import io
import math

import numpy as np

from ..control import calibrate, relative_error
from ..entropy import EntropyStream
from ..pbit import activation, pbit_output
from ..photonics import (DetectionParams, PhotonicSource, auto_range, center_threshold, sample_digitized,
                         sdi_output_pmf)

FIGURES = {
    "bias_effect": "mean: x=bias I, y=tanh(beta I); histogram: parameter=I, x=state, y=empirical frequency",
    "sdi_pmf": "pmf: parameter=sigma_D, x=ADC code, y=probability; bin_center: x=code, y=volts",
    "bs_bias": "pmf: parameter=r, x=code, y=probability; mean_state: x=r, y=mean state",
    "comp_bias": "pmf: parameter=V_bias, x=state, y=probability; mean_state: x=V_bias, y=mean state",
    "dig_bias": "pmf: x=code, y=probability; mean_state: x=threshold code, y=mean state",
    "exp_sigmoids": "histogram/sigmoid/relative_error: parameter=physical p-bit; model: x=threshold, y=mean state",
}

DEFAULTS = {"photons": 50, "alpha_D": 1.0, "sigma_D": 2.0, "bit_depth": 8, "samples": 100_000, "seed": 0,
            "beta": 1.0, "physical": 4}


def _operating_point(params: dict) -> tuple[PhotonicSource, DetectionParams]:
    source = PhotonicSource.fock(int(params["photons"]), 0.5)
    det = auto_range(source, params["alpha_D"], params["sigma_D"], int(params["bit_depth"]))
    return source, det


def _bias_effect(p: dict):
    beta = p["beta"]
    for x in np.linspace(-3, 3, 121):
        yield "mean", "", float(x), float(activation(x, beta))
    stream = EntropyStream(p["seed"])
    for i_bias in (-2.0, -1.0, 0.0, 1.0, 2.0):
        r = 2 * stream.uniform(p["samples"]) - 1
        states = pbit_output(i_bias, beta, r)
        frac_plus = float(np.mean(states == 1))
        yield "histogram", i_bias, -1, 1 - frac_plus
        yield "histogram", i_bias, 1, frac_plus


def _sdi_pmf(p: dict):
    n = int(p.get("photons_pmf", 10))
    alpha = p["alpha_D"]
    half = (n + 6) * alpha
    source = PhotonicSource.fock(n, 0.5)
    for sigma in p.get("sigmas", (0.2, 1.0)):
        det = DetectionParams(sigma, alpha, -half, half, int(p["bit_depth"]))
        pmf = sdi_output_pmf(source, det)
        for j, (prob, mid) in enumerate(zip(pmf, det.midpoints())):
            yield "pmf", sigma, j, float(prob)
            yield "bin_center", sigma, j, float(mid)


def _bs_bias(p: dict):
    source, det = _operating_point(p)
    for r in (0.3, 0.45, 0.5, 0.55, 0.7):
        for j, prob in enumerate(sdi_output_pmf(source.with_ratio(r), det)):
            yield "pmf", r, j, float(prob)
    curve = calibrate("splitting_ratio", source, det, size=201)
    for x, y in zip(curve.settings, curve.values):
        yield "mean_state", "", float(x), float(y)
    yield "threshold", "", center_threshold(det), ""


def _comp_bias(p: dict):
    source, det = _operating_point(p)
    curve = calibrate("comparator", source, det, size=201)
    mid = len(curve.settings) // 2
    for k in (mid - 30, mid, mid + 30):
        v, m = float(curve.settings[k]), float(curve.values[k])
        yield "pmf", v, 1, (1 + m) / 2
        yield "pmf", v, -1, (1 - m) / 2
    for x, y in zip(curve.settings, curve.values):
        yield "mean_state", "", float(x), float(y)


def _dig_bias(p: dict):
    source, det = _operating_point(p)
    for j, prob in enumerate(sdi_output_pmf(source, det)):
        yield "pmf", "", j, float(prob)
    curve = calibrate("digital_threshold", source, det)
    for x, y in zip(curve.settings, curve.values):
        yield "mean_state", "", int(x), float(y)


def _exp_sigmoids(p: dict):
    source, det = _operating_point(p)
    model = calibrate("digital_threshold", source, det)
    for x, y in zip(model.settings, model.values):
        yield "model", "", int(x), float(y)
    for k, stream in enumerate(EntropyStream(p["seed"]).spawn(int(p["physical"]))):
        codes = sample_digitized(source, det, int(p["samples"]), stream)
        hist = np.bincount(codes, minlength=det.J) / codes.size
        measured = np.clip(2 * np.cumsum(hist) - 1, -1, 1)
        rel = relative_error(measured, model.values)
        for j in range(det.J):
            yield "histogram", k, j, float(hist[j])
            yield "sigmoid", k, j, float(measured[j])
            if math.isfinite(rel[j]):
                yield "relative_error", k, j, float(rel[j])


_BUILDERS = {"bias_effect": _bias_effect, "sdi_pmf": _sdi_pmf, "bs_bias": _bs_bias, "comp_bias": _comp_bias,
             "dig_bias": _dig_bias, "exp_sigmoids": _exp_sigmoids}


def figure_rows(figure_id: str, params: dict | None = None) -> list[tuple]:
    if figure_id not in _BUILDERS:
        raise ValueError(f"unknown figure id {figure_id!r}; choose from {sorted(_BUILDERS)}")
    p = {**DEFAULTS, **(params or {})}
    return list(_BUILDERS[figure_id](p))


def emit_figure_data(figure_id: str, params: dict | None = None, generated_by: str = "sdipbit") -> str:
    rows = figure_rows(figure_id, params)
    buf = io.StringIO()
    buf.write(f"# generated-by {generated_by} figure={figure_id}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["series", "parameter", "x", "y"])
    writer.writerows(rows)
    return buf.getvalue()
