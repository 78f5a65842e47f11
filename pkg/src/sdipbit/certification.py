"""Sum-channel photon-number estimate and the per-sample acceptance gate."""

from __future__ import annotations

import csv
import enum
import io
from collections import deque
from dataclasses import dataclass

import numpy as np

from .entropy import as_stream
from .photonics import DetectionParams


class Reason(enum.IntEnum):
    OK = 0
    BELOW_FLOOR = 1
    OUT_OF_RANGE = 2

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class CertificationParams:
    """Sum-channel gain and noise, photon floor and one-sided z-score."""

    alpha_S: float
    sigma_S: float
    n_min: int
    z: float = 3.0
    reject_saturated: bool = True

    def __post_init__(self):
        if not self.alpha_S > 0 or not self.sigma_S > 0:
            raise ValueError("alpha_S and sigma_S must be > 0")
        if self.n_min < 0 or self.z < 0:
            raise ValueError("n_min and z must be >= 0")

    @classmethod
    def for_photons(cls, n: float, alpha_S: float = 1.0, rel_noise: float = 0.01,
                    floor_fraction: float = 0.5, z: float = 3.0) -> "CertificationParams":
        """Floor at ``floor_fraction`` of the nominal photon number ``n``."""
        return cls(alpha_S, max(rel_noise * n, 1e-3) * alpha_S, int(floor_fraction * n), z)


@dataclass(frozen=True)
class CertifiedSample:
    code: int
    n_hat: int
    certified: bool
    reason: Reason


def estimate_n(sum_voltage, params: CertificationParams):
    """Conservative photon-number lower bound from the sum-channel voltage.

    n_hat = max(0, floor((V_sum - z * sigma_S) / alpha_S)).
    """
    x = (np.asarray(sum_voltage, dtype=float) - params.z * params.sigma_S) / params.alpha_S
    # tolerance absorbs rounding of exact multiples of alpha_S
    n_hat = np.maximum(0, np.floor(x + 1e-9)).astype(np.int64)
    return int(n_hat) if n_hat.ndim == 0 else n_hat


def estimate_n_block(sum_voltages, params: CertificationParams) -> int:
    """Block estimate: mean sum voltage with the noise margin shrunk by sqrt(B)."""
    v = np.asarray(sum_voltages, dtype=float)
    x = (v.mean() - params.z * params.sigma_S / np.sqrt(v.size)) / params.alpha_S
    return int(max(0, np.floor(x + 1e-9)))


def sample_sum_voltage(photons, params: CertificationParams, entropy):
    """Sum-channel reading V ~ N(alpha_S n, sigma_S^2) given the true photon counts."""
    n = np.asarray(photons, dtype=float)
    return params.alpha_S * n + params.sigma_S * as_stream(entropy).normal(n.shape or None)


def certify_batch(codes, sum_voltages, params: CertificationParams, det: DetectionParams | None,
                  block: int | None = None):
    """Vectorised gate. Returns ``(n_hat, certified, reason)`` arrays.

    ``codes=None`` or ``det=None`` skips the saturation check (comparator
    readout has no ADC range). ``block`` switches to per-block estimation:
    every sample in a block of that length shares the block's n_hat.
    """
    sums = np.asarray(sum_voltages, dtype=float)
    if block:
        n_hat = np.empty(sums.size, dtype=np.int64)
        for lo in range(0, sums.size, block):
            n_hat[lo:lo + block] = estimate_n_block(sums[lo:lo + block], params)
    else:
        n_hat = np.atleast_1d(estimate_n(sums, params))
    reason = np.full(n_hat.shape, Reason.OK, dtype=np.int8)
    if codes is not None and det is not None and params.reject_saturated:
        c = np.asarray(codes)
        reason[(c == 0) | (c == det.J - 1)] = Reason.OUT_OF_RANGE
    reason[n_hat < params.n_min] = Reason.BELOW_FLOOR
    return n_hat, reason == Reason.OK, reason


def certify(sample_code: int, sum_voltage: float, params: CertificationParams,
            det: DetectionParams) -> CertifiedSample:
    """Accept a sample iff n_hat >= n_min and (optionally) its code is not saturated."""
    n_hat, ok, reason = certify_batch([sample_code], [sum_voltage], params, det)
    return CertifiedSample(int(sample_code), int(n_hat[0]), bool(ok[0]), Reason(int(reason[0])))


def _flags(stream) -> np.ndarray:
    if isinstance(stream, np.ndarray):
        return stream.astype(bool)
    return np.array([s.certified if isinstance(s, CertifiedSample) else bool(s) for s in stream], dtype=bool)


def certification_rate(stream, window: int) -> np.ndarray:
    """Rolling certified fraction; entry i covers samples max(0, i-window+1)..i."""
    if window < 1:
        raise ValueError("window must be >= 1")
    flags = _flags(stream)
    if flags.size == 0:
        raise ValueError("cannot compute a certification rate over an empty stream")
    c = np.concatenate([[0], np.cumsum(flags)])
    idx = np.arange(1, flags.size + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


class CertificationMonitor:
    """Single-writer rolling monitor for one physical p-bit."""

    def __init__(self, window: int):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._buf: deque[bool] = deque(maxlen=window)
        self._count = 0

    def push(self, certified: bool) -> float:
        if len(self._buf) == self.window and self._buf[0]:
            self._count -= 1
        self._buf.append(bool(certified))
        self._count += bool(certified)
        return self.rate

    @property
    def rate(self) -> float:
        if not self._buf:
            raise ValueError("no samples observed yet")
        return self._count / len(self._buf)


def trace_to_csv(n_hat, certified, reason, generated_by: str = "sdipbit") -> str:
    """CSV columns: index, n_hat, certified, reason."""
    buf = io.StringIO()
    buf.write(f"# generated-by {generated_by}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", "n_hat", "certified", "reason"])
    for i, (n, ok, why) in enumerate(zip(n_hat, certified, reason)):
        writer.writerow([i, int(n), int(bool(ok)), Reason(int(why)).label])
    return buf.getvalue()
