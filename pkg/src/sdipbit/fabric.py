"""Physical-to-logical p-bit topology.

Branched sources feed several physical p-bits from one laser; a demux plan
time-slices each physical p-bit's sample stream across many logical
p-bits, and :func:`run_network` drives a p-bit network from those
certified photonic samples.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .certification import CertificationParams, Reason, certify_batch
from .control import BiasCurve, calibrate, state_from_code
from .entropy import EntropyStream, as_stream
from .pbit import MAX_ENUMERATION, PBitNetwork, energy
from .photonics import DetectionParams, PhotonicSource, analog_mixture, center_threshold

FLIP_DTYPE = np.dtype([
    ("logical", np.int64),
    ("sweep", np.int32),
    ("physical", np.int32),
    ("sample", np.int64),
    ("code", np.int32),
    ("n_hat", np.int64),
    ("certified", np.bool_),
    ("state", np.int8),
    ("wall_ns", np.int64),
])


class SourceFaultError(RuntimeError):
    def __init__(self, fault: "SourceFault", run: "NetworkRun | None" = None):
        self.fault = fault
        self.run = run
        super().__init__(
            f"physical source {fault.physical} failed certification {fault.attempts} times in a row "
            f"(logical p-bit {fault.logical}, sweep {fault.sweep}, last sample {fault.sample}, "
            f"reasons {sorted(set(fault.reasons))})"
        )


class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True)
class SourceFault:
    physical: int
    logical: int
    sweep: int
    sample: int
    attempts: int
    reasons: tuple[str, ...]


# --- branched sources -------------------------------------------------------

@dataclass(frozen=True)
class BranchedSource:
    """One laser split into several beamsplitter/detector branches.

    ``source_power`` is the mean photon count per sample window at the
    laser; ``intensity_noise`` is the relative std of a common-mode power
    fluctuation shared by all branches.
    """

    source_power: float
    fractions: tuple[float, ...]
    ratio: float = 0.5
    intensity_noise: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.fractions, dtype=float)
        if f.size < 1 or np.any(f < 0):
            raise ValueError("split fractions must be nonnegative")
        if f.sum() > 1 + 1e-12:
            raise ValueError(f"split fractions sum to {f.sum():.6g} > 1")
        if self.source_power < 0:
            raise ValueError("source power must be nonnegative")

    @property
    def branches(self) -> int:
        return len(self.fractions)

    def sources(self) -> list[PhotonicSource]:
        return [PhotonicSource.poisson(self.source_power * f, self.ratio) for f in self.fractions]


def branch(source_power: float, fractions, ratio: float = 0.5, intensity_noise: float = 0.0) -> BranchedSource:
    return BranchedSource(float(source_power), tuple(float(f) for f in fractions), ratio, intensity_noise)


@dataclass
class BranchSamples:
    photons: np.ndarray
    voltages: np.ndarray
    codes: np.ndarray
    sum_voltages: np.ndarray
    n_hat: np.ndarray
    certified: np.ndarray
    states: np.ndarray


def sample_branches(branched: BranchedSource, det: DetectionParams, cert: CertificationParams, count: int,
                    entropy, shared_entropy: bool = False, threshold: int | None = None) -> BranchSamples:
    """Simulate ``count`` sample windows of every branch (arrays shaped (B, count)).

    Photons are routed to branches by a multinomial split of the laser
    output; each branch then has its own beamsplitter and electronics
    noise. ``shared_entropy=True`` is a deliberate bug: all branches replay
    one entropy stream.
    """
    stream = as_stream(entropy)
    if not isinstance(stream, EntropyStream):
        raise TypeError("branch sampling needs a generator-backed entropy stream")
    laser, rest = stream.spawn(2)
    b = branched.branches
    power = np.full(count, branched.source_power)
    if branched.intensity_noise > 0:
        k = 1.0 / branched.intensity_noise**2
        power = power * laser.gamma(k, 1.0 / k, count)
    total = laser.poisson(power)
    f = np.asarray(branched.fractions, dtype=float)
    pvals = np.append(f, max(0.0, 1.0 - f.sum()))
    split = laser.multinomial(total, pvals).T[:b]
    streams = rest.spawn_shared(b) if shared_entropy else rest.spawn(b)
    c = center_threshold(det) if threshold is None else threshold
    out = {name: np.empty((b, count), dtype=dt) for name, dt in (
        ("voltages", float), ("codes", np.int64), ("sum_voltages", float),
        ("n_hat", np.int64), ("certified", bool), ("states", np.int8))}
    for i, s in enumerate(streams):
        n = split[i]
        # Gaussian draws first: their stream position does not depend on n
        noise = det.sigma_D * s.normal(count)
        sums = cert.alpha_S * n + cert.sigma_S * s.normal(count)
        reflected = s.binomial(n, branched.ratio)
        v = det.alpha_D * (2 * reflected - n) + noise
        codes = det.digitize(v)
        n_hat, ok, _ = certify_batch(codes, sums, cert, det)
        out["voltages"][i], out["codes"][i], out["sum_voltages"][i] = v, codes, sums
        out["n_hat"][i], out["certified"][i] = n_hat, ok
        out["states"][i] = state_from_code(codes, c)
    return BranchSamples(photons=split, **out)


@dataclass
class IndependenceReport:
    rho: np.ndarray
    max_abs_rho: float
    pair_counts: np.ndarray
    bound: float

    @property
    def passed(self) -> bool:
        return self.max_abs_rho < self.bound


def _stratified_residual(m: np.ndarray, n_hat: np.ndarray, strata: int) -> np.ndarray:
    qs = np.unique(np.quantile(n_hat, np.linspace(0, 1, strata + 1)[1:-1]))
    group = np.searchsorted(qs, n_hat, side="right")
    sums = np.bincount(group, weights=m, minlength=qs.size + 1)
    counts = np.bincount(group, minlength=qs.size + 1)
    return m - (sums / np.maximum(counts, 1))[group]


def conditional_independence_check(branched: BranchedSource, samples: int, det: DetectionParams,
                                   cert: CertificationParams, entropy=None, *, shared_entropy: bool = False,
                                   strata: int = 20, bound: float = 0.01, threshold: int | None = None,
                                   min_pairs: int = 10_000) -> IndependenceReport:
    """Pairwise correlation of branch states after conditioning on each branch's n_hat.

    Each branch's certified states are centred within quantile strata of
    its own photon-number estimate; the report holds the Pearson
    correlation of those residuals over jointly certified windows.
    """
    if samples < 100_000:
        raise ValueError("conditional independence check needs at least 1e5 samples")
    data = sample_branches(branched, det, cert, samples, entropy, shared_entropy, threshold)
    b = branched.branches
    resid = np.zeros((b, samples))
    for i in range(b):
        ok = data.certified[i]
        if ok.any():
            resid[i, ok] = _stratified_residual(data.states[i, ok].astype(float), data.n_hat[i, ok], strata)
    rho = np.eye(b)
    counts = np.zeros((b, b), dtype=np.int64)
    for i in range(b):
        counts[i, i] = data.certified[i].sum()
        for j in range(i + 1, b):
            mask = data.certified[i] & data.certified[j]
            counts[i, j] = counts[j, i] = mask.sum()
            if counts[i, j] < min_pairs:
                raise InsufficientSamples(
                    f"branches {i} and {j} share only {counts[i, j]} certified samples (< {min_pairs})")
            x, y = resid[i, mask], resid[j, mask]
            sx, sy = x.std(), y.std()
            r = 0.0 if sx == 0 or sy == 0 else float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))
            rho[i, j] = rho[j, i] = r
    off = np.abs(rho[~np.eye(b, dtype=bool)]) if b > 1 else np.array([0.0])
    return IndependenceReport(rho, float(off.max()), counts, bound)


# --- demultiplexing ----------------------------------------------------------

@dataclass(frozen=True)
class DemuxPlan:
    """Round-robin assignment: logical i -> (physical i mod P, slot i div P)."""

    physical_count: int
    logical_count: int

    def __post_init__(self):
        if self.physical_count < 1:
            raise ValueError("need at least one physical p-bit")
        if self.logical_count < self.physical_count:
            raise ValueError(f"logical count {self.logical_count} < physical count {self.physical_count}")

    @property
    def slot_period(self) -> int:
        return math.ceil(self.logical_count / self.physical_count)

    @property
    def padding(self) -> int:
        return self.slot_period * self.physical_count - self.logical_count

    def physical_of(self, logical):
        return np.asarray(logical) % self.physical_count

    def slot_of(self, logical):
        return np.asarray(logical) // self.physical_count

    def assignment(self) -> np.ndarray:
        """(L, 2) array of (physical, slot) per logical p-bit."""
        i = np.arange(self.logical_count)
        return np.stack([self.physical_of(i), self.slot_of(i)], axis=1)

    def logical_of(self, physical: int, slot: int) -> int | None:
        i = slot * self.physical_count + physical
        return i if i < self.logical_count else None

    def logical_per_physical(self) -> np.ndarray:
        return np.bincount(self.physical_of(np.arange(self.logical_count)), minlength=self.physical_count)

    def to_json(self) -> str:
        return json.dumps({"version": 1, "physical_count": self.physical_count,
                           "logical_count": self.logical_count, "slot_period": self.slot_period,
                           "scheme": "round_robin"})

    @classmethod
    def from_json(cls, text: str) -> "DemuxPlan":
        d = json.loads(text)
        if d.get("scheme", "round_robin") != "round_robin":
            raise ValueError(f"unsupported demux scheme {d['scheme']!r}")
        return cls(int(d["physical_count"]), int(d["logical_count"]))


def plan_demux(physical: int, logical: int) -> DemuxPlan:
    return DemuxPlan(int(physical), int(logical))


class PhysicalSource:
    """Sample stream of one physical photonic p-bit, with certification attached.

    Photon numbers, electronics noise and sum-channel estimates are drawn in
    blocks; the beamsplitter outcome is drawn per sample when the splitting
    ratio is the control knob. ``dropout_at`` injects a source fault: from
    that sample index on, no photons reach the detectors.
    """

    def __init__(self, source: PhotonicSource, det: DetectionParams, cert: CertificationParams, entropy,
                 dropout_at: int | None = None, block: int = 8192):
        self.source = source
        self.det = det
        self.cert = cert
        self.entropy = as_stream(entropy)
        self.dropout_at = dropout_at
        self.block = block
        self.emitted = 0
        self._edges = det.edges.tolist()
        self._top = det.J - 1
        self._base = 0
        self._fill(0)

    def _fill(self, start: int) -> None:
        count = self.block
        if self.source.kind == "fock":
            n = np.full(count, int(self.source.photons), dtype=np.int64)
        else:
            n = np.asarray(self.entropy.poisson(self.source.photons, size=count), dtype=np.int64)
        if self.dropout_at is not None:
            n[np.arange(start, start + count) >= self.dropout_at] = 0
        reflected = np.asarray(self.entropy.binomial(n, self.source.ratio, size=count), dtype=np.int64)
        noise = self.det.sigma_D * self.entropy.normal(count)
        v = self.det.alpha_D * (2 * reflected - n) + noise
        sums = self.cert.alpha_S * n + self.cert.sigma_S * self.entropy.normal(count)
        n_hat, _, _ = certify_batch(None, sums, self.cert, None)
        self._base = start
        self._n, self._noise, self._v = n.tolist(), noise.tolist(), v.tolist()
        self._codes = self.det.digitize(v).tolist()
        self._n_hat = n_hat.tolist()

    def _slot(self) -> int:
        k = self.emitted - self._base
        if k >= self.block:
            self._fill(self.emitted)
            k = 0
        return k

    def _gate(self, code: int, n_hat: int, check_range: bool):
        if n_hat < self.cert.n_min:
            return False, int(Reason.BELOW_FLOOR)
        if check_range and self.cert.reject_saturated and (code == 0 or code == self._top):
            return False, int(Reason.OUT_OF_RANGE)
        return True, int(Reason.OK)

    def next(self, check_range: bool = True):
        """Emit the next sample: (index, code, voltage, n_hat, certified, reason).

        ``check_range=False`` gates on the photon floor only (comparator
        readout, which never goes through the ADC).
        """
        k = self._slot()
        idx = self.emitted
        self.emitted += 1
        code, n_hat = self._codes[k], self._n_hat[k]
        ok, reason = self._gate(code, n_hat, check_range)
        return idx, code, self._v[k], n_hat, ok, reason

    def next_at_ratio(self, ratio: float):
        """Emit the next sample with the beamsplitter set to ``ratio``."""
        k = self._slot()
        idx = self.emitted
        self.emitted += 1
        n = self._n[k]
        reflected = int(self.entropy.binomial(n, min(max(ratio, 0.0), 1.0)))
        v = self.det.alpha_D * (2 * reflected - n) + self._noise[k]
        code = bisect_right(self._edges, v)
        n_hat = self._n_hat[k]
        ok, reason = self._gate(code, n_hat, True)
        return idx, code, v, n_hat, ok, reason


def network_curve(kind: str, source: PhotonicSource, det: DetectionParams, size: int = 401,
                  width: float = 6.0) -> BiasCurve:
    """Calibration tuned for driving a network: a dense grid over the sigmoid's active region.

    Splitting ratios span r = 0.5 +- ``width`` analog standard deviations
    (converted to ratio units), comparator voltages the mean +- ``width``
    standard deviations; digital thresholds always use every code.
    """
    if kind == "digital_threshold":
        return calibrate(kind, source, det)
    mix = analog_mixture(source.with_ratio(0.5), det)
    mu, sd = mix.mean(), math.sqrt(mix.variance())
    if kind == "comparator":
        grid = np.linspace(mu - width * sd, mu + width * sd, size)
    else:
        n = max(float(source.photons), 1.0)
        dr = min(0.5, width * sd / (2 * det.alpha_D * n))
        grid = np.linspace(0.5 - dr, 0.5 + dr, size)
    return calibrate(kind, source, det, settings=grid)


def _fast_inverter(curve: BiasCurve):
    """Closure mapping a target mean state to a setting, as ``invert_mean(..., refine=False)``."""
    vals = curve.normalized().tolist()
    settings = curve.settings.tolist()
    o = curve.orientation
    last = len(vals) - 1
    discrete = curve.discrete
    lo_val, hi_val = vals[0], vals[-1]

    def invert(target: float):
        t = target * o
        if t <= lo_val:
            return settings[0]
        if t >= hi_val:
            return settings[last]
        hi = bisect_left(vals, t)
        if vals[hi] == t:
            return settings[hi]
        lo = hi - 1
        frac = (t - vals[lo]) / (vals[hi] - vals[lo])
        if discrete:
            return settings[hi] if frac >= 0.5 else settings[lo]
        return settings[lo] + frac * (settings[hi] - settings[lo])

    return invert


@dataclass
class NetworkRun:
    flips: np.ndarray
    consumed: list[np.ndarray]
    committed: list[np.ndarray]
    emitted: list[int]
    faults: list[SourceFault]
    state: np.ndarray
    sweeps_done: int
    histogram: np.ndarray | None = None
    sweep_energies: np.ndarray | None = None
    best_energy: float | None = None
    best_state: np.ndarray | None = None
    wall_seconds: float = 0.0
    attempts: int = 0
    rejected: int = 0
    extra: dict = field(default_factory=dict)

    def verify_conservation(self) -> bool:
        """Each physical source's samples were consumed in order, without duplication or loss."""
        return all(np.array_equal(c, np.arange(e)) for c, e in zip(self.consumed, self.emitted))

    @property
    def certified_fraction(self) -> float:
        return 1.0 - self.rejected / self.attempts if self.attempts else 1.0

    def flips_to_csv(self, generated_by: str = "sdipbit") -> str:
        buf = io.StringIO()
        buf.write(f"# generated-by {generated_by}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(FLIP_DTYPE.names)
        for row in self.flips.tolist():
            writer.writerow([int(x) for x in row])
        return buf.getvalue()

    def flips_to_bytes(self) -> bytes:
        return self.flips.tobytes()


def build_sources(source: PhotonicSource, det: DetectionParams, cert: CertificationParams, count: int,
                  entropy, dropout: dict[int, int] | None = None) -> list[PhysicalSource]:
    """One independently seeded :class:`PhysicalSource` per physical p-bit."""
    stream = as_stream(entropy)
    streams = stream.spawn(count)
    dropout = dropout or {}
    return [PhysicalSource(source, det, cert, s, dropout.get(p)) for p, s in enumerate(streams)]


def run_network(plan: DemuxPlan, network: PBitNetwork, controls, det: DetectionParams,
                cert: CertificationParams, sweeps: int, *, sources: Sequence[PhysicalSource],
                betas=None, max_retries: int = 8, on_fault: str = "abort", order: str = "sweep",
                entropy=None, histogram: bool = False, track_energy: bool = False,
                record: bool = True) -> NetworkRun:
    """Drive ``network`` with certified photonic samples routed through ``plan``.

    For every logical p-bit in schedule order: compute its bias from the
    current neighbour states, invert the calibrated control curve for the
    target mean tanh(beta * I), take certified samples from its physical
    source (rejected samples are retried up to ``max_retries`` times), turn
    the sample into a state with the chosen control, and commit.

    ``on_fault="abort"`` raises :class:`SourceFaultError` on retry
    exhaustion; ``"stall"`` freezes the faulty physical source's logical
    p-bits and lets the rest of the network proceed. ``order="free"``
    updates uniformly random logical p-bits (``entropy`` required) instead
    of strict sweeps.
    """
    if network.size != plan.logical_count:
        raise ValueError(f"network size {network.size} != logical count {plan.logical_count}")
    if len(sources) != plan.physical_count:
        raise ValueError(f"need {plan.physical_count} physical sources, got {len(sources)}")
    if on_fault not in ("abort", "stall"):
        raise ValueError(f"unknown fault policy {on_fault!r}")
    if order not in ("sweep", "free"):
        raise ValueError(f"unknown update order {order!r}")
    curves = list(controls) if isinstance(controls, (list, tuple)) else [controls] * plan.physical_count
    if len(curves) != plan.physical_count:
        raise ValueError("need one control curve per physical source")
    kinds = {c.kind for c in curves}
    if len(kinds) != 1:
        raise ValueError("all physical sources must use the same control method")
    kind = kinds.pop()
    inverters = [_fast_inverter(c) for c in curves]
    center = center_threshold(det)
    comparator = kind == "comparator"
    if histogram and network.size > MAX_ENUMERATION:
        raise ValueError("histogram recording requires a network of at most 24 p-bits")

    L, P = plan.logical_count, plan.physical_count
    betas = np.full(sweeps, network.beta) if betas is None else np.asarray(betas, dtype=float)
    w = network.weights
    nbrs = [(w.indices[w.indptr[i]:w.indptr[i + 1]].tolist(), w.data[w.indptr[i]:w.indptr[i + 1]].tolist())
            for i in range(L)]
    h = network.biases.tolist()
    m = network.state.astype(int).tolist()
    physical = [i % P for i in range(L)]
    faulted = [False] * P
    faults: list[SourceFault] = []
    consumed: list[list[int]] = [[] for _ in range(P)]
    committed: list[list[bool]] = [[] for _ in range(P)]
    cols: dict[str, list] = {name: [] for name in FLIP_DTYPE.names}
    hist = np.zeros(1 << L, dtype=np.int64) if histogram else None
    energies = [] if track_energy else None
    best_e, best_state = math.inf, None
    attempts = rejected = 0
    sched = as_stream(entropy) if order == "free" else None
    start = time.perf_counter()
    tanh, perf_ns = math.tanh, time.perf_counter_ns

    def finish(done):
        flips = np.empty(len(cols["logical"]), dtype=FLIP_DTYPE)
        for name in FLIP_DTYPE.names:
            flips[name] = cols[name]
        network.state[:] = m
        return NetworkRun(
            flips=flips,
            consumed=[np.asarray(c, dtype=np.int64) for c in consumed],
            committed=[np.asarray(c, dtype=bool) for c in committed],
            emitted=[s.emitted for s in sources],
            faults=faults,
            state=network.state.copy(),
            sweeps_done=done,
            histogram=hist,
            sweep_energies=np.asarray(energies) if track_energy else None,
            best_energy=best_e if track_energy else None,
            best_state=best_state,
            wall_seconds=time.perf_counter() - start,
            attempts=attempts,
            rejected=rejected,
        )

    for sweep in range(sweeps):
        beta = float(betas[sweep])
        schedule = range(L) if sched is None else (sched.uniform(L) * L).astype(np.int64).tolist()
        for i in schedule:
            p = physical[i]
            if faulted[p]:
                continue
            idx_list, w_list = nbrs[i]
            field_value = h[i]
            for j, wij in zip(idx_list, w_list):
                field_value += wij * m[j]
            if math.isinf(beta):
                target = (field_value > 0) - (field_value < 0)
            else:
                target = tanh(beta * field_value)
            setting = inverters[p](target)
            src = sources[p]
            tries = 0
            reasons = []
            while True:
                if kind == "splitting_ratio":
                    idx, code, v, n_hat, ok, reason = src.next_at_ratio(setting)
                else:
                    idx, code, v, n_hat, ok, reason = src.next(not comparator)
                attempts += 1
                consumed[p].append(idx)
                committed[p].append(ok)
                if ok:
                    break
                rejected += 1
                tries += 1
                reasons.append(Reason(reason).label)
                if tries > max_retries:
                    fault = SourceFault(p, i, sweep, idx, tries, tuple(reasons))
                    faults.append(fault)
                    if on_fault == "abort":
                        raise SourceFaultError(fault, finish(sweep))
                    faulted[p] = True
                    break
            if faulted[p]:
                continue
            if kind == "splitting_ratio":
                new = 1 if code <= center else -1
            elif comparator:
                new = 1 if v <= setting else -1
            else:
                new = 1 if code <= setting else -1
            m[i] = new
            if record:
                cols["logical"].append(i)
                cols["sweep"].append(sweep)
                cols["physical"].append(p)
                cols["sample"].append(idx)
                cols["code"].append(code)
                cols["n_hat"].append(n_hat)
                cols["certified"].append(ok)
                cols["state"].append(new)
                cols["wall_ns"].append(perf_ns())
        if hist is not None:
            hist[sum(1 << q for q in range(L) if m[q] > 0)] += 1
        if track_energy:
            e = energy(network, np.asarray(m, dtype=np.int8))
            energies.append(e)
            if e < best_e:
                best_e, best_state = e, np.asarray(m, dtype=np.int8)
    return finish(sweeps)
