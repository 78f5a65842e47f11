"""Annealing engines, the solve driver and flip-rate benchmarking."""

from __future__ import annotations

import json
import subprocess
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .. import __version__
from ..certification import CertificationParams
from ..entropy import EntropyStream
from ..fabric import build_sources, network_curve, plan_demux, run_network
from ..pbit import PBitNetwork, energy, run_sweeps
from ..photonics import DetectionParams, PhotonicSource, auto_range
from .problem import IsingProblem


@lru_cache(maxsize=1)
def engine_version() -> str:
    """git-describe-style version of the running code, falling back to the package version."""
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"],
                             cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            desc = out.stdout.strip()
            return desc if desc.startswith("v") else f"v{__version__}-g{desc}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


@dataclass
class RunOutcome:
    flips: int
    attempts: int
    rejected: int
    best_energy: float
    best_state: np.ndarray
    final_state: np.ndarray
    histogram: np.ndarray | None = None
    samples_per_physical: list[int] | None = None


class IdealEngine:
    """Pseudo-random entropy driving the compiled sequential-Gibbs kernel."""

    name = "ideal"

    def describe(self) -> dict:
        return {"name": self.name}

    def run(self, network: PBitNetwork, betas: np.ndarray, seed, histogram: bool = False) -> RunOutcome:
        res = run_sweeps(network, len(betas), EntropyStream(seed), betas=betas, histogram=histogram)
        flips = res.flips
        return RunOutcome(flips, flips, 0, res.best_energy, res.best_state.copy(), network.state.copy(),
                          res.histogram)


@dataclass
class PhotonicEngine:
    """Certified photonic samples, demultiplexed from ``physical`` sources.

    Defaults describe one operating point: a Fock input of ``photons``
    photons split evenly, electronics noise at half the shot noise and an
    auto-ranged ``bit_depth``-bit ADC, certified against half the nominal
    photon number.
    """

    physical: int = 4
    kind: str = "digital_threshold"
    photons: int = 10_000
    bit_depth: int = 12
    det: DetectionParams | None = None
    cert: CertificationParams | None = None
    max_retries: int = 8
    name: str = field(default="photonic", init=False)

    def __post_init__(self):
        self.source = PhotonicSource.fock(self.photons, 0.5)
        if self.det is None:
            self.det = auto_range(self.source, 1.0, 0.5 * np.sqrt(self.photons), self.bit_depth)
        if self.cert is None:
            self.cert = CertificationParams.for_photons(self.photons)
        self.curve = network_curve(self.kind, self.source, self.det)

    def describe(self) -> dict:
        return {"name": self.name, "physical": self.physical, "control": self.kind, "photons": self.photons,
                "bit_depth": self.det.bit_depth, "sigma_D": self.det.sigma_D, "alpha_D": self.det.alpha_D,
                "n_min": self.cert.n_min, "max_retries": self.max_retries}

    def run(self, network: PBitNetwork, betas: np.ndarray, seed, histogram: bool = False) -> RunOutcome:
        plan = plan_demux(min(self.physical, network.size), network.size)
        sources = build_sources(self.source, self.det, self.cert, plan.physical_count, EntropyStream(seed))
        run = run_network(plan, network, self.curve, self.det, self.cert, len(betas), sources=sources,
                          betas=betas, max_retries=self.max_retries, histogram=histogram, track_energy=True,
                          record=False)
        flips = run.attempts - run.rejected
        return RunOutcome(flips, run.attempts, run.rejected, float(run.best_energy), run.best_state,
                          run.state.copy(), run.histogram, run.emitted)


@dataclass
class BenchReport:
    flips_total: int
    certified_fraction: float
    wall_seconds: float
    flips_per_second: float
    best_energy: float
    best_state: list[int]
    seed: int
    engine: dict
    version: str
    sweeps: int = 0
    replicas: int = 1
    replica_best_energies: list[float] = field(default_factory=list)
    samples_per_physical_per_second: float | None = None

    TIMING_FIELDS = ("wall_seconds", "flips_per_second", "samples_per_physical_per_second")

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "flips_total": self.flips_total,
            "certified_fraction": self.certified_fraction,
            "wall_seconds": self.wall_seconds,
            "flips_per_second": self.flips_per_second,
            "best_energy": self.best_energy,
            "best_state": list(self.best_state),
            "sweeps": self.sweeps,
            "replicas": self.replicas,
            "replica_best_energies": list(self.replica_best_energies),
            "samples_per_physical_per_second": self.samples_per_physical_per_second,
            "provenance": {"seed": self.seed, "engine": self.engine, "version": self.version},
        }
        if not timing:
            for k in self.TIMING_FIELDS:
                d.pop(k)
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True)


def replica_seeds(seed: int, replicas: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(replicas)


def solve(problem: IsingProblem, engine=None, sweeps: int = 1000, *, replicas: int = 1,
          seed: int | None = None) -> BenchReport:
    """Anneal ``problem`` along its beta schedule and report the best state seen.

    Each replica runs on a fresh network from the all-(+1) state with its
    own seed derived from ``seed`` (default: the problem's seed); results
    are merged in replica order, ties going to the lowest index.
    """
    engine = engine or IdealEngine()
    seed = problem.seed if seed is None else seed
    betas = problem.betas(sweeps)
    outcomes = []
    start = time.perf_counter()
    for child in replica_seeds(seed, replicas):
        outcomes.append(engine.run(problem.network(), betas, child))
    wall = time.perf_counter() - start
    best = min(range(replicas), key=lambda k: (outcomes[k].best_energy, k))
    best_state = outcomes[best].best_state
    # recompute from the state so the reported energy never drifts from it
    best_e = energy(problem.network(), best_state)
    flips = sum(o.flips for o in outcomes)
    attempts = sum(o.attempts for o in outcomes)
    rejected = sum(o.rejected for o in outcomes)
    return BenchReport(
        flips_total=flips,
        certified_fraction=1.0 - rejected / attempts if attempts else 1.0,
        wall_seconds=wall,
        flips_per_second=flips / wall if wall > 0 else float("inf"),
        best_energy=best_e,
        best_state=[int(x) for x in best_state],
        seed=int(seed),
        engine=engine.describe(),
        version=engine_version(),
        sweeps=sweeps,
        replicas=replicas,
        replica_best_energies=[float(o.best_energy) for o in outcomes],
    )


def bench_flips(engine, duration: float = 1.0, problem: IsingProblem | None = None, *,
                chunk_sweeps: int | None = None, seed: int = 0) -> BenchReport:
    """End-to-end flip throughput over at least ``duration`` seconds.

    A flip is the full update: bias accumulation, control inversion,
    sample generation, digitization, certification and commit. Only
    committed (certified) updates count.
    """
    from .problem import ring

    if duration < 1.0:
        raise ValueError("benchmark duration must be at least 1 s")
    problem = problem or ring(64, 0.5)
    network = problem.network()
    if chunk_sweeps is None:
        chunk_sweeps = 2000 if isinstance(engine, IdealEngine) else 5
    betas = np.full(chunk_sweeps, problem.schedule[0][1])
    flips = attempts = rejected = sweeps = 0
    samples = np.zeros(0, dtype=np.int64)
    best_e, best_state = float("inf"), network.state.copy()
    seeds = np.random.SeedSequence(seed)
    start = time.perf_counter()
    while True:
        out = engine.run(network, betas, seeds.spawn(1)[0])
        flips += out.flips
        attempts += out.attempts
        rejected += out.rejected
        sweeps += chunk_sweeps
        if out.samples_per_physical is not None:
            s = np.asarray(out.samples_per_physical)
            samples = s if samples.size == 0 else samples + s
        if out.best_energy < best_e:
            best_e, best_state = out.best_energy, out.best_state.copy()
        wall = time.perf_counter() - start
        if wall >= duration:
            break
    per_physical = float(samples.mean() / wall) if samples.size else None
    return BenchReport(
        flips_total=flips,
        certified_fraction=1.0 - rejected / attempts if attempts else 1.0,
        wall_seconds=wall,
        flips_per_second=flips / wall,
        best_energy=float(energy(network, best_state)),
        best_state=[int(x) for x in best_state],
        seed=seed,
        engine=engine.describe(),
        version=engine_version(),
        sweeps=sweeps,
        samples_per_physical_per_second=per_physical,
    )
