"""Ising problem files, Max-Cut encoding, instance generators and annealing schedules.

Problem schema (JSON, version 1)::

    {"version": 1, "n": N,
     "couplings": [[i, j, w], ...],     # 0-indexed, stored upper-triangle (i < j)
     "biases": [h_0, ..., h_{N-1}],
     "schedule": [[sweep, beta], ...],  # piecewise-linear breakpoints
     "seed": 0}

Energy convention: E(m) = -(sum_{i<j} W_ij m_i m_j + sum_i h_i m_i).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..pbit import PBitNetwork

SCHEMA_VERSION = 1


class ProblemError(ValueError):
    """Invalid problem file; ``errors`` lists every violation found."""

    def __init__(self, errors: list[str], source: str = "<problem>"):
        self.errors = list(errors)
        super().__init__(f"{source}: " + "; ".join(self.errors))


@dataclass
class IsingProblem:
    n: int
    couplings: list[tuple[int, int, float]]
    biases: list[float]
    schedule: list[tuple[int, float]] = field(default_factory=lambda: [(0, 1.0)])
    seed: int = 0
    edges: list[tuple[int, int, float]] | None = None

    def __post_init__(self):
        errors = validate(self.n, self.couplings, self.biases, self.schedule)
        if errors:
            raise ProblemError(errors)
        self.couplings = canonical_couplings(self.couplings)
        self.biases = [float(h) for h in self.biases]
        self.schedule = [(int(s), float(b)) for s, b in self.schedule]

    def network(self, beta: float | None = None) -> PBitNetwork:
        b = self.schedule[0][1] if beta is None else beta
        return PBitNetwork.from_couplings(self.n, self.couplings, self.biases, beta=b)

    def betas(self, sweeps: int) -> np.ndarray:
        return beta_schedule(self.schedule, sweeps)

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "n": self.n,
            "couplings": [[i, j, w] for i, j, w in self.couplings],
            "biases": list(self.biases),
            "schedule": [[s, b] for s, b in self.schedule],
            "seed": self.seed,
        }


def canonical_couplings(couplings) -> list[tuple[int, int, float]]:
    """Upper-triangle form, sorted, with mirrored duplicates merged (they must agree)."""
    merged: dict[tuple[int, int], float] = {}
    for i, j, w in couplings:
        key = (min(int(i), int(j)), max(int(i), int(j)))
        merged[key] = float(w)
    return [(i, j, merged[(i, j)]) for i, j in sorted(merged)]


def validate(n, couplings, biases, schedule) -> list[str]:
    """Every invariant violation as a human-readable message."""
    errors = []
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        return [f"n: expected a positive integer, got {n!r}"]
    seen: dict[tuple[int, int], tuple[int, float, int]] = {}
    for k, c in enumerate(couplings):
        if len(c) != 3:
            errors.append(f"couplings[{k}]: expected [i, j, w], got {list(c)!r}")
            continue
        i, j, w = c
        if not all(isinstance(x, (int, np.integer)) and not isinstance(x, bool) for x in (i, j)):
            errors.append(f"couplings[{k}]: indices must be integers, got {i!r}, {j!r}")
            continue
        if not isinstance(w, (int, float, np.floating, np.integer)) or not math.isfinite(w):
            errors.append(f"couplings[{k}]: weight must be a finite number, got {w!r}")
            continue
        if not (0 <= i < n and 0 <= j < n):
            errors.append(f"couplings[{k}]: index out of range for n={n}: ({i}, {j})")
            continue
        if i == j:
            errors.append(f"couplings[{k}]: self-coupling on p-bit {i}")
            continue
        key = (min(i, j), max(i, j))
        if key in seen:
            k0, w0, i0 = seen[key]
            if w0 != w:
                errors.append(f"couplings[{k}]: ({i}, {j}, {w}) conflicts with couplings[{k0}] weight {w0} "
                              "(asymmetric W)")
            elif i0 == i:
                errors.append(f"couplings[{k}]: duplicate of couplings[{k0}]")
        else:
            seen[key] = (k, w, i)
    if len(biases) != n:
        errors.append(f"biases: expected {n} entries, got {len(biases)}")
    for k, h in enumerate(biases):
        if not isinstance(h, (int, float, np.floating, np.integer)) or not math.isfinite(h):
            errors.append(f"biases[{k}]: expected a finite number, got {h!r}")
    if not schedule:
        errors.append("schedule: at least one [sweep, beta] breakpoint is required")
    prev_s, prev_b = -1, -math.inf
    for k, entry in enumerate(schedule):
        if len(entry) != 2:
            errors.append(f"schedule[{k}]: expected [sweep, beta], got {list(entry)!r}")
            continue
        s, b = entry
        if not isinstance(s, (int, np.integer)) or s < 0:
            errors.append(f"schedule[{k}]: sweep must be a nonnegative integer, got {s!r}")
        elif s <= prev_s:
            errors.append(f"schedule[{k}]: sweep indices must be strictly increasing ({s} after {prev_s})")
        if not isinstance(b, (int, float, np.floating, np.integer)) or not b >= 0:
            errors.append(f"schedule[{k}]: beta must be a nonnegative number, got {b!r}")
        elif b < prev_b:
            errors.append(f"schedule[{k}]: beta must be nondecreasing ({b} after {prev_b})")
        else:
            prev_b = b
        if isinstance(s, (int, np.integer)):
            prev_s = s
    return errors


def problem_from_dict(d: dict, source: str = "<problem>") -> IsingProblem:
    if not isinstance(d, dict):
        raise ProblemError(["top level: expected a JSON object"], source)
    errors = []
    if d.get("version") != SCHEMA_VERSION:
        errors.append(f"version: expected {SCHEMA_VERSION}, got {d.get('version')!r}")
    missing = [k for k in ("n", "couplings", "biases") if k not in d]
    errors += [f"{k}: required field missing" for k in missing]
    unknown = sorted(set(d) - {"version", "n", "couplings", "biases", "schedule", "seed"})
    errors += [f"{k}: unknown field" for k in unknown]
    if errors:
        raise ProblemError(errors, source)
    schedule = d.get("schedule", [[0, 1.0]])
    errors = validate(d["n"], d["couplings"], d["biases"], schedule)
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        errors.append(f"seed: expected a nonnegative integer, got {seed!r}")
    if errors:
        raise ProblemError(errors, source)
    return IsingProblem(d["n"], [tuple(c) for c in d["couplings"]], d["biases"],
                        [tuple(e) for e in schedule], seed)


def loads_problem(text: str, source: str = "<string>") -> IsingProblem:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError([f"line {exc.lineno}, column {exc.colno}: {exc.msg}"], source) from exc
    return problem_from_dict(d, source)


def load_problem(path) -> IsingProblem:
    path = Path(path)
    return loads_problem(path.read_text(), str(path))


def dumps_problem(problem: IsingProblem) -> str:
    # repr-exact floats keep save/load bit-exact
    return json.dumps(problem.to_dict(), indent=1)


def save_problem(problem: IsingProblem, path) -> None:
    Path(path).write_text(dumps_problem(problem) + "\n")


# --- Max-Cut -----------------------------------------------------------------

def encode_maxcut(edges, n: int | None = None, schedule=None, seed: int = 0) -> IsingProblem:
    """Max-Cut as an antiferromagnetic Ising problem: W_ij = -w_ij, h = 0.

    With this encoding cut(m) = (sum_edges w - E(m)) / 2, so minimizing
    the energy maximizes the cut.
    """
    edges = [(int(i), int(j), float(w)) for i, j, *rest in edges for w in [rest[0] if rest else 1.0]]
    seen = set()
    for i, j, _ in edges:
        if i == j:
            raise ValueError(f"self-loop on vertex {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ValueError(f"duplicate edge {key}: graph must be simple")
        seen.add(key)
    if n is None:
        n = 1 + max(max(i, j) for i, j, _ in edges) if edges else 1
    problem = IsingProblem(n, [(i, j, -w) for i, j, w in edges], [0.0] * n,
                           schedule or [(0, 1.0)], seed)
    problem.edges = edges
    return problem


def total_edge_weight(edges) -> float:
    return float(sum(w for _, _, w in edges))


def cut_from_energy(e: float, edges) -> float:
    return (total_edge_weight(edges) - e) / 2


def cut_value(m, edges) -> float:
    """Direct cut: total weight of edges whose endpoints disagree."""
    m = np.asarray(m)
    return float(sum(w for i, j, w in edges if m[i] != m[j]))


def max_cut_bruteforce(edges, n: int) -> tuple[float, np.ndarray]:
    """Exhaustive optimum; returns (best cut, all optimal states)."""
    idx = np.arange(1 << n, dtype=np.int64)
    m = 2 * ((idx[:, None] >> np.arange(n)) & 1) - 1
    cuts = np.zeros(idx.size)
    for i, j, w in edges:
        cuts += w * (m[:, i] != m[:, j])
    best = cuts.max()
    return float(best), m[cuts == best].astype(np.int8)


# --- generators --------------------------------------------------------------

def random_graph(n: int, p: float, seed: int = 0, weighted: bool = False) -> list[tuple[int, int, float]]:
    """Erdos-Renyi G(n, p); weights uniform on (0, 1] when ``weighted``."""
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    w = rng.uniform(0, 1, keep.sum()) if weighted else np.ones(keep.sum())
    w = np.where(w == 0, 1.0, w)
    return [(int(i), int(j), float(x)) for i, j, x in zip(iu[keep], ju[keep], w)]


def complete_graph(n: int) -> list[tuple[int, int, float]]:
    return [(i, j, 1.0) for i in range(n) for j in range(i + 1, n)]


def spin_glass(n: int, seed: int = 0, density: float = 1.0, schedule=None) -> IsingProblem:
    """Sherrington-Kirkpatrick style instance with +-1 couplings and no field."""
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < density
    w = rng.choice([-1.0, 1.0], size=iu.size)
    couplings = [(int(i), int(j), float(x)) for i, j, x, k in zip(iu, ju, w, keep) if k]
    return IsingProblem(n, couplings, [0.0] * n, schedule or geometric_schedule(0.1, 3.0, 1000), seed)


def ring(n: int, weight: float = 1.0, field_value: float = 0.0) -> IsingProblem:
    """Nearest-neighbour ring (sparse topology for large logical networks)."""
    couplings = [(i, (i + 1) % n, weight) for i in range(n)] if n > 2 else [(0, 1, weight)] if n == 2 else []
    return IsingProblem(n, couplings, [field_value] * n)


# --- schedules -----------------------------------------------------------------

def beta_schedule(breakpoints, sweeps: int) -> np.ndarray:
    """Piecewise-linear beta per sweep; constant beyond the last breakpoint."""
    s = np.array([b[0] for b in breakpoints], dtype=float)
    b = np.array([b[1] for b in breakpoints], dtype=float)
    return np.interp(np.arange(sweeps, dtype=float), s, b)


def geometric_schedule(beta_start: float, beta_end: float, sweeps: int, points: int = 16) -> list[tuple[int, float]]:
    """Breakpoints for a geometric ramp from ``beta_start`` to ``beta_end`` over ``sweeps``."""
    if not 0 < beta_start <= beta_end:
        raise ValueError("geometric schedule needs 0 < beta_start <= beta_end")
    points = max(2, min(points, sweeps))
    at = np.unique(np.round(np.linspace(0, max(sweeps - 1, 1), points)).astype(int))
    betas = beta_start * (beta_end / beta_start) ** (at / max(at[-1], 1))
    return [(int(a), float(x)) for a, x in zip(at, betas)]
