"""User-facing surface: problem files, solvers, benchmarks, figure data and the CLI."""

from .figures import FIGURES, emit_figure_data
from .problem import (IsingProblem, ProblemError, beta_schedule, complete_graph, cut_from_energy, cut_value,
                      dumps_problem, encode_maxcut, geometric_schedule, load_problem, loads_problem,
                      max_cut_bruteforce, random_graph, ring, save_problem, spin_glass)
from .solve import BenchReport, IdealEngine, PhotonicEngine, bench_flips, engine_version, solve

__all__ = [
    "FIGURES", "emit_figure_data", "IsingProblem", "ProblemError", "beta_schedule", "complete_graph",
    "cut_from_energy", "cut_value", "dumps_problem", "encode_maxcut", "geometric_schedule", "load_problem",
    "loads_problem", "max_cut_bruteforce", "random_graph", "ring", "save_problem", "spin_glass",
    "BenchReport", "IdealEngine", "PhotonicEngine", "bench_flips", "engine_version", "solve",
]
