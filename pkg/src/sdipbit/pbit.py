"""Ideal p-bit mathematics: update rule, local bias, energy, exact Boltzmann.

Configurations of N p-bits are indexed little-endian: p-bit ``i`` is bit
``i`` of the index, with binary 1 meaning bipolar +1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import sparse
from scipy.special import logsumexp

from .entropy import as_stream

MAX_ENUMERATION = 24


def to_bipolar(s):
    """Binary {0,1} -> bipolar {-1,+1}."""
    return 2 * np.asarray(s, dtype=np.int8) - 1


def to_binary(m):
    """Bipolar {-1,+1} -> binary {0,1}."""
    return ((np.asarray(m, dtype=np.int8) + 1) // 2).astype(np.int8)


def state_index(m) -> int:
    bits = to_binary(m).astype(np.int64)
    return int(np.sum(bits << np.arange(bits.size, dtype=np.int64)))


def index_to_state(index: int, n: int) -> np.ndarray:
    bits = (int(index) >> np.arange(n)) & 1
    return to_bipolar(bits)


def _symmetric_csr(n: int, rows, cols, vals) -> sparse.csr_matrix:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    w = sparse.coo_matrix(
        (np.concatenate([vals, vals]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n, n),
    ).tocsr()
    w.sum_duplicates()
    w.eliminate_zeros()
    w.sort_indices()
    return w


@dataclass
class PBitNetwork:
    """Interaction matrix, constant biases, inverse temperature and state.

    ``weights`` is kept as a symmetric CSR matrix with an empty diagonal;
    ``state`` holds bipolar int8 values.
    """

    weights: sparse.csr_matrix
    biases: np.ndarray
    beta: float = 1.0
    state: np.ndarray | None = None
    size: int = field(init=False)

    def __post_init__(self):
        w = sparse.csr_matrix(self.weights, dtype=float)
        if w.shape[0] != w.shape[1]:
            raise ValueError(f"weights must be square, got {w.shape}")
        self.size = w.shape[0]
        if np.any(w.diagonal() != 0):
            raise ValueError("weights must have a zero diagonal (no self-coupling)")
        asym = abs(w - w.T)
        if asym.nnz and asym.max() > 1e-12:
            raise ValueError("weights must be symmetric")
        w.eliminate_zeros()
        w.sort_indices()
        self.weights = w
        self.biases = np.asarray(self.biases, dtype=float).reshape(-1)
        if self.biases.size != self.size:
            raise ValueError(f"biases length {self.biases.size} != network size {self.size}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if self.state is None:
            self.state = np.ones(self.size, dtype=np.int8)
        else:
            self.state = np.asarray(self.state, dtype=np.int8).copy()
            _check_bipolar(self.state, self.size)

    @classmethod
    def from_dense(cls, w, h, beta=1.0, state=None) -> "PBitNetwork":
        return cls(sparse.csr_matrix(np.asarray(w, dtype=float)), h, beta, state)

    @classmethod
    def from_couplings(cls, n: int, couplings, biases=None, beta=1.0, state=None) -> "PBitNetwork":
        """Build from an upper- or lower-triangle list of ``(i, j, w)``; symmetric completion applied."""
        couplings = list(couplings)
        rows = [c[0] for c in couplings]
        cols = [c[1] for c in couplings]
        vals = [c[2] for c in couplings]
        if any(i == j for i, j in zip(rows, cols)):
            raise ValueError("self-couplings are not allowed")
        h = np.zeros(n) if biases is None else biases
        return cls(_symmetric_csr(n, rows, cols, vals), h, beta, state)

    def dense_weights(self) -> np.ndarray:
        return self.weights.toarray()

    def copy(self) -> "PBitNetwork":
        return PBitNetwork(self.weights.copy(), self.biases.copy(), self.beta, self.state.copy())


def _check_bipolar(m: np.ndarray, n: int) -> None:
    if m.shape != (n,):
        raise ValueError(f"state must have length {n}, got shape {m.shape}")
    if not np.all((m == 1) | (m == -1)):
        raise ValueError("state entries must be bipolar (+1 or -1)")


def bias(network: PBitNetwork, i: int, m=None) -> float:
    """Local field on p-bit ``i``: sum_j W[i, j] m[j] + h[i]."""
    if not 0 <= i < network.size:
        raise IndexError(f"p-bit index {i} out of range for network of size {network.size}")
    m = network.state if m is None else m
    w = network.weights
    lo, hi = w.indptr[i], w.indptr[i + 1]
    return float(np.dot(w.data[lo:hi], m[w.indices[lo:hi]]) + network.biases[i])


def activation(field_value, beta: float):
    """tanh(beta * I), with the beta = inf limit taken as sign(I)."""
    if np.isinf(beta):
        return np.sign(field_value)
    return np.tanh(beta * np.asarray(field_value, dtype=float))


def pbit_output(field_value, beta: float, r):
    """sgn(tanh(beta I) - r) with sgn(0) = +1; vectorised over ``r``."""
    return np.where(activation(field_value, beta) - np.asarray(r) >= 0, 1, -1).astype(np.int8)


def update_pbit(network: PBitNetwork, i: int, r: float) -> int:
    """Update p-bit ``i`` in place from an externally drawn r ~ U(-1, 1)."""
    value = int(pbit_output(bias(network, i), network.beta, r))
    network.state[i] = value
    return value


def energy(network: PBitNetwork, m=None) -> float:
    """-(sum_{i<j} W_ij m_i m_j + sum_i h_i m_i)."""
    m = network.state if m is None else np.asarray(m)
    if m.shape != (network.size,):
        raise ValueError(f"state length {m.shape} does not match network size {network.size}")
    mf = m.astype(float)
    return float(-(0.5 * mf @ (network.weights @ mf) + network.biases @ mf))


@dataclass(frozen=True)
class EnergySpectrum:
    size: int
    energies: np.ndarray
    probabilities: np.ndarray
    log_partition: float

    @property
    def partition(self) -> float:
        return float(np.exp(self.log_partition))

    @property
    def configurations(self) -> np.ndarray:
        idx = np.arange(2**self.size, dtype=np.int64)
        bits = (idx[:, None] >> np.arange(self.size)) & 1
        return (2 * bits - 1).astype(np.int8)

    def ground_energy(self) -> float:
        return float(self.energies.min())

    def ground_states(self, atol: float = 1e-9) -> np.ndarray:
        return self.configurations[self.energies <= self.energies.min() + atol]


def enumerate_energies(network: PBitNetwork, chunk: int = 1 << 16) -> np.ndarray:
    n = network.size
    if n > MAX_ENUMERATION:
        raise ValueError(f"exact enumeration limited to N <= {MAX_ENUMERATION}, got {n}")
    w = network.dense_weights()
    h = network.biases
    total = 1 << n
    out = np.empty(total)
    shifts = np.arange(n)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        m = (2 * ((idx[:, None] >> shifts) & 1) - 1).astype(float)
        out[start:start + idx.size] = -(0.5 * np.einsum("ci,ij,cj->c", m, w, m) + m @ h)
    return out


def exact_boltzmann(network: PBitNetwork) -> EnergySpectrum:
    """Enumerate all 2^N configurations and their Boltzmann weights at ``network.beta``."""
    energies = enumerate_energies(network)
    if np.isinf(network.beta):
        ground = energies <= energies.min() + 1e-12
        probs = ground / ground.sum()
        return EnergySpectrum(network.size, energies, probs, np.inf)
    logw = -network.beta * energies
    log_z = float(logsumexp(logw))
    return EnergySpectrum(network.size, energies, np.exp(logw - log_z), log_z)


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())


@numba.njit(cache=True)
def _sweep_kernel(indptr, indices, data, h, betas, m, u_update, u_order, random_order,
                  hist, best_state, energy_now, best_energy):
    n = m.shape[0]
    order = np.arange(n)
    e = energy_now
    best = best_energy
    track_best = best_state.shape[0] == n
    for s in range(betas.shape[0]):
        beta = betas[s]
        for k in range(n):
            order[k] = k
        if random_order:
            for k in range(n - 1, 0, -1):
                j = int(u_order[s, k] * (k + 1))
                tmp = order[k]
                order[k] = order[j]
                order[j] = tmp
        for step in range(n):
            i = order[step]
            field_value = h[i]
            for p in range(indptr[i], indptr[i + 1]):
                field_value += data[p] * m[indices[p]]
            if np.isinf(beta):
                if field_value > 0:
                    act = 1.0
                elif field_value < 0:
                    act = -1.0
                else:
                    act = 0.0
            else:
                act = np.tanh(beta * field_value)
            r = 2.0 * u_update[s, step] - 1.0
            new = 1 if act - r >= 0.0 else -1
            if new != m[i]:
                e -= (new - m[i]) * field_value
                m[i] = new
                if track_best and e < best:
                    best = e
                    for q in range(n):
                        best_state[q] = m[q]
        if hist.shape[0] > 0:
            idx = 0
            for q in range(n):
                if m[q] > 0:
                    idx |= 1 << q
            hist[idx] += 1
    return e, best


@dataclass
class SweepResult:
    sweeps: int
    flips: int
    histogram: np.ndarray | None
    best_energy: float
    best_state: np.ndarray
    final_energy: float


def run_sweeps(network: PBitNetwork, sweeps: int, entropy, *, betas=None, order: str = "random",
               histogram: bool = False, track_best: bool = True, block: int | None = None) -> SweepResult:
    """Sequential Gibbs sweeps driven by ``update_pbit`` semantics.

    Each sweep updates every p-bit once, in a fresh uniformly random
    permutation (``order="random"``) or in index order (``order="fixed"``).
    ``betas`` optionally gives one inverse temperature per sweep. The
    network state is updated in place.
    """
    if order not in ("random", "fixed"):
        raise ValueError(f"unknown update order {order!r}")
    stream = as_stream(entropy)
    n = network.size
    if betas is None:
        betas = np.full(sweeps, network.beta, dtype=float)
    betas = np.asarray(betas, dtype=float)
    if betas.shape != (sweeps,):
        raise ValueError(f"betas must have one entry per sweep ({sweeps}), got {betas.shape}")
    hist = np.zeros(1 << n if histogram else 0, dtype=np.int64)
    if histogram and n > MAX_ENUMERATION:
        raise ValueError("histogram recording requires N <= 24")
    w = network.weights
    m = network.state.astype(np.int8)
    e = energy(network, m)
    best_e = e
    best_state = m.copy() if track_best else np.zeros(0, dtype=np.int8)
    block = block or max(1, (1 << 20) // max(n, 1))
    random_order = order == "random"
    dummy = np.zeros((1, 1))
    done = 0
    while done < sweeps:
        b = min(block, sweeps - done)
        u_update = stream.uniform((b, n))
        u_order = stream.uniform((b, n)) if random_order else dummy
        e, best_e = _sweep_kernel(w.indptr, w.indices, w.data, network.biases, betas[done:done + b], m,
                                  u_update, u_order, random_order, hist, best_state, e, best_e)
        done += b
    network.state[:] = m
    return SweepResult(
        sweeps=sweeps,
        flips=sweeps * n,
        histogram=hist if histogram else None,
        best_energy=float(best_e),
        best_state=best_state if track_best else m.copy(),
        final_energy=float(e),
    )


def sweep_python(network: PBitNetwork, u_update, u_order=None) -> None:
    """One sweep through plain ``update_pbit`` calls (reference path for the kernel)."""
    n = network.size
    order = np.arange(n)
    if u_order is not None:
        for k in range(n - 1, 0, -1):
            j = int(u_order[k] * (k + 1))
            order[k], order[j] = order[j], order[k]
    for step, i in enumerate(order):
        update_pbit(network, int(i), 2.0 * u_update[step] - 1.0)
