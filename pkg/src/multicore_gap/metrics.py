"""Lorenz curves, majorization and distances to the Haar ensemble."""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import LengthMismatch, NotNormalized, TooFewSamples
from .model import HAAR_STREAM, STATEVECTOR_QUBIT_CAP, CircuitConfig, stream
from .statevector import check_qubit_cap, run_circuit, sample_haar_state_probs

CACHE_ENV = "MULTICORE_GAP_CACHE"
CACHE_VERSION = 1
CHUNK = 250  # reduction block; fixed so results do not depend on worker count


def lorenz_cumulants(p: np.ndarray) -> np.ndarray:
    """Partial sums of ``p`` sorted in decreasing order.

    Works on one vector or on a stack (last axis). The curve is rescaled by
    its end value so that ``F[-1]`` is exactly 1.
    """
    p = np.asarray(p, dtype=float)
    f = np.cumsum(-np.sort(-p, axis=-1), axis=-1)
    return f / f[..., -1:]


class Majorization(enum.Enum):
    Q_MAJORIZES_P = "q_majorizes_p"
    P_MAJORIZES_Q = "p_majorizes_q"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


def majorizes(p: np.ndarray, q: np.ndarray, tol: float = 1e-12) -> Majorization:
    """Compare two probability vectors under majorization.

    ``Q_MAJORIZES_P`` means every partial sum of sorted ``q`` is at least the
    matching one of ``p`` (``p`` is the more uniform vector).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise LengthMismatch(f"lengths differ: {p.size} vs {q.size}")
    for name, v in (("p", p), ("q", q)):
        if abs(v.sum() - 1.0) > 1e-9:
            raise NotNormalized(f"{name} sums to {v.sum()!r}")
    fp = np.cumsum(np.sort(p)[::-1])[:-1]
    fq = np.cumsum(np.sort(q)[::-1])[:-1]
    q_above = bool(np.all(fq >= fp - tol))
    p_above = bool(np.all(fp >= fq - tol))
    if q_above and p_above:
        return Majorization.EQUAL
    if q_above:
        return Majorization.Q_MAJORIZES_P
    if p_above:
        return Majorization.P_MAJORIZES_Q
    return Majorization.INCOMPARABLE


@dataclass(frozen=True)
class EnsembleStats:
    """Per-k population mean and standard deviation of Lorenz curves."""

    mean: np.ndarray
    std: np.ndarray
    n_samples: int

    def __len__(self) -> int:
        return self.mean.size

    def __eq__(self, other) -> bool:
        return (isinstance(other, EnsembleStats) and self.n_samples == other.n_samples
                and np.array_equal(self.mean, other.mean) and np.array_equal(self.std, other.std))


class CurveAccumulator:
    """Streaming mean / sum-of-squares over blocks of curves.

    Blocks are merged with Chan's pairwise update in the order they are
    added, so the result only depends on the block partition.
    """

    def __init__(self, length: int):
        self.n = 0
        self.mean = np.zeros(length)
        self.m2 = np.zeros(length)

    def add_block(self, curves: np.ndarray) -> None:
        curves = np.atleast_2d(curves)
        if curves.shape[1] != self.mean.size:
            raise LengthMismatch("curve length differs from accumulator")
        nb = curves.shape[0]
        mb = curves.mean(axis=0)
        m2b = ((curves - mb) ** 2).sum(axis=0)
        if self.n == 0:
            self.n, self.mean, self.m2 = nb, mb, m2b
            return
        n = self.n + nb
        delta = mb - self.mean
        self.mean = self.mean + delta * (nb / n)
        self.m2 = self.m2 + m2b + delta**2 * (self.n * nb / n)
        self.n = n

    def stats(self) -> EnsembleStats:
        if self.n < 2:
            raise TooFewSamples(f"need at least 2 samples, got {self.n}")
        std = np.sqrt(np.maximum(self.m2 / self.n, 0.0))
        return EnsembleStats(self.mean.copy(), std, self.n)


def ensemble_cumulant_stats(curves: Union[Sequence[np.ndarray], np.ndarray]) -> EnsembleStats:
    """Mean and population std (divisor N) of a list of equal-length curves."""
    if len(curves) < 2:
        raise TooFewSamples(f"need at least 2 curves, got {len(curves)}")
    lengths = {len(c) for c in curves}
    if len(lengths) != 1:
        raise LengthMismatch(f"curves have differing lengths {sorted(lengths)}")
    arr = np.asarray(curves, dtype=float)
    return EnsembleStats(arr.mean(axis=0), arr.std(axis=0), arr.shape[0])


def _check_lengths(a: EnsembleStats, b: EnsembleStats) -> None:
    if len(a) != len(b):
        raise LengthMismatch(f"stats lengths differ: {len(a)} vs {len(b)}")


def distance_haar_std(circuit_stats: EnsembleStats, haar_stats: EnsembleStats) -> float:
    """Root-sum-square difference of the per-k standard deviations."""
    _check_lengths(circuit_stats, haar_stats)
    return float(np.sqrt(np.sum((circuit_stats.std - haar_stats.std) ** 2)))


def integral_distance_haar(circuit_stats: EnsembleStats, haar_stats: EnsembleStats) -> float:
    """Signed mean gap between the average Lorenz curves, ``sum_k diff / 2**n``."""
    _check_lengths(circuit_stats, haar_stats)
    return float(np.mean(circuit_stats.mean - haar_stats.mean))


# -- ensembles -------------------------------------------------------------

def _run_blocks(n_samples: int, block_fn, threads: int) -> Iterable[np.ndarray]:
    starts = range(0, n_samples, CHUNK)
    tasks = [(s, min(s + CHUNK, n_samples)) for s in starts]
    if threads <= 1:
        for lo, hi in tasks:
            yield block_fn(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(lambda t: block_fn(*t), tasks)


def _accumulate(n_samples: int, length: int, block_fn, threads: int) -> EnsembleStats:
    if n_samples < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n_samples}")
    acc = CurveAccumulator(length)
    for block in _run_blocks(n_samples, block_fn, threads):
        acc.add_block(block)
    return acc.stats()


def circuit_ensemble_stats(config: CircuitConfig, n_samples: Optional[int] = None,
                           threads: int = 1) -> EnsembleStats:
    """Lorenz-curve statistics of circuits ``0 .. n_samples-1`` of ``config``."""
    n_samples = config.ensemble_size if n_samples is None else n_samples

    def block(lo: int, hi: int) -> np.ndarray:
        return lorenz_cumulants(np.array([run_circuit(config, i) for i in range(lo, hi)]))

    return _accumulate(n_samples, 2**config.n_qubits, block, threads)


def _haar_stats(n_qubits: int, n_samples: int, seed: int, threads: int) -> EnsembleStats:
    def block(lo: int, hi: int) -> np.ndarray:
        probs = [sample_haar_state_probs(stream(seed, i, HAAR_STREAM), n_qubits)
                 for i in range(lo, hi)]
        return lorenz_cumulants(np.array(probs))

    return _accumulate(n_samples, 2**n_qubits, block, threads)


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "multicore_gap")


def _cache_path(directory: Path, n_qubits: int, n_samples: int, seed: int) -> Path:
    return directory / f"haar_v{CACHE_VERSION}_n{n_qubits}_s{n_samples}_seed{seed}.csv"


def write_stats_csv(path: Path, stats: EnsembleStats, n_qubits: int, seed: int) -> None:
    """Cache format: one header comment, a column row, then ``k,mean,std`` lines."""
    lines = [f"# haar-reference v{CACHE_VERSION} n_qubits={n_qubits} "
             f"n_samples={stats.n_samples} seed={seed}", "k,mean,std"]
    rows = zip(stats.mean.tolist(), stats.std.tolist())
    lines += [f"{k},{m!r},{s!r}" for k, (m, s) in enumerate(rows, start=1)]
    tmp = path.with_suffix(".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    tmp.replace(path)


def read_stats_csv(path: Path) -> EnsembleStats:
    lines = path.read_text(encoding="utf-8").splitlines()
    header = dict(item.split("=", 1) for item in lines[0].split()[3:])
    if not lines[0].startswith(f"# haar-reference v{CACHE_VERSION} "):
        raise ValueError(f"{path}: unsupported cache version")
    body = np.array([[float(x) for x in line.split(",")[1:]] for line in lines[2:]])
    return EnsembleStats(body[:, 0].copy(), body[:, 1].copy(), int(header["n_samples"]))


def haar_reference(n_qubits: int, n_samples: int, seed: int, *, use_cache: bool = True,
                   directory: Optional[Path] = None, threads: int = 1,
                   cap: int = STATEVECTOR_QUBIT_CAP) -> EnsembleStats:
    """Lorenz statistics of ``n_samples`` Haar-random states on ``n_qubits``.

    Sample ``i`` uses its own stream derived from ``(seed, i)``. Results are
    cached on disk keyed by ``(n_qubits, n_samples, seed)``.
    """
    check_qubit_cap(n_qubits, cap)
    if not use_cache:
        return _haar_stats(n_qubits, n_samples, seed, threads)
    directory = Path(directory) if directory is not None else cache_dir()
    path = _cache_path(directory, n_qubits, n_samples, seed)
    if path.exists():
        return read_stats_csv(path)
    stats = _haar_stats(n_qubits, n_samples, seed, threads)
    directory.mkdir(parents=True, exist_ok=True)
    write_stats_csv(path, stats, n_qubits, seed)
    return stats
