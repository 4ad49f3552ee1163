"""Scans over the intracore depth ``I`` and tests of the optimum criterion."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BoundaryPoint,
    NonpositiveEigenvalue,
    NoOverlap,
    OutOfRange,
    TooFewPoints,
)
from .markov import SpectrumResult, build_total_operator, normalized_gap, subleading_eigenvalue
from .metrics import (
    EnsembleStats,
    circuit_ensemble_stats,
    distance_haar_std,
    integral_distance_haar,
)
from .model import CircuitConfig
from .statevector import exact_reduced_moments, new_zero_state, run_circuit_state


@dataclass(frozen=True)
class GapEntry:
    I: int
    lam: float
    D: int
    delta: float
    spectrum: Optional[SpectrumResult] = field(default=None, compare=False)

    @property
    def one_minus_delta(self) -> float:
        return 1.0 - self.delta


@dataclass(frozen=True)
class GapProfile:
    """Per-I subleading eigenvalue and normalized gap for one architecture.

    ``a`` is the number of cores and ``b`` the number of links, so that every
    entry has ``D = a * I + b``.
    """

    entries: tuple[GapEntry, ...]
    a: int
    b: int
    config: Optional[CircuitConfig] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        Is = [e.I for e in self.entries]
        if any(x >= y for x, y in zip(Is, Is[1:])):
            raise ValueError("I values must be strictly increasing")
        for e in self.entries:
            if e.D != self.a * e.I + self.b:
                raise ValueError(f"entry at I={e.I} has D={e.D}, expected {self.a * e.I + self.b}")
            if not 0.0 <= e.lam <= 1.0:
                raise OutOfRange(f"Lambda={e.lam} outside [0, 1] at I={e.I}")

    @property
    def I_values(self) -> list[int]:
        return [e.I for e in self.entries]

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([e.lam for e in self.entries])

    @property
    def deltas(self) -> np.ndarray:
        return np.array([e.delta for e in self.entries])

    def at(self, I: int) -> GapEntry:
        for e in self.entries:
            if e.I == I:
                return e
        raise KeyError(I)

    @classmethod
    def from_lambdas(cls, I_values: Sequence[int], lambdas: Sequence[float], a: int, b: int) -> "GapProfile":
        entries = []
        for I, lam in zip(I_values, lambdas):
            D = a * I + b
            entries.append(GapEntry(int(I), float(lam), D, normalized_gap(float(lam), D)))
        return cls(tuple(entries), a, b)


def _map(fn, items, threads: int) -> list:
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def scan_gap(base_config: CircuitConfig, I_values: Sequence[int], *, interactions: bool = True,
             threads: int = 1, **spectrum_kwargs) -> GapProfile:
    """Build ``M_total`` for each ``I`` and record ``(I, Lambda, D, Delta)``.

    With ``interactions=False`` the links are removed and ``b = 0``.
    """
    I_values = [int(i) for i in I_values]
    if not I_values:
        raise ValueError("I_values must not be empty")
    if sorted(set(I_values)) != I_values:
        raise ValueError("I_values must be strictly increasing")
    a = base_config.n_cores
    b = base_config.n_links if interactions else 0

    def one(I: int) -> GapEntry:
        op = build_total_operator(base_config.with_steps(I), interactions=interactions)
        spec = subleading_eigenvalue(op, **spectrum_kwargs)
        D = a * I + b
        return GapEntry(I, spec.value, D, normalized_gap(spec.value, D), spec)

    return GapProfile(tuple(_map(one, I_values, threads)), a, b, base_config)


def _argbest(I_values: Sequence[int], scores: Sequence[float], tie_tolerance: float) -> int:
    """Position of the largest score; near-ties go to the smallest I."""
    scores = np.asarray(scores, dtype=float)
    best = scores.max()
    return int(np.flatnonzero(scores >= best - tie_tolerance)[0])


@dataclass(frozen=True)
class Optimum:
    I_star: int
    value: float
    is_interior: bool


def find_optimal_I(profile: GapProfile, tie_tolerance: float = 1e-12) -> Optimum:
    """Intracore depth with the largest normalized gap.

    Gaps within ``tie_tolerance`` of the maximum count as ties and resolve to
    the smallest ``I``. ``is_interior`` is false at either end of the scan.
    """
    if len(profile.entries) < 3:
        raise TooFewPoints("need at least 3 scan points")
    pos = _argbest(profile.I_values, profile.deltas, tie_tolerance)
    e = profile.entries[pos]
    return Optimum(e.I, e.delta, 0 < pos < len(profile.entries) - 1)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares line through ``(I, log Lambda)``.

    ``slope`` estimates ``-kappa * a`` and ``intercept`` estimates
    ``log(prefactor)``.
    """

    slope: float
    intercept: float
    max_abs_residual: float
    kappa: float
    prefactor: float


def fit_exponential_decay(profile: GapProfile) -> DecayFit:
    if len(profile.entries) < 3:
        raise TooFewPoints("need at least 3 scan points")
    lam = profile.lambdas
    if np.any(lam <= 0):
        raise NonpositiveEigenvalue("log-linear fit needs Lambda > 0 everywhere")
    x = np.asarray(profile.I_values, dtype=float)
    y = np.log(lam)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return DecayFit(
        slope=float(slope),
        intercept=float(intercept),
        max_abs_residual=float(np.max(np.abs(resid))),
        kappa=float(-slope / profile.a),
        prefactor=float(math.exp(intercept)),
    )


def critical_condition_residual(profile: GapProfile, at_I: int) -> float:
    """``(a I + b) Lambda'/Lambda - a log Lambda`` at ``at_I``.

    ``Lambda'`` is the central difference over the neighbouring integers, which
    must both be in the profile. The expression vanishes where ``d Delta/dI``
    does.
    """
    Is = profile.I_values
    if at_I not in Is or at_I - 1 not in Is or at_I + 1 not in Is:
        raise BoundaryPoint(f"I={at_I} needs both integer neighbours in the profile")
    lam = profile.at(at_I).lam
    lam_prime = (profile.at(at_I + 1).lam - profile.at(at_I - 1).lam) / 2.0
    if lam <= 0:
        raise NonpositiveEigenvalue(f"Lambda={lam} at I={at_I}")
    return (profile.a * at_I + profile.b) * lam_prime / lam - profile.a * math.log(lam)


def interior_residuals(profile: GapProfile) -> dict[int, float]:
    out = {}
    for I in profile.I_values:
        try:
            out[I] = critical_condition_residual(profile, I)
        except (BoundaryPoint, NonpositiveEigenvalue):
            continue
    return out


@dataclass(frozen=True)
class MomentComparison:
    predicted: np.ndarray
    mc_mean: np.ndarray
    mc_stderr: np.ndarray
    n_samples: int

    def worst_z(self) -> float:
        """Largest |mc - predicted| in standard errors over components with spread."""
        diff = np.abs(self.mc_mean - self.predicted)
        ok = self.mc_stderr > 0
        return float(np.max(diff[ok] / self.mc_stderr[ok])) if ok.any() else 0.0

    def within(self, n_stderr: float = 4.0, floor: float = 1e-9) -> bool:
        diff = np.abs(self.mc_mean - self.predicted)
        return bool(np.all(diff <= np.maximum(n_stderr * self.mc_stderr, floor)))


def markov_vs_montecarlo(config: CircuitConfig, n_samples: int, threads: int = 1,
                         block: int = 1000) -> MomentComparison:
    """Markov prediction from |0...0> against sampled circuits' exact reduced moments.

    The Monte-Carlo side runs ``n_samples`` circuits of ``config`` and averages
    their exact reduced moments; the standard error uses the sample std.
    """
    nc, nq = config.n_cores, config.n_qubits_per_core
    start = exact_reduced_moments(new_zero_state(config.n_qubits), nc, nq)
    predicted = build_total_operator(config).power(config.n_layers).matvec(start)

    def moments(bounds):
        lo, hi = bounds
        states = np.array([run_circuit_state(config, i) for i in range(lo, hi)])
        return exact_reduced_moments(states, nc, nq)

    blocks = [(lo, min(lo + block, n_samples)) for lo in range(0, n_samples, block)]
    mom = np.concatenate(_map(moments, blocks, threads))
    return MomentComparison(predicted, mom.mean(axis=0),
                            mom.std(axis=0, ddof=1) / math.sqrt(n_samples), n_samples)


@dataclass(frozen=True)
class IdhEntry:
    I: int
    idh: float
    dh: float
    n_samples: int


@dataclass(frozen=True)
class IdhProfile:
    entries: tuple[IdhEntry, ...]
    n_layers: int

    def __post_init__(self) -> None:
        Is = [e.I for e in self.entries]
        if any(x >= y for x, y in zip(Is, Is[1:])):
            raise ValueError("I values must be strictly increasing")
        if len({e.n_samples for e in self.entries}) > 1:
            raise ValueError("n_samples must be constant across entries")

    @property
    def I_values(self) -> list[int]:
        return [e.I for e in self.entries]

    @property
    def idh(self) -> np.ndarray:
        return np.array([e.idh for e in self.entries])


def scan_idh(base_config: CircuitConfig, I_values: Sequence[int], ensemble_size: int,
             haar_ref: EnsembleStats, threads: int = 1) -> IdhProfile:
    """Statevector ensembles per ``I`` compared with a Haar reference."""
    entries = []
    for I in I_values:
        stats = circuit_ensemble_stats(base_config.with_steps(int(I)), ensemble_size, threads)
        entries.append(IdhEntry(int(I), integral_distance_haar(stats, haar_ref),
                                distance_haar_std(stats, haar_ref), stats.n_samples))
    return IdhProfile(tuple(entries), base_config.n_layers)


@dataclass(frozen=True)
class MinimaReport:
    I_star_gap: int
    I_star_idh: int
    difference: int
    gap_interior: bool
    idh_interior: bool


def compare_minima(gap_profile: GapProfile, idh_profile: IdhProfile) -> MinimaReport:
    """Locate the minima of ``1 - Delta`` and of ``ID_H`` on their common I values."""
    common = sorted(set(gap_profile.I_values) & set(idh_profile.I_values))
    if not common:
        raise NoOverlap("gap and ID_H scans share no I values")
    gap_scores = [gap_profile.at(I).delta for I in common]
    idh_by_I = {e.I: e.idh for e in idh_profile.entries}
    idh_scores = [-idh_by_I[I] for I in common]
    g = _argbest(common, gap_scores, 1e-12)
    h = _argbest(common, idh_scores, 0.0)
    last = len(common) - 1
    return MinimaReport(common[g], common[h], abs(common[g] - common[h]),
                        0 < g < last, 0 < h < last)
