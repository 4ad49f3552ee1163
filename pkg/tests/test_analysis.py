import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multicore_gap.analysis import (
    GapProfile,
    IdhEntry,
    IdhProfile,
    compare_minima,
    critical_condition_residual,
    find_optimal_I,
    fit_exponential_decay,
    interior_residuals,
    markov_vs_montecarlo,
    scan_gap,
    scan_idh,
)
from multicore_gap.errors import BoundaryPoint, NonpositiveEigenvalue, NoOverlap, TooFewPoints
from multicore_gap.metrics import haar_reference
from multicore_gap.model import CircuitConfig

I_RANGE = list(range(1, 9))


def profile_from_deltas(deltas, a=1, b=0):
    Is = list(range(1, len(deltas) + 1))
    lams = [(1 - d) ** (a * I + b) for I, d in zip(Is, deltas)]
    return GapProfile.from_lambdas(Is, lams, a, b)


def test_scan_gap_linear_two_by_two():
    cfg = CircuitConfig(2, 2, "linear")
    prof = scan_gap(cfg, I_RANGE)
    assert prof.I_values == I_RANGE
    assert [e.D for e in prof.entries] == [2 * I + 1 for I in I_RANGE]
    assert all(0 < e.lam < 1 for e in prof.entries)
    again = scan_gap(cfg, I_RANGE)
    assert prof.lambdas.tobytes() == again.lambdas.tobytes()
    threaded = scan_gap(cfg, I_RANGE, threads=2)
    assert prof.deltas.tobytes() == threaded.deltas.tobytes()


def test_scan_gap_rejects_unsorted():
    with pytest.raises(ValueError):
        scan_gap(CircuitConfig(2, 1, "linear", p_single=1.0), [2, 1])


def test_optimum_examples():
    opt = find_optimal_I(profile_from_deltas([0.1, 0.3, 0.2]))
    assert (opt.I_star, opt.is_interior) == (2, True)
    assert opt.value == pytest.approx(0.3)
    opt = find_optimal_I(profile_from_deltas([0.4, 0.3, 0.2, 0.1]))
    assert (opt.I_star, opt.is_interior) == (1, False)
    prof = profile_from_deltas([0.1, 0.3, 0.3, 0.2])
    assert find_optimal_I(prof).I_star == 2
    with pytest.raises(TooFewPoints):
        find_optimal_I(profile_from_deltas([0.1, 0.2]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.001, 0.9), min_size=3, max_size=10))
def test_optimum_is_first_argmax(deltas):
    prof = profile_from_deltas(deltas)
    opt = find_optimal_I(prof)
    d = prof.deltas
    best = [i for i, x in enumerate(d) if x >= d.max() - 1e-12]
    assert opt.I_star == best[0] + 1
    assert opt.is_interior == (0 < best[0] < len(d) - 1)


def test_decay_fit_exact_exponential():
    lams = [0.9 * math.exp(-0.5 * I) for I in I_RANGE]
    fit = fit_exponential_decay(GapProfile.from_lambdas(I_RANGE, lams, 1, 0))
    assert fit.max_abs_residual < 1e-12
    assert fit.kappa == pytest.approx(0.5, abs=1e-10)
    assert fit.prefactor == pytest.approx(0.9, abs=1e-10)


def test_decay_fit_inverse_law_is_not_exponential():
    lams = [1 / (1 + I) for I in I_RANGE]
    fit = fit_exponential_decay(GapProfile.from_lambdas(I_RANGE, lams, 1, 0))
    # oracle: normal equations for y = s x + t
    x = np.array(I_RANGE, dtype=float)
    y = np.log(lams)
    s = (len(x) * (x * y).sum() - x.sum() * y.sum()) / (len(x) * (x * x).sum() - x.sum() ** 2)
    t = (y.sum() - s * x.sum()) / len(x)
    expected = np.max(np.abs(y - s * x - t))
    assert fit.max_abs_residual == pytest.approx(expected, rel=1e-9)
    assert fit.max_abs_residual > 0.01


def test_decay_fit_errors():
    with pytest.raises(NonpositiveEigenvalue):
        fit_exponential_decay(GapProfile.from_lambdas([1, 2, 3], [0.5, 0.0, 0.1], 1, 0))


def test_intra_only_profile_is_exponential_with_boundary_optimum():
    prof = scan_gap(CircuitConfig(2, 2, "linear"), I_RANGE, interactions=False)
    assert prof.b == 0
    assert fit_exponential_decay(prof).max_abs_residual < 1e-8
    assert not find_optimal_I(prof).is_interior


def _bump_lambda(I, a=2, b=1, g0=0.05, s=0.001):
    # log Lambda = -(aI+b) g(I); Delta = 1 - exp(-g) peaks where g does, at I = 3
    return math.exp(-(a * I + b) * (g0 - s * (I - 3) ** 2))


def test_critical_residual_vanishes_at_known_optimum():
    a, b = 2, 1
    prof = GapProfile.from_lambdas(I_RANGE, [_bump_lambda(I) for I in I_RANGE], a, b)
    assert find_optimal_I(prof).I_star == 3
    # central-difference error of Lambda' is at most max|Lambda'''| / 6 for unit step
    grid = np.linspace(1.5, 4.5, 3001)
    h = 1e-2
    third = max(abs((_bump_lambda(x + 2 * h) - 2 * _bump_lambda(x + h)
                     + 2 * _bump_lambda(x - h) - _bump_lambda(x - 2 * h)) / (2 * h**3)) for x in grid)
    bound = (a * 3 + b) * third / 6 / _bump_lambda(3)
    res = critical_condition_residual(prof, 3)
    assert abs(res) < 2 * bound
    others = interior_residuals(prof)
    assert all(abs(others[I]) > abs(res) for I in others if I != 3)


def test_critical_residual_sign_for_pure_exponential():
    lams = [0.9 * math.exp(-0.5 * I) for I in I_RANGE]
    prof = GapProfile.from_lambdas(I_RANGE, lams, 2, 1)
    res = interior_residuals(prof)
    assert sorted(res) == list(range(2, 8))
    signs = {np.sign(v) for v in res.values()}
    assert len(signs) == 1 and 0 not in signs


def test_critical_residual_boundary():
    prof = profile_from_deltas([0.1, 0.3, 0.2])
    with pytest.raises(BoundaryPoint):
        critical_condition_residual(prof, 1)
    with pytest.raises(BoundaryPoint):
        critical_condition_residual(prof, 3)


def test_markov_matches_sampling_small():
    cfg = CircuitConfig(2, 1, "linear", intracore_steps=1, p_single=1.0)
    cmp = markov_vs_montecarlo(cfg, 3000)
    assert cmp.within(4.0)
    assert cmp.predicted[0] == pytest.approx(1.0)


def test_scan_idh_determinism():
    cfg = CircuitConfig(2, 2, "linear")
    ref = haar_reference(4, 400, seed=0)
    a = scan_idh(cfg, [1, 2, 3], 300, ref)
    b = scan_idh(cfg, [1, 2, 3], 300, ref, threads=2)
    assert a == b
    assert len(a.entries) == 3 and all(np.isfinite(e.idh) and np.isfinite(e.dh) for e in a.entries)


def test_compare_minima_identical_profiles():
    deltas = [0.1, 0.3, 0.25, 0.2]
    gap = profile_from_deltas(deltas)
    idh = IdhProfile(tuple(IdhEntry(I, 1 - d, 0.0, 10) for I, d in zip(gap.I_values, deltas)), 1)
    rep = compare_minima(gap, idh)
    assert rep.I_star_gap == rep.I_star_idh == 2
    assert rep.difference == 0 and rep.gap_interior and rep.idh_interior


def test_compare_minima_disjoint():
    gap = profile_from_deltas([0.1, 0.3, 0.2])
    idh = IdhProfile(tuple(IdhEntry(I, 0.1, 0.0, 10) for I in (5, 6, 7)), 1)
    with pytest.raises(NoOverlap):
        compare_minima(gap, idh)


@pytest.mark.parametrize("kind", ["linear", "ring", "star", "full"])
@pytest.mark.parametrize("nc,nq", [(2, 2), (3, 2), (4, 2), (2, 3)])
def test_linked_architectures_have_interior_optimum(kind, nc, nq):
    if kind == "ring" and nc < 3:
        pytest.skip("a ring needs three cores")
    prof = scan_gap(CircuitConfig(nc, nq, kind, c_rand=1 / 3), I_RANGE)
    assert find_optimal_I(prof).is_interior


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 900), min_size=3, max_size=10, unique=True))
def test_optimum_invariant_under_monotone_map(ticks):
    deltas = [t / 1000 for t in ticks]
    base = find_optimal_I(profile_from_deltas(deltas))
    mapped = find_optimal_I(profile_from_deltas([math.sqrt(d) * 0.9 for d in deltas]))
    assert (base.I_star, base.is_interior) == (mapped.I_star, mapped.is_interior)
