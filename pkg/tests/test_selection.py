import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import as_deltas, random_pd, random_psd
from vinselect.metrics import MetricKind, objective
from vinselect.selection import (
    CombinatorialLimitError,
    ParameterError,
    brute_force_select,
    greedy_select,
    quality_select,
    random_select,
    subset_values,
)


def reference_greedy(base, ds, kind, kappa):
    chosen = []
    for _ in range(kappa):
        best = max((l for l in range(len(ds)) if l not in chosen), key=lambda l: (objective(kind, base, ds, chosen + [l]), -l))
        chosen.append(best)
    return tuple(chosen)


def small_problem(seed, n=7, dim=6):
    rng = np.random.default_rng(seed)
    base = random_pd(rng, dim, floor=0.05)
    ds = as_deltas([random_psd(rng, dim, int(rng.integers(1, 3))) for _ in range(n)], rng.uniform(0.3, 1.0, n).tolist())
    return base, ds


@pytest.mark.parametrize("kind", list(MetricKind))
def test_greedy_matches_reference(kind):
    for seed in range(10):
        base, ds = small_problem(seed)
        ref = reference_greedy(base, ds, kind, 3)
        for lazy in (True, False):
            sel = greedy_select(base, ds, kind, 3, lazy=lazy)
            assert sel.chosen == ref
            assert sel.objective_value == pytest.approx(objective(kind, base, ds, ref), rel=1e-12)
            assert sum(sel.marginal_gains) == pytest.approx(sel.objective_value - sel.base_value, rel=1e-9, abs=1e-12)
    assert greedy_select(base, ds, kind, 3, mineig_bound="ipsen").chosen == ref


def test_naive_eval_count_and_lazy_saves(straight12):
    P = straight12
    naive = greedy_select(P.omega_bar.data, P.deltas, "logdet", 6, lazy=False)
    assert naive.n_objective_evals == sum(12 - i for i in range(6))
    lazy = greedy_select(P.omega_bar.data, P.deltas, "logdet", 6)
    assert lazy.chosen == naive.chosen and lazy.n_objective_evals <= naive.n_objective_evals


def test_stale_gain_variant():
    for seed in range(5):
        base, ds = small_problem(seed)
        a = greedy_select(base, ds, "logdet", 4, stale_gains=True)
        b = greedy_select(base, ds, "logdet", 4, lazy=False)
        assert a.chosen == b.chosen
        assert a.objective_value == pytest.approx(b.objective_value, rel=1e-12)
    with pytest.raises(ParameterError):
        greedy_select(base, ds, "mineig", 2, stale_gains=True)


def test_budget_edge_cases():
    base, ds = small_problem(0, n=3)
    sel = greedy_select(base, ds, "logdet", 5)
    assert sel.short_budget and len(sel.chosen) == 3
    empty = greedy_select(base, ds, "logdet", 0)
    assert empty.chosen == () and empty.objective_value == pytest.approx(objective("logdet", base, ds, ()))
    with pytest.raises(ParameterError):
        greedy_select(base, [], "logdet", 1)
    with pytest.raises(ParameterError):
        greedy_select(base, ds, "logdet", -1)
    with pytest.raises(ParameterError):
        greedy_select(base, ds, "mineig", 1, mineig_bound="bogus")


@pytest.mark.parametrize("kind", list(MetricKind))
def test_brute_force_is_exhaustive_max(kind):
    base, ds = small_problem(11)
    best = max(itertools.combinations(range(len(ds)), 3), key=lambda c: objective(kind, base, ds, c))
    sel = brute_force_select(base, ds, kind, 3)
    assert sel.objective_value == pytest.approx(objective(kind, base, ds, best), rel=1e-10)
    assert sel.n_objective_evals == 35
    assert greedy_select(base, ds, kind, 3).objective_value <= sel.objective_value + 1e-12
    with pytest.raises(CombinatorialLimitError):
        brute_force_select(base, ds, kind, 3, limit=10)


def test_subset_values_batch():
    base, ds = small_problem(12)
    rng = np.random.default_rng(0)
    masks = rng.random((40, len(ds))) < 0.5
    for kind in MetricKind:
        got = subset_values(kind, base, ds, masks, chunk=7)
        want = [objective(kind, base, ds, np.flatnonzero(m)) for m in masks]
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)


def test_random_and_quality():
    a = random_select(20, 5, seed=3)
    assert a.chosen == random_select(20, 5, seed=3).chosen
    assert len(set(a.chosen)) == 5 and all(0 <= i < 20 for i in a.chosen)
    with pytest.raises(ParameterError):
        random_select(3, 4, seed=0)
    q = quality_select([0.1, 0.9, 0.5, 0.9], 2)
    assert q.chosen == (1, 3)
    base, ds = small_problem(1, n=4)
    q = quality_select([0.1, 0.9, 0.5, 0.9], 2, base, ds, "mineig")
    assert q.objective_value == pytest.approx(objective("mineig", base, ds, (1, 3)))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 5))
def test_greedy_monotone_gains_nonnegative(seed, kappa):
    base, ds = small_problem(seed, n=6)
    for kind in MetricKind:
        sel = greedy_select(base, ds, kind, kappa)
        assert all(g >= -1e-12 for g in sel.marginal_gains)
        assert len(sel.chosen) == kappa
