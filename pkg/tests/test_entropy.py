import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from moyalks.entropy import (Box, Disk, DyadicPartition, FinitePartition, PartitionFamily, PointMapSystem,
                             SamplingPlan, baker_map, cat_map, coarsest_refinement, count_entropy,
                             entropy_bits, entropy_rate, harmonic_time_one, join_entropies, ks_entropy,
                             lyapunov_exponent, measure_preservation_residual, partition_entropy,
                             pesin_gap, rate_from_entropies, rotation, standard_map)
from moyalks.errors import StatisticsError, UnsupportedError

import oracles

UNIT = Box()
PLAN = SamplingPlan(40_000, seed=3)


def vertical_halves():
    return FinitePartition(lambda q, p: (np.asarray(q) >= 0.5).astype(int), 2, "vertical-halves")


def horizontal_halves():
    return FinitePartition(lambda q, p: (np.asarray(p) >= 0.5).astype(int), 2, "horizontal-halves")


def trivial():
    return FinitePartition(lambda q, p: np.zeros(np.shape(q), dtype=int), 1, "trivial")


def identity_system():
    return PointMapSystem("identity", lambda q, p: (q, p), UNIT, lambda q, p: (q, p))


def strip_partition(cuts):
    cuts = np.asarray(cuts)
    return FinitePartition(lambda q, p: np.searchsorted(cuts, np.asarray(q), side="right"), len(cuts) + 1,
                           f"strips{list(cuts)}")


# ------------------------------------------------------------ partition entropy

def test_partition_entropy_examples():
    assert partition_entropy(DyadicPartition.on(UNIT, 1)) == 2.0
    assert entropy_bits([0.5, 0.5]) == 1.0
    assert entropy_bits([0.5, 0.25, 0.25]) == pytest.approx(1.5, abs=1e-15)
    assert entropy_bits([1.0, 0.0]) == 0.0


def test_sampled_partition_entropy():
    P = strip_partition([0.5, 0.75])
    assert partition_entropy(P, UNIT, SamplingPlan(250_000)) == pytest.approx(1.5, abs=1e-3)


def test_refinement_examples():
    quads = coarsest_refinement(vertical_halves(), horizontal_halves())
    q, p = PLAN.points(UNIT)
    counts = np.bincount(quads.label(q, p), minlength=4)
    assert np.allclose(counts / counts.sum(), 0.25, atol=1e-12)
    A = vertical_halves()
    for R in (coarsest_refinement(A, A), coarsest_refinement(A, trivial())):
        assert partition_entropy(R, UNIT, PLAN) == pytest.approx(partition_entropy(A, UNIT, PLAN), abs=1e-12)


@given(a=st.lists(st.floats(0.01, 0.99), min_size=1, max_size=3, unique=True),
       b=st.lists(st.floats(0.01, 0.99), min_size=1, max_size=3, unique=True))
def test_subadditivity(a, b):
    A = strip_partition(sorted(a))
    B = FinitePartition(lambda q, p: np.searchsorted(np.sort(b), np.asarray(p), side="right"), len(b) + 1)
    hab = partition_entropy(coarsest_refinement(A, B), UNIT, PLAN)
    assert hab <= partition_entropy(A, UNIT, PLAN) + partition_entropy(B, UNIT, PLAN) + 1e-10


def test_labels_out_of_range():
    bad = FinitePartition(lambda q, p: np.full(np.shape(q), 5), 2)
    with pytest.raises(ValueError):
        bad.label(np.zeros(3), np.zeros(3))


# ---------------------------------------------------------------- estimators

def test_count_entropy_estimators():
    assert count_entropy(np.array([5, 5, 0])) == 1.0
    g = count_entropy(np.array([3, 1, 1]), "grassberger")
    assert g > count_entropy(np.array([3, 1, 1]))
    with pytest.raises(ValueError):
        count_entropy(np.array([1]), "bogus")


def test_join_stops_when_undersampled():
    rng = np.random.default_rng(0)
    stream = (rng.integers(0, 4, 1000) for _ in range(20))
    lv = join_entropies(stream, 20, min_occupancy=16)
    assert len(lv.entropies) < 20 and "undersampled" in lv.stop_reason


def test_rate_needs_four_levels():
    with pytest.raises(StatisticsError):
        rate_from_entropies([1.0, 2.0, 3.0], "P", 1, "x")
    r = rate_from_entropies([1.0, 2.0, 3.0, 4.0, 5.01], "P", 1, "x")
    assert r.converged and r.rate == pytest.approx(1.01)


# ------------------------------------------------------------------ rates

def test_identity_map_has_zero_rate():
    r = entropy_rate(identity_system(), DyadicPartition.on(UNIT, 2), 6, PLAN)
    assert r.rate == 0.0 and r.converged


def test_baker_vertical_halves_is_one_bit():
    r = entropy_rate(baker_map(), vertical_halves(), 12, SamplingPlan(1_000_000))
    assert r.rate == pytest.approx(1.0, abs=0.02)
    assert r.converged


def test_rotation_rate_is_small():
    # zero-entropy maps have H_n - H_{n-1} ~ 1/n, so the band needs long joins
    r = entropy_rate(rotation(), DyadicPartition.on(UNIT, 3), 64)
    assert r.method == "exact-intervals"
    assert r.rate <= 0.05 and r.converged
    short = entropy_rate(rotation(), DyadicPartition.on(UNIT, 3), 10)
    assert short.rate > r.rate


def test_rotation_exact_matches_sampled():
    P = DyadicPartition.on(UNIT, 2)
    ex = entropy_rate(rotation(), P, 8)
    sm = entropy_rate(rotation(), P, 8, SamplingPlan(1_000_000), method="sampled")
    assert np.allclose(ex.entropies, sm.entropies, atol=5e-3)


def test_exact_matches_sampled_for_cat():
    P = DyadicPartition.on(UNIT, 2)
    ex = entropy_rate(cat_map(), P, 6)
    sm = entropy_rate(cat_map(), P, 6, SamplingPlan(1_000_000), method="sampled")
    assert ex.method == "exact-polygons"
    assert np.allclose(ex.entropies[:4], sm.entropies[:4], atol=0.01)


def test_join_entropies_nondecreasing():
    for sys in (cat_map(), baker_map(), standard_map(2.0)):
        P = DyadicPartition.on(sys.domain, 2)
        r = entropy_rate(sys, P, 6, SamplingPlan(250_000), method="sampled")
        assert all(b >= a - 1e-12 for a, b in zip(r.entropies, r.entropies[1:]))
        per_step = [h / (n + 1) for n, h in enumerate(r.entropies)]
        assert all(b <= a + 0.02 for a, b in zip(per_step[1:], per_step[2:]))


def test_refinement_monotonicity():
    coarse = entropy_rate(baker_map(), DyadicPartition.on(UNIT, 1), 8, SamplingPlan(250_000))
    fine = entropy_rate(baker_map(), DyadicPartition.on(UNIT, 2), 8, SamplingPlan(250_000))
    assert fine.rate >= coarse.rate - 0.02


def test_exact_method_is_refused_for_smooth_maps():
    with pytest.raises(UnsupportedError):
        entropy_rate(standard_map(3.0), DyadicPartition.on(Box(0, 0, 2 * np.pi, 2 * np.pi), 2), 4,
                     method="exact")


# -------------------------------------------------------------- ks_entropy

def test_cat_ks_entropy():
    rep = ks_entropy(cat_map(), PartitionFamily.dyadic(UNIT, [2, 3]), 10)
    assert rep.ks_estimate == pytest.approx(oracles.CAT_ENTROPY, rel=0.05)
    assert not rep.inconclusive and rep.ks_estimate >= 0


def test_baker_ks_entropy():
    rep = ks_entropy(baker_map(), PartitionFamily.dyadic(UNIT, [1, 2, 3]), 12)
    assert rep.ks_estimate == pytest.approx(1.0, abs=0.03)
    assert rep.monotone_in_depth


def test_harmonic_time_one_is_not_chaotic():
    sys = harmonic_time_one()
    rep = ks_entropy(sys, PartitionFamily.dyadic(sys.domain.bounds, [1]), 40, SamplingPlan(250_000))
    best = rep.ks_estimate if rep.ks_estimate is not None else rep.best_effort
    assert best is not None and best <= 0.05


def test_inconclusive_report_is_flagged():
    # 1000 samples cannot support four levels of a 64-atom partition
    rep = ks_entropy(cat_map(), PartitionFamily.dyadic(UNIT, [3]), 6, SamplingPlan(1000), method="sampled")
    assert rep.inconclusive and rep.ks_estimate is None
    assert rep.rows[0].method == "failed"


def test_reports_are_deterministic_and_worker_independent():
    fam = PartitionFamily.dyadic(Box(0, 0, 2 * np.pi, 2 * np.pi), [1, 2])
    a = ks_entropy(standard_map(5.0), fam, 6, SamplingPlan(90_000, seed=7), workers=1)
    b = ks_entropy(standard_map(5.0), fam, 6, SamplingPlan(90_000, seed=7), workers=2)
    assert a.to_dict() == b.to_dict()
    c = ks_entropy(standard_map(5.0), fam, 6, SamplingPlan(90_000, seed=8))
    assert c.to_dict() != a.to_dict()


def test_stratified_plan_rounds_to_square():
    plan = SamplingPlan(1000)
    assert plan.size == 961
    q, p = plan.points(UNIT)
    assert q.size == 961 and q.min() >= 0 and q.max() < 1


def test_disk_plan_stays_inside():
    q, p = SamplingPlan(10_000).points(Disk(2.0))
    assert np.all(q ** 2 + p ** 2 < 4.0)


# ------------------------------------------------------------- systems

@pytest.mark.parametrize("make", [cat_map, baker_map, rotation, lambda: standard_map(10.0)])
def test_measure_preservation(make):
    assert measure_preservation_residual(make()) < 1e-8


def test_inverse_maps_round_trip():
    q, p = PLAN.points(UNIT)
    for sys in (cat_map(), baker_map(), rotation()):
        Q, P = sys.inverse(*sys.step(q, p))
        d = np.minimum(np.abs(Q - q), 1 - np.abs(Q - q))
        assert d.max() < 1e-12 and np.abs(P - p).max() < 1e-12


# ------------------------------------------------------------ lyapunov

def test_lyapunov_examples():
    cat = lyapunov_exponent(cat_map(), 500, 64)
    assert cat.value == pytest.approx(oracles.CAT_ENTROPY, abs=1e-3)
    assert abs(lyapunov_exponent(rotation(), 500, 64).value) < 1e-6
    std = lyapunov_exponent(standard_map(10.0), 2000, 256)
    assert std.value == pytest.approx(oracles.STANDARD_K10, rel=0.15)


def test_lyapunov_refuses_baker():
    with pytest.raises(UnsupportedError):
        lyapunov_exponent(baker_map())


def test_pesin_gap():
    lam = lyapunov_exponent(cat_map(), 200, 16)
    assert pesin_gap(lam.value, lam) == 0.0
    assert pesin_gap(None, lam) is None
    assert math.isclose(pesin_gap(0.9 * lam.value, lam), 0.1)
