import math
from fractions import Fraction

import numpy as np
import pytest

from moyalks.entropy import Box, Disk, DyadicPartition, PartitionFamily, SamplingPlan, ks_entropy, from_flow
from moyalks.entropy.quantum import (NEGATIVITY_LIMIT, QuasiDistribution, ks_entropy_quantum,
                                     quantum_refinement_distribution, quantum_sweep, quasi_levels,
                                     symbol_point_map)
from moyalks.errors import UnsupportedError
from moyalks.flow import FlowSpec, flow_map
from moyalks.geometry import Observable, PhaseSpace

TAU = 2 * np.pi
TORUS_BOX = Box(0.0, 0.0, TAU, TAU)


def circ(a, b):
    return float(np.abs((a - b + np.pi) % TAU - np.pi).max())


def backward_counts(system, partition, n, plan):
    """Cylinder frequencies of x, T^-1 x, ..., coded like the quasi-probability path."""
    q, p = plan.points(system.domain)
    code = np.zeros(q.size, dtype=np.int64)
    for _ in range(n):
        code = code * partition.n_atoms + partition.label(q, p)
        q, p = system.inverse(q, p)
    codes, counts = np.unique(code, return_counts=True)
    return dict(zip(codes.tolist(), (counts / q.size).tolist()))


def test_zero_hbar_reproduces_classical_report():
    spec = FlowSpec.kicked_rotor(10.0, N=64)
    fam = PartitionFamily.dyadic(TORUS_BOX, [1, 2])
    plan = SamplingPlan(250_000, seed=4)
    rep = ks_entropy_quantum(spec, fam, 6, plan)
    direct = ks_entropy(from_flow(spec), fam, 6, plan)
    assert rep.quantum.to_dict() == direct.to_dict()
    assert rep.classical.to_dict() == direct.to_dict()
    assert rep.max_negativity == 0.0


def test_zero_hbar_distribution_matches_classical_counts():
    spec = FlowSpec.kicked_rotor(10.0, N=2048)
    P = DyadicPartition.on(TORUS_BOX, 1)
    qd = quantum_refinement_distribution(P, spec, 2)
    assert qd.reduced_to_classical and qd.negativity_mass == 0.0
    ref = backward_counts(from_flow(spec), P, 2, SamplingPlan(4_000_000))
    got = dict(zip(qd.codes.tolist(), qd.weights.tolist()))
    tv = 0.5 * sum(abs(got.get(k, 0.0) - ref.get(k, 0.0)) for k in set(got) | set(ref))
    assert tv < 1e-3


def test_quadratic_flow_has_no_negativity():
    # (q, p) -> (q + p, p) is a well defined shear of the torus
    space = PhaseSpace.torus(N=64)
    spec = FlowSpec(space, hamiltonian=Observable.poly({(0, 2): Fraction(1, 2)}), hbar=0.3)
    qd = quantum_refinement_distribution(DyadicPartition.on(TORUS_BOX, 2), spec, 3)
    assert qd.negativity_mass < 1e-8
    assert qd.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_kicked_rotor_distribution_reports_negativity():
    spec = FlowSpec.kicked_rotor(10.0, hbar=0.1, N=128)
    P = DyadicPartition.on(TORUS_BOX, 4)
    a = quantum_refinement_distribution(P, spec, 4)
    b = quantum_refinement_distribution(P, spec, 4)
    assert isinstance(a, QuasiDistribution) and not a.reduced_to_classical
    assert math.isfinite(a.negativity_mass) and 0.0 <= a.negativity_mass <= 1.0
    assert a.unreliable == (a.negativity_mass > NEGATIVITY_LIMIT)
    assert math.isfinite(a.entropy()) and a.entropy() > 0
    assert np.array_equal(a.codes, b.codes) and np.array_equal(a.weights, b.weights)


def test_quasi_levels_are_nested():
    spec = FlowSpec.kicked_rotor(3.0, hbar=0.1, N=64)
    levels = list(quasi_levels(DyadicPartition.on(TORUS_BOX, 1), spec, 3))
    assert [qd.n for qd in levels] == [1, 2, 3]
    H = [qd.entropy() for qd in levels]
    assert H[0] == pytest.approx(2.0, abs=0.01)
    assert H[0] <= H[1] <= H[2]
    assert all(qd.truncated_mass >= 0 for qd in levels)


def test_small_hbar_is_close_to_classical():
    P = DyadicPartition.on(TORUS_BOX, 1)
    classical = quantum_refinement_distribution(P, FlowSpec.kicked_rotor(1.0, N=128), 2)
    quantum = quantum_refinement_distribution(P, FlowSpec.kicked_rotor(1.0, hbar=0.01, N=128), 2,
                                              top_m=4, prune=0.0)
    a = dict(zip(classical.codes.tolist(), classical.weights.tolist()))
    b = dict(zip(quantum.codes.tolist(), np.clip(quantum.weights, 0, None).tolist()))
    tv = 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b))
    assert tv < 0.05


def test_partition_must_cover_the_torus():
    spec = FlowSpec.kicked_rotor(1.0, hbar=0.1, N=32)
    with pytest.raises(ValueError):
        quantum_refinement_distribution(DyadicPartition.on(Box(), 1), spec, 2)


def test_symbol_map_at_zero_hbar_is_the_inverse_map():
    spec = FlowSpec.kicked_rotor(10.0, N=128)
    sm = symbol_point_map(spec)
    q, p = SamplingPlan(1000, seed=2).points(TORUS_BOX)
    a = sm.system.forward(q, p)
    b = flow_map(spec).inverse(q, p)
    assert circ(a[0], b[0]) < 1e-9 and circ(a[1], b[1]) < 1e-5
    assert sm.resolution < 1e-12


def test_symbol_map_needs_a_torus():
    with pytest.raises(UnsupportedError):
        symbol_point_map(FlowSpec.harmonic(hbar=0.1))


def test_harmonic_is_not_quantum_chaotic():
    spec = FlowSpec.harmonic(hbar=0.5, L=8.0)
    fam = PartitionFamily.dyadic(Disk(4.0).bounds, [1])
    rep = ks_entropy_quantum(spec, fam, 40, SamplingPlan(250_000), domain=Disk(4.0))
    assert rep.h_hbar_best_effort <= 0.05
    assert rep.quantum_chaotic is False and rep.chaotic is False
    assert rep.max_negativity < 1e-8


def test_kicked_rotor_is_chaotic_at_zero_hbar():
    spec = FlowSpec.kicked_rotor(10.0, N=64)
    rep = ks_entropy_quantum(spec, PartitionFamily.dyadic(TORUS_BOX, [1]), 6, SamplingPlan(90_000))
    assert rep.chaotic and rep.quantum_chaotic
    d = rep.to_dict()
    assert d["chaotic"] is True and d["estimator"] == "quasi-probability"


def test_unknown_estimator():
    with pytest.raises(ValueError):
        ks_entropy_quantum(FlowSpec.kicked_rotor(1.0, hbar=0.1, N=32), PartitionFamily.dyadic(TORUS_BOX, [1]),
                           4, estimator="bogus")


def test_sweep_rows_carry_diagnostics():
    spec = FlowSpec.kicked_rotor(10.0, N=64)
    fam = PartitionFamily.dyadic(TORUS_BOX, [1])
    plan = SamplingPlan(40_000)
    rows = quantum_sweep(spec, [0.0, 0.1], fam, 5, plan)
    again = quantum_sweep(spec, [0.0, 0.1], fam, 5, plan)
    assert [r.to_dict() for r in rows] == [r.to_dict() for r in again]
    zero, q = rows
    assert zero.estimates["quasi-probability"] == zero.classical
    assert zero.estimates["symbol-point"] == zero.classical
    for e in ("quasi-probability", "symbol-point"):
        assert math.isfinite(q.estimates[e])
        assert q.negativity[e] is not None
    assert q.discrepancy is not None and q.discrepancy >= 0
