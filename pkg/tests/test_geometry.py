import math

import numpy as np
import pytest
from hypothesis import given

from moyalks.errors import PhaseSpaceMismatch, ResolutionError
from moyalks.geometry import (MeasureDescriptor, Observable, PhaseSpace, PointMap, hamiltonian_vector_field,
                              liouville_measure, poisson_bracket, symplectic_check)

from conftest import cubic_polys

Q, P = Observable.q(), Observable.p()


def test_phase_space_validation():
    with pytest.raises(ValueError):
        PhaseSpace.torus(N=7)
    with pytest.raises(ValueError):
        PhaseSpace.torus(N=6)
    with pytest.raises(ValueError):
        PhaseSpace("torus", -1.0, 1.0, 8, 8)
    with pytest.raises(ValueError):
        PhaseSpace("sphere", 1.0, 1.0, 8, 8)
    with pytest.raises(ValueError):
        PhaseSpace("torus", 1.0, 1.0, 8, 8, form_coefficient=2.0)


def test_phase_space_roundtrip_and_grid():
    s = PhaseSpace.plane_window(4.0, N=16)
    assert PhaseSpace.from_dict(s.to_dict()) == s
    q, p = s.axes()
    assert q[0] == -2.0 and q[-1] == pytest.approx(2.0 - 0.25)
    Qg, Pg = s.grid()
    assert Qg.shape == (16, 16) and np.all(Qg[:, 0] == q) and np.all(Pg[0] == p)


def test_liouville_measure_examples():
    t = PhaseSpace.torus(2 * math.pi, 2 * math.pi)
    m = liouville_measure(t)
    assert m.density == 1.0 and m.total_mass == pytest.approx((2 * math.pi) ** 2)
    assert liouville_measure(PhaseSpace.plane_window(1.0, 1.0)).total_mass == 1.0
    n = liouville_measure(t, "probability")
    assert n.density == pytest.approx(1 / (2 * math.pi) ** 2) and n.total_mass == 1.0
    with pytest.raises(ValueError):
        MeasureDescriptor(1.0, 0.0)


def test_poisson_bracket_examples():
    assert poisson_bracket(Q, P) == Observable.constant(1)
    H = Observable.parse("q^2/2 + p^4 - 3*q*p")
    assert poisson_bracket(H, H).is_zero()
    assert poisson_bracket(Q * Q, P * P) == Observable.poly({(1, 1): 4})


def test_poisson_bracket_fourier_matches_hand_derivative(torus64):
    f = Observable.parse("cos(q)", torus64)
    g = Observable.parse("sin(2*p)", torus64)
    b = poisson_bracket(f, g)
    x, y = np.array([0.3, 1.7, 4.0]), np.array([2.2, 0.1, 5.5])
    # {cos q, sin 2p} = -sin q * 2 cos 2p
    assert np.allclose(b.evaluate(x, y), -2 * np.sin(x) * np.cos(2 * y), atol=1e-13)


def test_poisson_bracket_grid_path(torus64):
    f = Observable.from_function(lambda q, p: np.sin(q + 2 * p), torus64)
    g = Observable.parse("cos(q)", torus64)
    b = poisson_bracket(f, g)
    Qg, Pg = torus64.grid()
    # d_q f d_p g - d_p f d_q g = 0 - 2 cos(q+2p) * (-sin q)
    assert np.allclose(b.values, 2 * np.cos(Qg + 2 * Pg) * np.sin(Qg), atol=1e-11)


def test_poisson_bracket_errors(torus64):
    other = PhaseSpace.torus(N=32)
    with pytest.raises(PhaseSpaceMismatch):
        poisson_bracket(Observable.parse("cos(q)", torus64), Observable.parse("cos(p)", other))
    noise = np.random.default_rng(0).standard_normal(torus64.shape)
    with pytest.raises(ResolutionError):
        poisson_bracket(Observable.grid(noise, torus64), Observable.parse("cos(p)", torus64))


def test_hamiltonian_vector_field_examples():
    X = hamiltonian_vector_field(Observable.parse("(q^2 + p^2)/2"))
    assert X(1.0, 0.0) == (0.0, -1.0)
    X = hamiltonian_vector_field(Observable.constant(5))
    assert X(0.3, -2.0) == (0.0, 0.0)
    X = hamiltonian_vector_field(P)
    assert X(0.3, -2.0) == (1.0, 0.0)


def test_symplectic_check_examples(rng):
    q, p = rng.uniform(-2, 2, 200), rng.uniform(-2, 2, 200)
    f, g = Observable.parse("q^3 + p"), Observable.parse("q*p^2")
    shift = PointMap(lambda x, y: (x + 0.7, y - 1.3))
    assert np.abs(symplectic_check(shift, f, g, q, p)).max() < 1e-10
    cat = PointMap(lambda x, y: (2 * x + y, x + y))
    scale = np.abs(poisson_bracket(f, g).evaluate(*cat(q, p))).max()
    assert np.abs(symplectic_check(cat, f, g, q, p)).max() < 1e-11 * scale
    dilation = PointMap(lambda x, y: (2 * x, 2 * y))
    # {f o phi, g o phi} = 4 {f, g} o phi for f = q, g = p: residual 3
    r = symplectic_check(dilation, Q, P, q, p)
    assert np.allclose(r, 3.0, atol=1e-8)


def test_grid_fourier_roundtrip(torus64):
    f = Observable.from_function(lambda q, p: np.exp(np.cos(q)) * np.sin(p) + np.cos(3 * q - p), torus64)
    back = f.to_fourier().to_grid()
    assert np.abs(back.values - f.values).max() <= 1e-12 * np.abs(f.values).max()


def test_fourier_conjugate_symmetry_for_real_fields(torus64):
    f = Observable.from_function(lambda q, p: np.cos(q) + np.sin(q - 2 * p) + 0.5, torus64).to_fourier()
    for (a, b), c in f.modes.items():
        assert f.modes[(-a, -b)] == pytest.approx(np.conj(c), abs=1e-14)


def test_serialization_roundtrip(torus64):
    for f in (Observable.parse("3/2*q^2*p - i*p"), Observable.parse("cos(q) + 2*sin(p)", torus64)):
        assert Observable.from_dict(f.to_dict()).equals(f, 1e-15)


@given(cubic_polys(), cubic_polys())
def test_poisson_antisymmetry(f, g):
    assert poisson_bracket(f, g) == -poisson_bracket(g, f)


@given(cubic_polys(), cubic_polys(), cubic_polys())
def test_poisson_leibniz(f, g, h):
    assert poisson_bracket(f, g * h) == poisson_bracket(f, g) * h + g * poisson_bracket(f, h)


@given(cubic_polys(), cubic_polys(), cubic_polys())
def test_poisson_jacobi(f, g, h):
    total = (poisson_bracket(f, poisson_bracket(g, h)) + poisson_bracket(g, poisson_bracket(h, f))
             + poisson_bracket(h, poisson_bracket(f, g)))
    assert total.is_zero()
