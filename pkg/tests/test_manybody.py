import numpy as np
import pytest

from topocurrent import manybody as mb
from topocurrent.filters import FilterSpec, spectral_IDelta
from topocurrent.lattice import Region, build_lattice
from topocurrent.models import rice_mele_interacting
from topocurrent.selftest import random_interacting

from conftest import random_hermitian


def test_two_site_ground_energy():
    lat = build_lattice("chain", 2)
    t = 0.8
    m = mb.ManyBodyModel(lat, [mb.Term("hop", (0, 1), -t)], 1)
    gs = m.ground_state()
    assert gs.energy == pytest.approx(-abs(t))
    assert gs.gap == pytest.approx(2 * abs(t))


def test_sector_dimension_and_occupations():
    space = mb.SectorSpace(6, 3)
    assert space.dim == 20
    assert np.all(space.occupations().sum(axis=1) == 3)
    with pytest.raises(mb.DimensionError):
        mb.SectorSpace(40, 20)


@pytest.mark.parametrize("kind", ["pair", "create", "annihilate"])
def test_charge_violating_terms_are_rejected(kind):
    with pytest.raises(mb.ChargeViolationError):
        mb.Term(kind, (0, 1))


def test_term_validation():
    with pytest.raises(ValueError):
        mb.Term("hop", (0, 0))
    with pytest.raises(ValueError):
        mb.Term("spin-flip", (0, 1))
    t = mb.Term.from_dict({"kind": "hop", "orbitals": [0, 1], "amp": [0.5, -0.25]})
    assert t.amp == complex(0.5, -0.25)


def test_quadratic_to_sector_hermitian_and_charge(rng):
    m = random_interacting(rng)
    a = random_hermitian(rng, 6)
    A = m.quadratic(a).toarray()
    np.testing.assert_allclose(A, A.conj().T, atol=1e-13)
    assert np.abs(m.quadratic(np.eye(6)).toarray() - 3 * np.eye(m.dim)).max() < 1e-13
    # the one-body matrix of a region projector is the region charge
    mask = np.array([1, 1, 1, 0, 0, 0], bool)
    Q = m.charge(Region(m.lattice, [0, 1, 2])).toarray()
    np.testing.assert_allclose(m.quadratic(np.diag(mask.astype(float))).toarray(), Q)


def test_degenerate_ground_state_is_refused():
    # uniform half-filled ring: the two Fermi momenta give a degenerate level
    m = rice_mele_interacting(0.0, 4, delta=0.0, Delta=0.0, V=0.0)
    with pytest.raises(mb.DegenerateGroundStateError):
        m.ground_state()


def test_resolvent_and_kubo_pairing_dense(rng):
    m = random_interacting(rng)
    gs = m.ground_state()
    e, V = m.dense_spectrum()
    v = rng.normal(size=m.dim) + 1j * rng.normal(size=m.dim)
    x = mb.resolvent_apply(m, gs, v)
    G0 = V[:, 1:] @ np.diag(1 / (e[1:] - e[0])) @ V[:, 1:].conj().T
    np.testing.assert_allclose(x, G0 @ v, atol=1e-10)
    A, B = random_hermitian(rng, m.dim), random_hermitian(rng, m.dim)
    IA = spectral_IDelta(A, m.spectra(), FilterSpec(0.5 * m.spectra().gap))
    psi = gs.vector
    direct = (1j * np.vdot(psi, (IA @ B - B @ IA) @ psi)).real
    assert mb.kubo_pairing(m, gs, A, B) == pytest.approx(direct, abs=1e-10)


def test_expectation_mode_uses_iterative_solvers(rng, monkeypatch):
    m_dense = random_interacting(rng)
    e, V = m_dense.dense_spectrum()
    monkeypatch.setattr(mb, "OPERATOR_MODE_MAX", 4)
    m = mb.ManyBodyModel(m_dense.lattice, m_dense.terms, m_dense.n_particles)
    assert not m.operator_mode
    gs = m.ground_state()
    assert gs.energy == pytest.approx(e[0], abs=1e-10)
    assert abs(abs(np.vdot(gs.vector, V[:, 0])) - 1) < 1e-9
    v = rng.normal(size=m.dim) + 0j
    G0 = V[:, 1:] @ np.diag(1 / (e[1:] - e[0])) @ V[:, 1:].conj().T
    np.testing.assert_allclose(mb.resolvent_apply(m, gs, v), G0 @ v, atol=1e-9)
    with pytest.raises(mb.DimensionError):
        m.dense_spectrum()


def test_site_hamiltonians_sum_to_h(rng):
    m = random_interacting(rng)
    total = sum(h.toarray() for h in m.H_sites.values())
    np.testing.assert_allclose(total, m.H.toarray())


def test_quasi_adiabatic_evolution_follows_ground_state():
    family = lambda s: rice_mele_interacting(s, 4, V=0.5)  # noqa: E731
    m0 = family(0.0)
    spec = FilterSpec(0.5 * min(family(s).spectra().gap for s in np.linspace(0, 0.25, 9)))
    res = mb.quasi_adiabatic_evolve(family, m0.ground_state().vector, spec, 0.0, 0.25,
                                    steps=50, track_overlap=True)
    assert res.overlaps[-1] > 1 - 1e-4
    assert res.overlaps.min() > 1 - 1e-4


def test_quasi_adiabatic_rejects_large_threshold():
    family = lambda s: rice_mele_interacting(s, 4, V=0.5)  # noqa: E731
    psi = family(0.0).ground_state().vector
    with pytest.raises(Exception, match="filter invalid"):
        mb.quasi_adiabatic_evolve(family, psi, FilterSpec(100.0), steps=2)
