import numpy as np
import pytest

from topocurrent import quadratic as qd
from topocurrent.chains import boundary, to_dense
from topocurrent.lattice import Region, build_lattice, half_plane
from topocurrent.manybody import ManyBodyModel, dense_expm, terms_from_hopping_matrix
from topocurrent.models import atomic_insulator
from topocurrent.selftest import random_quadratic
from topocurrent.transport import DenseEngine, FrameEngine

from conftest import random_hermitian


def _ed(model):
    m = ManyBodyModel(model.lattice, terms_from_hopping_matrix(model.h), model.n_particles)
    return m, m.dense_spectrum()[1][:, 0]


def test_atomic_insulator_gap_and_filling():
    m = atomic_insulator(6, 6, q=3, spacing=2.0)
    assert m.gap == pytest.approx(2.0)
    assert m.n_particles == 12
    r1, r2 = m.projector.residuals()
    assert r1 < 1e-14 and r2 < 1e-14


def test_gapless_filling_is_rejected():
    lat = build_lattice("chain", 2)
    with pytest.raises(qd.GaplessError):
        qd.QuadraticModel(lat, np.zeros((2, 2)), 1)


def test_non_hermitian_hoppings_are_rejected():
    lat = build_lattice("chain", 2)
    with pytest.raises(ValueError, match="Hermitian"):
        qd.QuadraticModel(lat, np.array([[0, 1], [0, 0]]), 1)


def test_dimerized_ring_projector_matches_bloch_sum():
    n_cells, v, w = 8, 1.0, 0.4
    N = 2 * n_cells
    lat = build_lattice("chain", N, periodic=True)
    h = np.zeros((N, N), complex)
    for c in range(n_cells):
        a, b, a2 = 2 * c, 2 * c + 1, (2 * c + 2) % N
        h[a, b] = h[b, a] = -v
        h[b, a2] = h[a2, b] = -w
    model = qd.QuadraticModel(lat, h, n_cells)
    # oracle: lower-band Bloch states e^{ikc} u_k / sqrt(n_cells)
    P = np.zeros((N, N), complex)
    for m in range(n_cells):
        k = 2 * np.pi * m / n_cells
        hk = np.array([[0, -v - w * np.exp(-1j * k)], [-v - w * np.exp(1j * k), 0]])
        u = np.linalg.eigh(hk)[1][:, 0]
        psi = np.zeros(N, complex)
        for c in range(n_cells):
            psi[2 * c:2 * c + 2] = np.exp(1j * k * c) * u / np.sqrt(n_cells)
        P += np.outer(psi, psi.conj())
    np.testing.assert_allclose(model.projector.P, P, atol=1e-12)


def test_two_site_current_and_conservation():
    lat = build_lattice("chain", 2)
    t = 0.7
    model = qd.QuadraticModel(lat, np.array([[0, -t], [-t, 0]]), 1)
    J = qd.current_chain(model)
    expect = np.array([[0, 1j * t], [-1j * t, 0]])
    np.testing.assert_allclose(to_dense(J.entry(0, 1)), expect)
    np.testing.assert_allclose(model.current(Region(lat, [0]), Region(lat, [1])), expect)
    np.testing.assert_allclose(model.commutator_h(model.charge(Region(lat, [0]))), expect)


def test_conservation_law_on_hofstadter(hof12):
    dJ = boundary(qd.current_chain(hof12))
    worst = 0.0
    for (j,), Qj in hof12.charge_chain().items():
        lhs = hof12.commutator_h(to_dense(Qj))
        worst = max(worst, float(np.abs(lhs - to_dense(dJ.entry(j))).max()))
    assert worst <= 1e-10


def test_hamiltonian_chain_sums_to_h(hof12):
    total = sum(to_dense(v) for _, v in hof12.hamiltonian_chain().items())
    np.testing.assert_allclose(total, hof12.h, atol=1e-14)


def test_wick_expectations_match_ed(rng):
    for _ in range(10):
        q = random_quadratic(rng)
        m, psi = _ed(q)
        a, b = random_hermitian(rng, q.dim), random_hermitian(rng, q.dim)
        A, B = m.quadratic(a).toarray(), m.quadratic(b).toarray()
        assert abs(qd.ground_expectation(a, q.projector) - np.vdot(psi, A @ psi)) < 1e-10
        assert abs(qd.ground_product(a, b, q.projector) - np.vdot(psi, A @ B @ psi)) < 1e-10


def test_evolve_matches_ed(rng):
    q = random_quadratic(rng)
    m, _ = _ed(q)
    a = random_hermitian(rng, q.dim)
    t = 0.83
    U = dense_expm(-1j * t * m.H.toarray())
    ed = U.conj().T @ m.quadratic(a).toarray() @ U
    np.testing.assert_allclose(m.quadratic(qd.evolve(a, t, q)).toarray(), ed, atol=1e-10)


def test_frame_and_dense_engines_agree(hof12):
    spec = hof12.default_filter()
    lat = hof12.lattice
    p = lat.center + 0.5
    X, Y = half_plane(lat, "x", p[0], center=p), half_plane(lat, "y", p[1], center=p)
    vals = []
    for eng in (FrameEngine(hof12, spec), DenseEngine(hof12, spec)):
        kx = eng.idelta(eng.current(X, X.complement()))
        vals.append(eng.expect_comm(kx, eng.proj(Y)))
    assert abs(vals[0] - vals[1]) < 1e-10


# ---------------------------------------------------------------- amplitudes
def _amplitude(xs, proj):
    return qd.gaussian_process_amplitude(qd.GaussianProcess(tuple(xs)), proj).value


def test_phase_of_total_charge():
    q = atomic_insulator(6, 6)
    phi = 0.37
    x = 1j * phi * np.eye(q.dim)
    assert np.isclose(_amplitude([x], q.projector), np.exp(1j * phi * q.n_particles))


def test_exponential_and_inverse_cancel(rng):
    q = random_quadratic(rng)
    x = random_hermitian(rng, q.dim) + 0.3 * rng.normal(size=(q.dim, q.dim))
    assert np.isclose(_amplitude([x, -x], q.projector), 1.0, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_random_process_matches_ed(seed):
    rng = np.random.default_rng(seed)
    lat = build_lattice("chain", 4)
    while True:
        h = random_hermitian(rng, 4)
        if np.diff(np.linalg.eigvalsh(h))[1] > 0.2:
            break
    q = qd.QuadraticModel(lat, h, 2)
    m, psi = _ed(q)
    xs = [1j * random_hermitian(rng, 4) for _ in range(3)] + [0.2 * random_hermitian(rng, 4)]
    ed = np.eye(m.dim, dtype=complex)
    for x in xs:
        ed = ed @ dense_expm(m.quadratic(x))
    assert abs(_amplitude(xs, q.projector) - np.vdot(psi, ed @ psi)) < 1e-8


def test_amplitude_of_orthogonal_state_raises():
    lat = build_lattice("chain", 2)
    q = qd.QuadraticModel(lat, np.diag([-1.0, 1.0]), 1)
    swap = 0.5 * np.pi * np.array([[0, -1], [1, 0]], complex)
    with pytest.raises(qd.AmplitudeError):
        qd.gaussian_process_amplitude(qd.GaussianProcess((swap,)), q.projector)


def test_process_length_limit():
    q = atomic_insulator(3, 3)
    proc = qd.GaussianProcess(tuple(np.zeros((9, 9)) for _ in range(65)))
    with pytest.raises(ValueError, match="exceeds"):
        qd.gaussian_process_amplitude(proc, q.projector)
