"""Cross-backend oracle suite.

Every check compares two independent computations of the same number, or a
computation against an exact identity, and reports the worst discrepancy
against a fixed tolerance.  The whole suite runs in well under two minutes.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import quadratic as qd
from .chains import boundary, to_dense
from .filters import FilterSpec, spectral_IDelta, time_domain_IDelta
from .lattice import build_lattice, triple_partition
from .manybody import ManyBodyModel, Term, terms_from_hopping_matrix
from .models import hofstadter, rice_mele
from .models import PumpLoop
from .transport import (DenseEngine, FrameEngine, build_k_current, current_chain, hall_kubo,
                        hall_marker, modified_charge, thouless_pump, two_current_chain)

__all__ = ["Check", "CHECKS", "run_selftest", "format_line", "random_quadratic",
           "random_interacting"]

PROFILES = ("linear-odd", "cubic-odd", "zero")


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# random instances
# ---------------------------------------------------------------------------
def _random_hermitian(rng, n: int, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (a + a.conj().T)


def random_quadratic(rng, Lx: int = 3, Ly: int = 2, min_gap: float = 0.2):
    """Random complex hopping model on a small open square lattice."""
    lat = build_lattice("square", Lx, Ly)
    n = lat.n_orbitals
    while True:
        h = _random_hermitian(rng, n)
        filling = int(rng.integers(1, n))
        e = np.linalg.eigvalsh(h)
        if e[filling] - e[filling - 1] > min_gap:
            return qd.QuadraticModel(lat, h, filling, name="random")


def random_interacting(rng, n_orbitals: int = 6, n_particles: int = 3, V: float = 0.7,
                       min_gap: float = 0.1) -> ManyBodyModel:
    """Random hoppings plus nearest-neighbour density interactions on a chain."""
    lat = build_lattice("chain", n_orbitals)
    while True:
        h = _random_hermitian(rng, n_orbitals)
        terms = terms_from_hopping_matrix(h)
        terms += [Term("nn", (x, x + 1), float(V * rng.uniform(0.5, 1.5)))
                  for x in range(n_orbitals - 1)]
        m = ManyBodyModel(lat, terms, n_particles, name="random-interacting")
        if m.spectra().gap > min_gap:
            return m


def _to_ed(model: qd.QuadraticModel) -> ManyBodyModel:
    return ManyBodyModel(model.lattice, terms_from_hopping_matrix(model.h), model.n_particles)


def _psi(m: ManyBodyModel) -> np.ndarray:
    return m.dense_spectrum()[1][:, 0]


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------
def check_boundary_squared(rng) -> Check:
    """d(dM) = 0 for the operator two-current, free and interacting."""
    worst = 0.0
    for model in (random_quadratic(rng), random_interacting(rng)):
        gap = model.gap if isinstance(model, qd.QuadraticModel) else model.spectra().gap
        M, h = two_current_chain(model, FilterSpec(0.5 * gap))
        scale = max(M.max_entry_norm(), 1e-300)
        dd = boundary(boundary(M))
        worst = max(worst, dd.max_entry_norm() / scale)
        dh = boundary(boundary(h))
        worst = max(worst, dh.max_entry_norm() / max(h.max_entry_norm(), 1e-300))
    return Check("boundary_squared", worst, 1e-12, worst <= 1e-12)


def check_conservation(rng) -> Check:
    """i[H, Q_j] = (dJ)_j site by site."""
    worst = 0.0
    q = random_quadratic(rng)
    dJ = boundary(current_chain(q))
    Qc = q.charge_chain()
    for (j,), Qj in Qc.items():
        lhs = q.commutator_h(to_dense(Qj))
        rhs = dJ.entry(j)
        rhs = np.zeros_like(lhs) if rhs is None else to_dense(rhs)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    m = random_interacting(rng)
    dJ = boundary(m.current_chain())
    H = m.H.toarray()
    for (j,), Qj in m.charge_chain().items():
        Qd = Qj.toarray()
        lhs = 1j * (H @ Qd - Qd @ H)
        rhs = dJ.entry(j)
        rhs = np.zeros_like(lhs) if rhs is None else to_dense(rhs)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return Check("conservation_law", worst, 1e-10, worst <= 1e-10)


def check_kubo_basic_property(rng, cases: int = 10) -> Check:
    """<I(i[H, A]) B> = <AB> - <A><B> on three-site interacting systems."""
    worst = 0.0
    for _ in range(cases):
        m = random_interacting(rng, 3, int(rng.integers(1, 3)))
        sd = m.spectra()
        spec = FilterSpec(0.5 * sd.gap, PROFILES[int(rng.integers(3))])
        H = m.H.toarray()
        psi = sd.evecs[:, 0]
        A = _random_hermitian(rng, m.dim)
        B = _random_hermitian(rng, m.dim)
        lhs = np.vdot(psi, spectral_IDelta(1j * (H @ A - A @ H), sd, spec) @ B @ psi)
        ea, eb = np.vdot(psi, A @ psi), np.vdot(psi, B @ psi)
        rhs = np.vdot(psi, A @ B @ psi) - ea * eb
        worst = max(worst, abs(lhs - rhs))
    return Check("kubo_basic_property", float(worst), 1e-9, worst <= 1e-9, {"cases": cases})


def check_filter_swap(rng) -> Check:
    """Reported quantities do not depend on the in-gap interpolation."""
    model = hofstadter(Lx=12, Ly=12)
    p = model.lattice.center + 0.5
    part = triple_partition(model.lattice, p, (90, 210, 330))
    marker, kubo = [], []
    for prof in PROFILES:
        spec = model.default_filter(prof)
        marker.append(hall_marker(model, spec, part, 5.0).value)
        kubo.append(hall_kubo(model, spec, p, 5.0).value)
    worst = max(np.ptp(marker), np.ptp(kubo))
    # ground-state commutators of differently filtered operators (interacting)
    m = random_interacting(rng)
    sd = m.spectra()
    psi = sd.evecs[:, 0]
    A, B = _random_hermitian(rng, m.dim), _random_hermitian(rng, m.dim)
    vals = []
    for prof in PROFILES:
        IA = spectral_IDelta(A, sd, FilterSpec(0.5 * sd.gap, prof))
        vals.append(np.vdot(psi, (IA @ B - B @ IA) @ psi))
    ed = float(max(abs(v - vals[0]) for v in vals))
    worst = float(max(worst, ed))
    return Check("filter_swap_invariance", worst, 1e-8, worst <= 1e-8,
                 {"marker": marker, "kubo": kubo, "ed_commutator_spread": ed})


def check_quadratic_vs_ed(rng, cases: int = 100) -> Check:
    """Wick-theorem expectations against exact diagonalization.

    Per random instance: <a>, <a b>, <i[I(a), b]> and the operator identity
    ``I(a)^ = I(a^)`` for one-body ``a``.
    """
    worst = {"expect": 0.0, "product": 0.0, "kubo": 0.0, "operator": 0.0}
    for _ in range(cases):
        q = random_quadratic(rng)
        m = _to_ed(q)
        spec = q.default_filter(PROFILES[int(rng.integers(3))])
        psi = _psi(m)
        a = _random_hermitian(rng, q.dim)
        b = _random_hermitian(rng, q.dim)
        A, B = m.quadratic(a).toarray(), m.quadratic(b).toarray()
        P = q.projector
        worst["expect"] = max(worst["expect"],
                              abs(qd.ground_expectation(a, P) - np.vdot(psi, A @ psi)))
        worst["product"] = max(worst["product"],
                               abs(qd.ground_product(a, b, P) - np.vdot(psi, A @ B @ psi)))
        ia = q.idelta(a, spec)
        k_free = 1j * (qd.ground_product(ia, b, P) - qd.ground_product(b, ia, P))
        IA = m.idelta(A, spec)
        k_ed = 1j * np.vdot(psi, (IA @ B - B @ IA) @ psi)
        worst["kubo"] = max(worst["kubo"], abs(k_free - k_ed))
        worst["operator"] = max(worst["operator"],
                                float(np.abs(m.quadratic(ia).toarray() - IA).max()))
    w = float(max(worst.values()))
    return Check("quadratic_vs_ed", w, 1e-8, w <= 1e-8,
                 {"cases": cases, **{k: float(v) for k, v in worst.items()}})


def check_spectral_vs_time_domain(rng) -> Check:
    """Quadrature realization of the filter against the spectral one."""
    lat = build_lattice("chain", 4)
    h = np.diag([-1.5, -0.5, 0.6, 1.4]).astype(complex)
    for x in range(3):
        h[x, x + 1] = h[x + 1, x] = -0.4
    q = qd.QuadraticModel(lat, h, 2)
    spec = FilterSpec(0.5 * q.gap, "smooth")
    a = _random_hermitian(rng, 4)
    exact = q.idelta(a, spec)
    span = float(q.evals[-1] - q.evals[0])
    quad = time_domain_IDelta(a, lambda op, t: qd.evolve(op, t, q), spec, span)
    rel = float(np.linalg.norm(quad - exact, 2) / np.linalg.norm(exact, 2))
    return Check("spectral_vs_time_domain", rel, 1e-4, rel <= 1e-4, {"profile": "smooth"})


def check_marker_routes(rng) -> Check:
    """Eigenbasis-block marker against the chain-restriction marker."""
    model = hofstadter(Lx=12, Ly=12)
    spec = model.default_filter()
    p = model.lattice.center + 0.5
    part = triple_partition(model.lattice, p, (90, 210, 330))
    a = hall_marker(model, spec, part, 5.0, engine=FrameEngine(model, spec)).value
    b = hall_marker(model, spec, part, 5.0, engine=DenseEngine(model, spec)).value
    d = abs(a - b)
    return Check("marker_dense_vs_frame", float(d), 1e-10, d <= 1e-10,
                 {"frame": a, "dense": b})


def check_modified_charge(rng) -> Check:
    """Q~_j = Q_j - (dK)_j has no ground-to-excited matrix elements."""
    m = random_interacting(rng)
    sd = m.spectra()
    spec = FilterSpec(0.5 * sd.gap)
    kc = build_k_current(m, spec)
    psi = sd.evecs[:, 0]
    worst = 0.0
    for j in range(m.lattice.n_sites):
        v = modified_charge(m, kc, j) @ psi
        worst = max(worst, float(np.linalg.norm(v - psi * np.vdot(psi, v))))
    return Check("modified_charge_no_excitation", worst, 1e-9, worst <= 1e-9)


def check_static_pump(rng) -> Check:
    """A loop that does not move transports nothing."""
    frozen = rice_mele(0.0, 20)
    loop = PumpLoop(lambda s: frozen, 20, 9, "static")
    r = thouless_pump(loop, windows=(4, 8))
    v = abs(r.value)
    return Check("static_pump_zero", float(v), 1e-8, v <= 1e-8)


CHECKS: dict[str, Callable] = {
    "boundary_squared": check_boundary_squared,
    "conservation_law": check_conservation,
    "kubo_basic_property": check_kubo_basic_property,
    "filter_swap_invariance": check_filter_swap,
    "quadratic_vs_ed": check_quadratic_vs_ed,
    "spectral_vs_time_domain": check_spectral_vs_time_domain,
    "marker_dense_vs_frame": check_marker_routes,
    "modified_charge_no_excitation": check_modified_charge,
    "static_pump_zero": check_static_pump,
}


def run_selftest(seed: int = 0, only: list[str] | None = None) -> list[Check]:
    """Run the checks (all, or the named subset) with a fixed seed each."""
    out = []
    for i, (name, fn) in enumerate(CHECKS.items()):
        if only is not None and name not in only:
            continue
        rng = np.random.default_rng([seed, i])
        t0 = time.perf_counter()
        try:
            c = fn(rng)
        except Exception as exc:  # a crashing check is a failing check
            c = Check(name, float("nan"), 0.0, False, {"error": f"{type(exc).__name__}: {exc}"})
        c.seconds = time.perf_counter() - t0
        out.append(c)
    return out


def format_line(c: Check) -> str:
    mark = "PASS" if c.passed else "FAIL"
    return f"{mark}  {c.name:<32s} value={c.value:.3e}  tol={c.tolerance:.0e}  ({c.seconds:.1f}s)"
