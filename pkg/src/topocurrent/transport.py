"""Transport invariants: Hall marker, Kubo Hall response, pumps, vortices.

Every quantity is evaluated through a small engine interface so the same
formula runs on three routes:

* ``FrameEngine``: free fermions, eigenbasis occupied/empty blocks only;
* ``DenseEngine``: free fermions with full single-particle matrices;
* ``ManyBodyEngine``: exact diagonalization in operator mode.

The first two are independent implementations and are cross-checked in the
test suite.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .chains import DressedChain, NChain, restrict, to_dense
from .filters import FilterError, FilterSpec
from .lattice import (GeometryError, Lattice, Region, TriplePartition, annulus, box, disk,
                      half_plane, sector)
from .manybody import (ChargeViolationError, DimensionError, ManyBodyModel, ManyBodyOperator)
from .quadratic import (GaussianProcess, GroundProjector, QuadraticModel, SpectralFrame,
                        current_chain, gaussian_process_amplitude)

__all__ = [
    "TransportResult",
    "KCurrent",
    "FrameEngine",
    "DenseEngine",
    "ManyBodyEngine",
    "engine_for",
    "trace_converged",
    "build_k_current",
    "modified_charge",
    "k_decay_profile",
    "two_current_chain",
    "hall_marker",
    "hall_kubo",
    "chern_marker_oracle",
    "transported_charge",
    "thouless_pump",
    "thouless_pump_ed",
    "pump_integer_spectrum_ed",
    "concat_loops",
    "FluxInsertion",
    "flux_insertion",
    "laughlin_charge",
    "BraidGeometry",
    "braid_geometry",
    "braiding_generators",
    "braiding_phase",
    "xxm_residual",
]


# ---------------------------------------------------------------------------
# results and convergence
# ---------------------------------------------------------------------------
@dataclass
class TransportResult:
    """Value of an invariant together with its convergence evidence.

    Attributes
    ----------
    quantity : str
    value : float
        For phases, the angle in ``(-pi, pi]``.
    cutoff : float
        Truncation radius of the final evaluation.
    trace : list of (radius, value)
    converged : bool
        Outcome of :func:`trace_converged` (``True`` when no trace applies).
    integer_distance : float or None
        Distance of ``value`` to the nearest integer where that is meaningful.
    extra : dict
        Quantity-specific diagnostics.
    """

    quantity: str
    value: float
    cutoff: float
    trace: list = field(default_factory=list)
    converged: bool = True
    integer_distance: float | None = None
    extra: dict = field(default_factory=dict)
    filter: dict | None = None
    model_hash: str = ""
    seconds: float | None = None


def trace_converged(trace: Sequence[tuple[float, float]], floor: float = 1e-3) -> bool:
    """Convergence test on a value-versus-radius trace.

    Passes when ``|v(r) - v(r_max)|`` does not increase over the last three
    radii before ``r_max``, or when all of those differences are below
    ``floor``.  Traces with fewer than four points pass only through the
    floor test.
    """
    if len(trace) < 2:
        return True
    vals = np.array([v for _, v in trace], float)
    diffs = np.abs(vals[:-1] - vals[-1])[-3:]
    if np.all(diffs <= floor):
        return True
    return len(diffs) == 3 and bool(np.all(np.diff(diffs) <= 0))


def _intdist(x: float) -> float:
    return float(abs(x - round(x)))


def _model_hash(model) -> str:
    import hashlib
    return hashlib.sha256(model.fingerprint()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# engines
# ---------------------------------------------------------------------------
class FrameEngine:
    """Free-fermion engine on occupied/empty eigenbasis blocks.

    Region currents are sliced straight out of the sparse Hamiltonian, so
    this route shares no code with the chain restriction used by
    :class:`DenseEngine`.
    """

    name = "quadratic-frame"

    def __init__(self, model: QuadraticModel, spec: FilterSpec):
        self.model = model
        self.spec = spec
        self.frame = SpectralFrame(model, spec)

    def proj(self, region):
        return self.frame.project(region)

    def current(self, X: Region, Y: Region):
        return self.frame.current(X, Y)

    def idelta(self, b):
        return self.frame.idelta(b)

    def comm_h(self, b):
        return self.frame.commutator_h(b)

    def expect_comm(self, a, b) -> complex:
        return SpectralFrame.expect_commutator(a, b)


class DenseEngine:
    """Free-fermion engine on full single-particle matrices."""

    name = "quadratic-dense"

    def __init__(self, model: QuadraticModel, spec: FilterSpec):
        self.model = model
        self.spec = spec
        model.spectra.check(spec)
        self._J = current_chain(model)
        self.P = model.projector.P

    def proj(self, region):
        return model_charge(self.model, region)

    def current(self, X, Y):
        j = restrict(self._J, (X, Y)).payload
        if np.isscalar(j):
            return np.zeros((self.model.dim,) * 2, complex)
        return to_dense(j)

    def idelta(self, a):
        return self.model.idelta(a, self.spec)

    def comm_h(self, a):
        return self.model.commutator_h(a)

    def expect_comm(self, a, b) -> complex:
        c = a @ b - b @ a
        return complex(np.einsum("xy,yx->", c, self.P))


class ManyBodyEngine:
    """Exact-diagonalization engine in operator mode."""

    name = "manybody-operator"

    def __init__(self, model: ManyBodyModel, spec: FilterSpec):
        self.model = model
        self.spec = spec
        model.spectra().check(spec)
        self.psi = model.ground_state().vector
        self.H = model.H.toarray()
        self._J = model.current_chain()

    def proj(self, region):
        return self.model.charge(region).toarray()

    def current(self, X, Y):
        j = restrict(self._J, (X, Y)).payload
        if np.isscalar(j):
            return np.zeros((self.model.dim,) * 2, complex)
        return to_dense(j)

    def idelta(self, a):
        return self.model.idelta(a, self.spec)

    def comm_h(self, a):
        return 1j * (self.H @ a - a @ self.H)

    def expect_comm(self, a, b) -> complex:
        v = self.psi
        return complex(np.vdot(v, a @ (b @ v)) - np.vdot(v, b @ (a @ v)))


def model_charge(model: QuadraticModel, region) -> np.ndarray:
    return model.charge(region)


def engine_for(model, spec: FilterSpec, route: str = "frame"):
    if isinstance(model, ManyBodyModel):
        return ManyBodyEngine(model, spec)
    if route == "dense":
        return DenseEngine(model, spec)
    return FrameEngine(model, spec)


def _qtilde(eng, region):
    """Modified charge of a region: Q_X - I(i[H, Q_X])."""
    q = eng.proj(region)
    return q - eng.idelta(eng.comm_h(q))


def _k(eng, X, Y):
    return eng.idelta(eng.current(X, Y))


# ---------------------------------------------------------------------------
# K-current and two-current chains
# ---------------------------------------------------------------------------
@dataclass
class KCurrent:
    """Dressed current ``K_jk = I(J_jk)`` as a lazily evaluated chain."""

    chain: DressedChain
    filter: FilterSpec
    cutoff: float

    def entry(self, j: int, k: int):
        return self.chain.entry(j, k)

    def restrict(self, X: Region, Y: Region) -> np.ndarray:
        return self.chain.restrict((X, Y)).payload


def build_k_current(model, spec: FilterSpec, cutoff: float = np.inf) -> KCurrent:
    """K_jk = I(J_jk) for every current-carrying pair within ``cutoff``."""
    if isinstance(model, ManyBodyModel):
        model.spectra().check(spec)
        J = model.current_chain()
        fn = lambda a: model.idelta(a, spec)  # noqa: E731
    else:
        model.spectra.check(spec)
        J = current_chain(model)
        fn = lambda a: model.idelta(to_dense(a), spec)  # noqa: E731
    if np.isfinite(cutoff):
        J = NChain(1, J.lattice, dict(J.items()), J.backend, cutoff, True, J.zero)
    return KCurrent(DressedChain(J, fn, cutoff), spec, cutoff)


def modified_charge(model, kc: KCurrent, j: int) -> np.ndarray:
    """Q~_j = Q_j - sum_k K_jk."""
    lat = model.lattice
    mask = np.zeros(lat.n_sites, bool)
    mask[j] = True
    X = Region.from_mask(lat, mask)
    rest = X.complement()
    q = model.charge(X)
    q = q.toarray() if sp.issparse(q) else q
    return q - kc.restrict(X, rest)


def k_decay_profile(model: QuadraticModel, kc: KCurrent, j: int, k: int,
                    radii: Sequence[float]) -> list[tuple[float, float]]:
    """Norm of ``K_jk`` outside a disk of radius ``r`` around the bond centre.

    Returns ``(r, || K_jk restricted to orbitals at distance >= r ||)``.
    """
    K = to_dense(kc.entry(j, k))
    lat = model.lattice
    mid = lat.positions[j] + 0.5 * lat.pair_displacement(j, k)
    d = np.repeat(lat.distance(mid), lat.orbitals)
    out = []
    for r in radii:
        far = d >= r
        sub = K.copy()
        sub[np.ix_(~far, ~far)] = 0.0
        out.append((float(r), float(np.linalg.norm(sub))))
    return out


def two_current_chain(model, spec: FilterSpec) -> tuple[NChain, NChain]:
    """Operator two-current ``M_jkl`` and scalar chain ``h_jkl = 2 <M_jkl>``.

    ``M_jkl = pi i ([Q_j + Q~_j, K_kl] + [Q_k + Q~_k, K_lj] + [Q_l + Q~_l, K_jk])``.
    Dense, so only meant for small lattices.
    """
    eng = DenseEngine(model, spec) if isinstance(model, QuadraticModel) \
        else ManyBodyEngine(model, spec)
    lat = model.lattice
    n = lat.n_sites
    single = [Region(lat, [j]) for j in range(n)]
    kc = build_k_current(model, spec)
    K = {}
    for j in range(n):
        for k in range(n):
            if j != k:
                v = kc.entry(j, k)
                K[j, k] = to_dense(v) if v is not None else None
    QQ = [eng.proj(r) + _qtilde(eng, r) for r in single]
    ent, scal = {}, {}
    for j in range(n):
        for k in range(j + 1, n):
            for l in range(k + 1, n):
                acc = None
                for a, b, c in ((j, k, l), (k, l, j), (l, j, k)):
                    kb = K[b, c]
                    if kb is None:
                        continue
                    term = QQ[a] @ kb - kb @ QQ[a]
                    acc = term if acc is None else acc + term
                if acc is None:
                    continue
                m = np.pi * 1j * acc
                ent[(j, k, l)] = m
                scal[(j, k, l)] = 2.0 * _expect(eng, m)
    dim = QQ[0].shape[0]
    M = NChain(2, lat, ent, "manybody" if isinstance(model, ManyBodyModel) else "quadratic",
               selfadjoint=True, zero=np.zeros((dim, dim), complex))
    h = NChain(2, lat, scal, "scalar", zero=0.0)
    return M, h


def _expect(eng, a) -> complex:
    if isinstance(eng, DenseEngine):
        return complex(np.einsum("xy,yx->", a, eng.P))
    v = eng.psi
    return complex(np.vdot(v, a @ v))


# ---------------------------------------------------------------------------
# Hall marker and Kubo formula
# ---------------------------------------------------------------------------
def _check_room(lat: Lattice, point, radius: float):
    if lat.periodic:
        if 2 * radius >= min(lat.period):
            raise GeometryError(
                f"truncation radius {radius} does not fit in the torus {lat.period}")
        return
    lo, hi = lat.bbox
    p = np.asarray(point, float)
    room = float(min(np.min(p - lo), np.min(hi - p)))
    if room < radius:
        raise GeometryError(
            f"junction is {room:.2f} from the lattice edge, less than the cutoff {radius}")


def _marker_value(eng, A, B, C) -> complex:
    tot = 0.0 + 0.0j
    for X, Y, Z in ((A, B, C), (B, C, A), (C, A, B)):
        qq = eng.proj(X) + _qtilde(eng, X)
        tot += eng.expect_comm(qq, _k(eng, Y, Z))
    # sigma = 2 <M_ABC>,  M_ABC = pi i sum_cyc [Q_X + Q~_X, K_YZ]
    return 2.0 * np.pi * 1j * tot


def _radii(cutoff: float, n: int = 4) -> list[float]:
    return [float(cutoff - n + 1 + i) for i in range(n) if cutoff - n + 1 + i > 0]


def hall_marker(model, spec: FilterSpec, partition: TriplePartition, cutoff: float = 8.0,
                route: str = "frame", trace_points: int = 4, floor: float = 1e-3,
                engine=None) -> TransportResult:
    """Hall marker ``sigma = 2 sum_{j in A, k in B, l in C} <M_jkl>``.

    The three sectors are truncated to a disk of radius ``cutoff`` around the
    junction.  The value carries the partition orientation, so clockwise and
    counterclockwise partitions report the same number.
    """
    t0 = time.perf_counter()
    lat = partition.lattice
    _check_room(lat, partition.point, cutoff)
    eng = engine or engine_for(model, spec, route)
    trace = []
    imag = 0.0
    for r in _radii(cutoff, trace_points):
        A, B, C = partition.truncated(r)
        v = partition.orientation * _marker_value(eng, A, B, C)
        trace.append((r, float(v.real)))
        imag = max(imag, abs(v.imag))
    value = trace[-1][1]
    return TransportResult("hall_marker", value, cutoff, trace, trace_converged(trace, floor),
                           _intdist(value), {"imag_residual": imag, "route": eng.name},
                           spec.as_dict(), _model_hash(model), time.perf_counter() - t0)


def hall_kubo(model, spec: FilterSpec, point, cutoff: float = 8.0, route: str = "frame",
              shift_x: float = 0.0, trace_points: int = 4, floor: float = 1e-3,
              engine=None, X: Region | None = None, Y: Region | None = None) -> TransportResult:
    """``2 pi sigma_Hall = 2 pi i <[K_{X Xbar}, K_{Y Ybar}]>``.

    By default X is the right half-plane ``x > p_x + shift_x`` and Y the
    upper half-plane ``y > p_y``.  Other transverse regions crossing at ``p``
    may be passed explicitly.  X, Y and their complements are truncated to
    the disk of radius ``cutoff`` around ``p``.
    """
    t0 = time.perf_counter()
    lat = model.lattice
    p = np.asarray(point, float)
    _check_room(lat, p, cutoff)
    eng = engine or engine_for(model, spec, route)
    trace = []
    imag = 0.0
    for r in _radii(cutoff, trace_points):
        D = disk(lat, p, r)
        Xr = (half_plane(lat, "x", p[0] + shift_x, center=p) if X is None else X) & D
        Yr = (half_plane(lat, "y", p[1], center=p) if Y is None else Y) & D
        kx = _k(eng, Xr, D - Xr)
        ky = _k(eng, Yr, D - Yr)
        v = 2 * np.pi * 1j * eng.expect_comm(kx, ky)
        trace.append((r, float(v.real)))
        imag = max(imag, abs(v.imag))
    value = trace[-1][1]
    return TransportResult("hall_kubo", value, cutoff, trace, trace_converged(trace, floor),
                           _intdist(value), {"imag_residual": imag, "route": eng.name},
                           spec.as_dict(), _model_hash(model), time.perf_counter() - t0)


def chern_marker_oracle(proj: GroundProjector, partition: TriplePartition,
                        cutoff: float = 8.0) -> float:
    """Projector formula ``12 pi i sum (P_jk P_kl P_lj - P_jl P_lk P_kj)``.

    Written with the correlation matrix ``C = P^T`` (``C_xy = <c+_x c_y>``);
    sites are restricted to the disk of radius ``cutoff``.
    """
    if not isinstance(proj, GroundProjector):
        raise TypeError("the projector oracle needs free-fermion ground-state data")
    A, B, C = partition.truncated(cutoff)
    a, b, c = A.orbital_mask, B.orbital_mask, C.orbital_mask
    Cm = proj.P.T
    ab, bc, ca = Cm[np.ix_(a, b)], Cm[np.ix_(b, c)], Cm[np.ix_(c, a)]
    ac, cb, ba = Cm[np.ix_(a, c)], Cm[np.ix_(c, b)], Cm[np.ix_(b, a)]
    val = 12j * np.pi * (np.trace(ab @ bc @ ca) - np.trace(ac @ cb @ ba))
    return float(partition.orientation * val.real)


# ---------------------------------------------------------------------------
# transported charge and pumps
# ---------------------------------------------------------------------------
def _phi_matrix(lam: np.ndarray, ds: float) -> np.ndarray:
    """``int_0^ds exp(i w tau) dtau`` for ``w = lam_m - lam_n``."""
    w = lam[:, None] - lam[None, :]
    small = np.abs(w * ds) < 1e-8
    safe = np.where(small, 1.0, w)
    return np.where(small, ds * (1 + 0.5j * w * ds), (np.exp(1j * safe * ds) - 1) / (1j * safe))


class _TransportIntegrator:
    """Accumulates ``T = int alpha_s(c(s)) ds`` for piecewise-constant generators.

    On step k the generator ``f_k`` is frozen, ``alpha`` acts as
    ``A -> u_k^dagger exp(i f tau) A exp(-i f tau) u_k`` and the tau integral
    is done exactly in the eigenbasis of ``f_k``.
    """

    def __init__(self, dim: int, keys: Sequence):
        self.u = np.eye(dim, dtype=complex)
        self.t = {k: np.zeros((dim, dim), complex) for k in keys}

    def step(self, f: np.ndarray, cs: dict, ds: float):
        lam, V = np.linalg.eigh(0.5 * (f + f.conj().T))
        ph = _phi_matrix(lam, ds)
        W = V.conj().T @ self.u
        for key, c in cs.items():
            ct = V.conj().T @ c @ V
            self.t[key] += W.conj().T @ (ph * ct) @ W
        self.u = V @ (np.exp(-1j * lam * ds)[:, None] * W)

    def alpha(self, a: np.ndarray) -> np.ndarray:
        return self.u.conj().T @ a @ self.u


def _as_dense(x) -> np.ndarray:
    if isinstance(x, ManyBodyOperator):
        if x.displacement != 0:
            raise ChargeViolationError("generator does not conserve charge")
        blocks = list(x.blocks.values())
        return to_dense(blocks[0])
    return to_dense(x)


def _comm(a, b):
    return a @ b - b @ a


def _transport_operator(model, generator: Callable[[float], NChain], region: Region,
                        steps: int):
    """Integrate ``T_{G Gbar}``; returns ``(T, alpha(Q_G) - Q_G - T, expect)``."""
    G = region
    Gb = region.complement()
    if isinstance(model, ManyBodyModel):
        qG, qGb = model.charge(G).toarray(), model.charge(Gb).toarray()
        dim = model.dim
        Qtot = qG + qGb
        psi = model.ground_state().vector
        expect = lambda a: complex(np.vdot(psi, a @ psi))  # noqa: E731
    else:
        qG, qGb = model.charge(G), model.charge(Gb)
        dim = model.dim
        Qtot = None
        P = model.projector.P
        expect = lambda a: complex(np.einsum("xy,yx->", a, P))  # noqa: E731
    integ = _TransportIntegrator(dim, ["T"])
    ds = 1.0 / steps
    for k in range(steps):
        F = generator((k + 0.5) * ds)
        fG = _as_dense(restrict(F, (G,)).payload) if len(G) else np.zeros((dim, dim), complex)
        fGb = _as_dense(restrict(F, (Gb,)).payload) if len(Gb) else np.zeros((dim, dim), complex)
        if np.isscalar(fG):
            fG = np.zeros((dim, dim), complex)
        if np.isscalar(fGb):
            fGb = np.zeros((dim, dim), complex)
        if Qtot is not None:
            f = fG + fGb
            if np.abs(_comm(f, Qtot)).max(initial=0.0) > 1e-12:
                raise ChargeViolationError("generator does not commute with the total charge")
        c = 1j * _comm(fGb, qG) - 1j * _comm(fG, qGb)
        integ.step(fG + fGb, {"T": c}, ds)
    T = integ.t["T"]
    return T, integ.alpha(qG) - qG - T, expect


def transported_charge(model, generator: Callable[[float], NChain], region: Region,
                       steps: int = 100, check_identity: bool = True) -> TransportResult:
    """Charge moved into ``region`` by the flow generated by a 0-chain ``F(s)``.

    ``T_{G Gbar} = int_0^1 alpha_F(s)(i[F_Gbar, Q_G] - i[F_G, Q_Gbar]) ds``,
    evaluated with ``F`` frozen at step midpoints.  With ``check_identity``
    the defining relation ``alpha_F(1)(Q_G) - Q_G = T_{G Gbar}`` is verified
    and its residual reported.
    """
    t0 = time.perf_counter()
    T, ident, expect = _transport_operator(model, generator, region, steps)
    value = expect(T).real
    extra = {"steps": steps}
    if check_identity:
        extra["identity_residual"] = float(np.linalg.norm(ident))
    return TransportResult("transported_charge", float(value), np.inf, [], True,
                           _intdist(value), extra, None, _model_hash(model),
                           time.perf_counter() - t0)


def concat_loops(first, second):
    """Loop that runs ``first`` on [0, 1/2] and ``second`` on [1/2, 1]."""
    from .models import PumpLoop

    def build(s):
        return first.build(2 * s) if s < 0.5 else second.build(2 * s - 1)

    return PumpLoop(build, first.steps + second.steps, first.cut, f"{first.name}+{second.name}")


def _loop_gap(loop, n: int = 64) -> float:
    gaps = []
    for s in (np.arange(n) + 0.5) / n:
        m = loop.build(float(s))
        gaps.append(m.gap if isinstance(m, QuadraticModel) else m.ground_state().gap)
    return float(min(gaps))


def thouless_pump(loop, spec: FilterSpec | None = None, windows: Sequence[int] = (8, 12, 16, 24),
                  fd_step: float = 1e-4, fraction: float = 0.5) -> TransportResult:
    """Charge pumped across the cut by one quasi-adiabatic cycle (free fermions).

    The generator is ``G(s) = I(dH/ds)``, split into right and left parts
    ``G_X = I({Q_X, dH}/2)``.  Besides the pumped charge, the integer-spectrum
    residual ``sum_k |exp(2 pi i mu_k) - 1|`` over the eigenvalues ``mu_k`` of
    ``T_XY + Q_X`` is reported.  The sum bounds the many-body operator norm of
    ``exp(2 pi i (T_XY + Q_X)) - 1``.  The same residual for windows ``X_w``,
    ``Y_w`` of ``w`` sites on each side of the cut shows how fast the
    integrality becomes local.

    With an even step count the reported value is extrapolated from the
    sweep at ``steps`` and one at ``steps // 2``; the operators and residuals
    come from the finer sweep alone.
    """
    t0 = time.perf_counter()
    m0 = loop.build(0.0)
    if not isinstance(m0, QuadraticModel):
        raise TypeError("thouless_pump runs on free-fermion loops; use thouless_pump_ed")
    mismatch = loop.endpoint_mismatch()
    if mismatch > 1e-12:
        raise ValueError(f"loop is not closed: endpoint mismatch {mismatch:.2e}")
    min_gap = _loop_gap(loop)
    if spec is None:
        spec = FilterSpec(fraction * min_gap)
    if not spec.delta < min_gap:
        raise FilterError(
            f"filter invalid: threshold {spec.delta:.4g} is not below the loop gap {min_gap:.4g}")
    lat = m0.lattice
    N = m0.dim
    orb_site = lat.orbital_site
    X = orb_site > loop.cut
    Y = ~X
    piX, piY = np.diag(X.astype(complex)), np.diag(Y.astype(complex))
    wins = {}
    for w in windows:
        Xw = X & (orb_site <= loop.cut + w)
        Yw = Y & (orb_site > loop.cut - w)
        wins[w] = (Xw, Yw, np.diag(Xw.astype(complex)), np.diag(Yw.astype(complex)))
    def sweep(steps, with_windows):
        integ = _TransportIntegrator(N, ["T"] + (list(wins) if with_windows else []))
        expect_sum = 0.0
        ds = 1.0 / steps
        for k in range(steps):
            sm = (k + 0.5) * ds
            mid = loop.build(sm)
            dh = (loop.build(sm + fd_step).h - loop.build(sm - fd_step).h) / (2 * fd_step)

            def gen(mask_diag):
                return mid.idelta(0.5 * (mask_diag @ dh + dh @ mask_diag), spec)

            gX, gY = gen(piX), gen(piY)
            cs = {"T": 1j * _comm(gY, piX) - 1j * _comm(gX, piY)}
            # expectation route: <c(s)> in the ground state of H(s); only the
            # occupied-empty blocks of G enter, so this route is filter independent
            expect_sum += float(np.einsum("xy,yx->", cs["T"], mid.projector.P).real) * ds
            if with_windows:
                for w, (_, _, pXw, pYw) in wins.items():
                    cs[w] = 1j * _comm(gen(pYw), pXw) - 1j * _comm(gen(pXw), pYw)
            integ.step(gX + gY, cs, ds)
        return integ, expect_sum

    steps = loop.steps
    integ, expect_sum = sweep(steps, True)
    P0 = m0.projector.P
    fine = float(np.einsum("xy,yx->", integ.t["T"], P0).real)
    value, coarse = fine, None
    if steps % 2 == 0 and steps >= 4:
        # the midpoint sweep errs by O(ds^2) with a filter-dependent constant;
        # one Richardson step against half the step count removes it
        half, _ = sweep(steps // 2, False)
        coarse = float(np.einsum("xy,yx->", half.t["T"], P0).real)
        value = (4 * fine - coarse) / 3
    identity = float(np.linalg.norm(integ.alpha(piX) - piX - integ.t["T"]))
    trace = []
    residuals = {}
    for w, (Xw, _, pXw, _) in wins.items():
        tw = integ.t[w]
        mu = np.linalg.eigvalsh(0.5 * (tw + tw.conj().T) + pXw)
        residuals[int(w)] = float(np.sum(np.abs(np.exp(2j * np.pi * mu) - 1)))
        trace.append((float(w), float(np.einsum("xy,yx->", tw, P0).real)))
    mu = np.linalg.eigvalsh(0.5 * (integ.t["T"] + integ.t["T"].conj().T) + piX)
    full = float(np.sum(np.abs(np.exp(2j * np.pi * mu) - 1)))
    extra = {"integer_spectrum_residual": full,
             "integer_spectrum_by_window": residuals, "identity_residual": identity,
             "expectation_route": expect_sum, "unextrapolated": fine, "half_steps": coarse,
             "min_gap": min_gap, "steps": steps, "cut": loop.cut, "route": "quadratic-operator"}
    return TransportResult("thouless_pump", value, float(max(windows)), trace,
                           trace_converged(trace, 1e-3), _intdist(value), extra,
                           spec.as_dict(), _model_hash(m0), time.perf_counter() - t0)


def _ring_pair_weights(n: int, cut: int) -> dict:
    """Weight with which T_jk counts towards the flow across bond (cut, cut+1).

    ``j`` is on the right of the bond and ``k`` on the left along the
    shortest path through the bond; antipodal pairs split evenly between the
    two paths.
    """
    w = {}
    for j in range(n):
        for k in range(n):
            if j == k:
                continue
            dr = (j - cut - 1) % n
            dl = (cut - k) % n
            length = dr + dl + 1
            if 2 * length < n:
                w[j, k] = 1.0
            elif 2 * length == n:
                w[j, k] = 0.5
    return w


def _bond_charge_rate(loop, s: float, weights, Q, fd_step: float, first: bool):
    """Rate ``d/ds`` of the charge crossing the cut bond at loop parameter ``s``."""
    from .manybody import resolvent_apply

    m = loop.build(s)
    gs = m.ground_state(cross_sectors=first)
    mp, mm = loop.build(s + fd_step), loop.build(s - fd_step)
    dH = {j: (mp.H_sites[j] - mm.H_sites[j]) / (2 * fd_step) for j in mp.H_sites}
    psi = gs.vector
    xs = [resolvent_apply(m, gs, Qj @ psi) for Qj in Q]
    dpsi = {j: dH[j] @ psi for j in dH}

    def pair(a_site, b_site):
        # <i[I(dH_a), Q_b]> = -2 Re <dH_a G0 Q_b>
        if a_site not in dpsi:
            return 0.0
        return float(-2.0 * np.vdot(dpsi[a_site], xs[b_site]).real)

    tot = 0.0
    for (j, k), wt in weights.items():
        tot += wt * (pair(k, j) - pair(j, k))
    return tot, gs


def thouless_pump_ed(loop, spec: FilterSpec | None = None, n_s: int | None = None,
                     fd_step: float = 1e-4, fraction: float = 0.5) -> TransportResult:
    """Pumped charge of an interacting ring in expectation mode.

    Along the loop the state is the unique ground state of ``H(s)``, which is
    what the exact filter transports.  The pair current is
    ``<T_jk> = int (<i[G_k, Q_j]> - <i[G_j, Q_k]>) ds`` with
    ``<i[I(A), B]> = -2 Re <A G0 B>`` from resolvent solves.  The charge
    across bond ``(cut, cut+1)`` adds ``T_jk`` over pairs whose shortest path
    crosses that bond; antipodal pairs count half.  The ``s`` integral is a
    periodic trapezoid rule.

    On a ring the pair currents that wrap around are dropped, so the result
    carries a finite-size error that decays with the ring length.
    """
    t0 = time.perf_counter()
    m0 = loop.build(0.0)
    if not isinstance(m0, ManyBodyModel):
        raise TypeError("thouless_pump_ed needs a many-body loop")
    mismatch = loop.endpoint_mismatch()
    if mismatch > 1e-12:
        raise ValueError(f"loop is not closed: endpoint mismatch {mismatch:.2e}")
    n_s = n_s or loop.steps
    n = m0.lattice.n_sites
    weights = _ring_pair_weights(n, loop.cut)
    Q = [m0.site_charge(j) for j in range(n)]
    vals, gaps = [], []
    cross_gap = np.inf
    for i in range(n_s):
        s = i / n_s
        rate, gs = _bond_charge_rate(loop, s, weights, Q, fd_step, first=(i == 0))
        if spec is not None and not spec.delta < gs.gap:
            raise FilterError(f"filter invalid: gap {gs.gap:.4g} at s={s:.3f}")
        if i == 0:
            cross_gap = gs.gap_cross
        gaps.append(gs.gap)
        vals.append(rate)
    value = float(np.mean(vals))
    min_gap = float(min(gaps))
    if spec is None:
        spec = FilterSpec(fraction * min_gap)
    extra = {"min_gap": min_gap, "cross_sector_gap_at_s0": float(cross_gap), "n_s": n_s,
             "cut": loop.cut, "sites": n, "dimension": m0.dim,
             "route": "manybody-operator" if m0.operator_mode else "manybody-expectation"}
    return TransportResult("thouless_pump_ed", value, float(n // 2), [], True,
                           _intdist(value), extra, spec.as_dict(), _model_hash(m0),
                           time.perf_counter() - t0)


def pump_integer_spectrum_ed(loop, region: Region, spec: FilterSpec | None = None,
                             fraction: float = 0.5, fd_step: float = 1e-4) -> TransportResult:
    """Integer-spectrum residual of ``T_{G Gbar} + Q_G`` for an interacting loop.

    Operator mode: the generator ``F_j(s) = I(dH_j/ds)`` is built on the full
    sector and :func:`transported_charge` integrates the flow.  The returned
    value is ``max_k |exp(2 pi i mu_k) - 1|`` over the eigenvalues ``mu_k``
    of ``T + Q_G``, i.e. the operator norm of ``exp(2 pi i (T + Q_G)) - 1``.
    """
    t0 = time.perf_counter()
    m0 = loop.build(0.0)
    if not isinstance(m0, ManyBodyModel):
        raise TypeError("pump_integer_spectrum_ed needs a many-body loop")
    if not m0.operator_mode:
        raise DimensionError(f"operator mode needs a small sector, got dimension {m0.dim}")
    min_gap = _loop_gap(loop)
    if spec is None:
        spec = FilterSpec(fraction * min_gap)
    if not spec.delta < min_gap:
        raise FilterError(
            f"filter invalid: threshold {spec.delta:.4g} is not below the loop gap {min_gap:.4g}")
    lat = m0.lattice
    # every build makes a fresh lattice; move the region onto this one
    region = Region(lat, region.sites)

    def generator(s):
        mid = loop.build(s)
        mp, mm = loop.build(s + fd_step), loop.build(s - fd_step)
        ent = {}
        for j in mp.H_sites:
            dH = (mp.H_sites[j] - mm.H_sites[j]) / (2 * fd_step)
            g = mid.idelta(dH, spec)
            ent[(j,)] = 0.5 * (g + g.conj().T)
        return NChain(0, lat, ent, "manybody", selfadjoint=True,
                      zero=np.zeros((m0.dim, m0.dim), complex))

    T, ident, expect = _transport_operator(m0, generator, region, loop.steps)
    qG = m0.charge(region).toarray()
    mu = np.linalg.eigvalsh(0.5 * (T + T.conj().T) + qG)
    resid = float(np.max(np.abs(np.exp(2j * np.pi * mu) - 1)))
    extra = {"transported_charge": float(expect(T).real), "min_gap": min_gap,
             "steps": loop.steps, "dimension": m0.dim,
             "identity_residual": float(np.linalg.norm(ident)), "route": "manybody-operator"}
    return TransportResult("pump_integer_spectrum", resid, np.inf, [], True, None, extra,
                           spec.as_dict(), _model_hash(m0), time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# flux insertion and the Laughlin argument
# ---------------------------------------------------------------------------
class FluxInsertion:
    """Vortex insertion ``alpha_phi(a) = exp(i phi f) a exp(-i phi f)``.

    ``f = Q_A' - K_{A'B'}`` with ``A' = A cap D`` and ``B' = B cap D`` for the
    disk ``D`` of radius ``radius`` around the junction.  On free fermions
    ``f`` is a single-particle matrix and the state is the ground projector;
    on ED (operator mode) ``f`` is the sector matrix and the state is the
    ground-state density matrix.  In both cases ``<a> = tr(a rho)``.
    """

    def __init__(self, model, spec: FilterSpec, partition: TriplePartition, radius: float):
        self.model = model
        self.spec = spec
        self.partition = partition
        self.radius = radius
        if isinstance(model, ManyBodyModel):
            self.engine = ManyBodyEngine(model, spec)
            psi = self.engine.psi
            self.rho = np.outer(psi, psi.conj())
        else:
            self.engine = DenseEngine(model, spec)
            self.rho = model.projector.P
        D = disk(partition.lattice, partition.point, radius)
        self.A = partition.A & D
        self.B = partition.B & D
        g = self.engine.proj(self.A) - _k(self.engine, self.A, self.B)
        self.generator = 0.5 * (g + g.conj().T)
        self.lam, self.V = np.linalg.eigh(self.generator)

    def unitary(self, phi: float) -> np.ndarray:
        """``exp(i phi f)``."""
        return (self.V * np.exp(1j * phi * self.lam)) @ self.V.conj().T

    def state(self, phi: float) -> np.ndarray:
        """Density (projector or ``|psi><psi|``) after inserting flux ``phi``."""
        v = self.unitary(-phi)
        return v @ self.rho @ v.conj().T

    def expect(self, a, phi: float) -> complex:
        """``<alpha_phi(a)>`` in the original ground state."""
        return complex(np.einsum("xy,yx->", to_dense(a), self.state(phi)))

    def truncation_residual(self, grow: float = 2.0) -> float:
        """Relative change of the generator near the junction when the disk grows."""
        lat = self.partition.lattice
        D2 = disk(lat, self.partition.point, self.radius + grow)
        g2 = self.engine.proj(self.partition.A & D2) - _k(
            self.engine, self.partition.A & D2, self.partition.B & D2)
        if isinstance(self.model, ManyBodyModel):
            a, b = self.generator, g2
        else:
            core = disk(lat, self.partition.point, 0.5 * self.radius).orbital_mask
            a = self.generator[np.ix_(core, core)]
            b = g2[np.ix_(core, core)]
        return _relative(np.linalg.norm(a - b), np.linalg.norm(a))


def flux_insertion(model, spec: FilterSpec, partition: TriplePartition,
                   radius: float, max_residual: float | None = None) -> FluxInsertion:
    """Build the vortex insertion; optionally reject a too-small disk.

    ``max_residual`` bounds :meth:`FluxInsertion.truncation_residual`.
    """
    _check_room(partition.lattice, partition.point, radius)
    fi = FluxInsertion(model, spec, partition, radius)
    if max_residual is not None:
        res = fi.truncation_residual()
        if res > max_residual:
            raise GeometryError(
                f"flux-insertion disk too small: truncation residual {res:.2e} > {max_residual:g}")
    return fi


def _laughlin_value(fi: FluxInsertion, r: float, w: float) -> float:
    lat = fi.partition.lattice
    p = fi.partition.point
    eng = fi.engine
    Xo = annulus(lat, p, r, r + w)            # outer shell of the thickened circle
    Yi = annulus(lat, p, max(r - w, 0.0), r)  # inner shell
    piX, piY = eng.proj(Xo), eng.proj(Yi)
    fX = eng.proj(fi.A & Xo) - _k(eng, fi.A & Xo, fi.B)
    fY = eng.proj(fi.A & Yi) - _k(eng, fi.A & Yi, fi.B)
    c = 1j * _comm(fY, piX) - 1j * _comm(fX, piY)
    # int_0^{2 pi} tr(alpha_phi(c) rho) dphi, done in the eigenbasis of f
    V, lam = fi.V, fi.lam
    ct = V.conj().T @ c @ V
    Pt = V.conj().T @ fi.rho @ V
    om = lam[None, :] - lam[:, None]          # om[m, n] = lam_n - lam_m
    small = np.abs(om) < 1e-12
    safe = np.where(small, 1.0, om)
    kern = np.where(small, 2 * np.pi, (1 - np.exp(-2j * np.pi * safe)) / (1j * safe))
    return float(np.sum(ct * Pt.T * kern).real)


def laughlin_charge(model, spec: FilterSpec, partition: TriplePartition,
                    radii: Sequence[float] = (4, 5, 6, 7, 8), width: float | None = None,
                    flux_radius: float | None = None, sigma: float | None = None,
                    floor: float = 1e-2) -> TransportResult:
    """Charge carried outward through a circle while one flux quantum is inserted.

    For each circle radius ``r`` the thickening is the pair of annuli
    ``[r - w, r)`` (inside) and ``[r, r + w)`` (outside) with ``w = width``
    (default ``r / 2``).  The flux is inserted through the junction of
    ``partition`` by ``exp(i phi (Q_A' - K_{A'B'}))``, ``phi`` from 0 to
    ``2 pi``; the ``phi`` integral is done analytically in the eigenbasis of
    the generator.
    """
    t0 = time.perf_counter()
    lat = partition.lattice
    if flux_radius is None:
        flux_radius = 0.5 * min(lat.period) - 0.5 if lat.periodic else max(radii) * 2
    fi = flux_insertion(model, spec, partition, flux_radius)
    trace = []
    for r in radii:
        w = r / 2 if width is None else width
        if r + w > flux_radius:
            raise GeometryError(f"annulus [{r - w}, {r + w}) leaves the flux disk {flux_radius}")
        trace.append((float(r), _laughlin_value(fi, r, w)))
    value = trace[-1][1]
    extra = {"flux_radius": flux_radius, "width": width, "route": fi.engine.name}
    if sigma is not None:
        extra["sigma"] = float(sigma)
        extra["sum_with_sigma"] = float(value + sigma)
    return TransportResult("laughlin_charge", value, float(radii[-1]), trace,
                           trace_converged(trace, floor), _intdist(value), extra,
                           spec.as_dict(), _model_hash(model), time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# braiding
# ---------------------------------------------------------------------------
@dataclass
class BraidGeometry:
    """Regions of the two-junction vortex process.

    Two trivalent junctions ``JL``, ``JR`` sit on the horizontal axis a
    distance ``separation`` apart; the four rectangle corners are reached
    from them along diagonal rays.  Faces: ``C`` (left wedge), ``D`` (right
    wedge), ``A`` (upper face), ``B`` (lower face), all inside the flux disk.
    The ``*_in`` variants are cut to the rectangle.
    """

    faces: dict
    inner: dict
    corners: dict
    center: np.ndarray


def braid_geometry(lat: Lattice, center, L: float = 12.0, separation: float = 4.0,
                   radius: float | None = None) -> BraidGeometry:
    c = np.asarray(center, float)
    if radius is None:
        radius = 0.5 * min(lat.period) - 1.0 if lat.periodic else 1.5 * L
    _check_room(lat, c, radius)
    u = np.sqrt(0.5)
    d = L / (2 * u)
    JL = c + np.array([-separation / 2, 0.0])
    JR = c + np.array([separation / 2, 0.0])
    corners = {1: JL + d * np.array([-u, -u]), 2: JL + d * np.array([-u, u]),
               4: JR + d * np.array([u, u]), 3: JR + d * np.array([u, -u])}
    D = disk(lat, c, radius)
    Cw = sector(lat, JL, 135.0, 225.0, center=c)
    Dw = sector(lat, JR, -45.0, 45.0, center=c)
    rest = (Cw | Dw).complement()
    upper = half_plane(lat, "y", c[1], center=c)
    faces = {"A": rest & upper & D, "B": (rest - upper) & D, "C": Cw & D, "D": Dw & D}
    rect = box(lat, c, (separation / 2 + d * u, d * u))
    inner = {k: v & rect for k, v in faces.items()}
    return BraidGeometry(faces, inner, corners, c)


def braiding_generators(model: QuadraticModel, spec: FilterSpec, geo: BraidGeometry,
                        engine: DenseEngine | None = None) -> dict:
    """Generators ``x_ab`` of the four legs; the legs are ``exp(2 pi i x_ab)``.

    Each leg moves a vortex between two corners and is a vortex-transport
    0-chain: a charge on the faces swept by the leg minus dressed currents
    across the face boundaries inside the rectangle.
    """
    eng = engine or DenseEngine(model, spec)
    F, I = geo.faces, geo.inner

    def Q(*ks):
        out = F[ks[0]]
        for k in ks[1:]:
            out = out | F[k]
        return eng.proj(out)

    def K(X, Y):
        return _k(eng, X, Y)

    return {
        "12": Q("C") - K(I["C"], I["A"] | I["B"]),
        "34": Q("A", "B", "C") - K(I["A"] | I["B"], I["D"]),
        "23": Q("A", "D") - K(I["A"], I["C"]) - K(I["A"] | I["D"], I["B"]),
        "41": Q("B", "D") - K(I["D"], I["A"]) - K(I["B"], I["A"]) - K(I["B"], I["C"]),
    }


def braiding_phase(model: QuadraticModel, spec: FilterSpec, center, L: float = 12.0,
                   separation: float = 4.0, radius: float | None = None,
                   sigma: float | None = None, substeps: int = 16) -> TransportResult:
    """Phase of ``<0| W41 W23 W34 W12 |0>`` for the rectangle process.

    ``W_ab = exp(2 pi i x_ab)``.  The process creates a vortex pair, moves
    the two vortices around each other and annihilates them; the returned
    value is the argument of the vacuum amplitude in ``(-pi, pi]``.
    """
    t0 = time.perf_counter()
    geo = braid_geometry(model.lattice, center, L, separation, radius)
    gens = braiding_generators(model, spec, geo)
    order = ["41", "23", "34", "12"]
    proc = GaussianProcess(tuple(2j * np.pi * 0.5 * (gens[k] + gens[k].conj().T) for k in order),
                           tuple(order))
    amp = gaussian_process_amplitude(proc, model.projector, substeps=substeps)
    phase = float(np.angle(amp.value))
    extra = {"modulus": amp.modulus, "branch_tracked": amp.branch_tracked,
             "tracked_phase": amp.phase, "min_modulus_along_path": amp.min_modulus_along_path,
             "L": L, "separation": separation, "route": "quadratic-gaussian"}
    if sigma is not None:
        target = np.pi * sigma
        extra["sigma"] = float(sigma)
        extra["distance_to_pi_sigma"] = float(abs(np.angle(np.exp(1j * (phase - target)))))
    return TransportResult("braiding_phase", phase, float(L), [], True, None, extra,
                           spec.as_dict(), _model_hash(model), time.perf_counter() - t0)


def _relative(num: float, den: float) -> float:
    """``num / den``, or ``num`` itself when the reference vanishes."""
    return float(num / den) if den > 0 else float(num)


def xxm_residual(model: QuadraticModel, spec: FilterSpec, center, L: float = 12.0,
                 radius: float | None = None, window: float = 0.75) -> TransportResult:
    """Relative residual of ``2 pi i [X_B, X_A] = M_ABD`` near a split junction.

    A junction ``O`` is split into three sub-junctions at distance ``L``
    (directions 150, 30 and 270 degrees).  ``X_A = Q_A - K_{A', B' + D'}`` and
    likewise for ``B``, where the primed faces exclude the wedges hanging off
    the sub-junctions.  The Frobenius norms are taken on the window
    ``|r - O| < window * L`` because the truncation disk introduces unrelated
    boundary terms far away.
    """
    t0 = time.perf_counter()
    lat = model.lattice
    O = np.asarray(center, float)
    if radius is None:
        radius = 0.5 * min(lat.period) - 1.0 if lat.periodic else 1.5 * L
    _check_room(lat, O, radius)
    ell = L
    pt = lambda a: O + ell * np.array([np.cos(np.radians(a)), np.sin(np.radians(a))])  # noqa: E731
    E = sector(lat, pt(150), 90, 210, center=O)
    Fw = sector(lat, pt(30), 330, 90, center=O)
    Cw = sector(lat, pt(270), 210, 330, center=O)
    D = disk(lat, O, radius)
    wedges = E | Fw | Cw
    AmE = sector(lat, O, 150, 270) - wedges
    BmC = sector(lat, O, 270, 30) - wedges
    DmF = sector(lat, O, 30, 150) - wedges
    A = (AmE | E) & D
    B = (BmC | Cw) & D
    Dd = (DmF | Fw) & D
    AmE, BmC, DmF = AmE & D, BmC & D, DmF & D
    eng = DenseEngine(model, spec)
    xA = eng.proj(A) - _k(eng, AmE, BmC | DmF)
    xB = eng.proj(B) - _k(eng, BmC, AmE | DmF)
    m = 0
    for X, Y, Z in ((A, B, Dd), (B, Dd, A), (Dd, A, B)):
        m = m + _comm(eng.proj(X) + _qtilde(eng, X), _k(eng, Y, Z))
    m = np.pi * 1j * m
    lhs = 2j * np.pi * _comm(xB, xA)
    win = disk(lat, O, window * L).orbital_mask
    dif = (lhs - m)[np.ix_(win, win)]
    ref = m[np.ix_(win, win)]
    value = _relative(np.linalg.norm(dif), np.linalg.norm(ref))
    extra = {"window_radius": window * L, "L": L,
             "full_residual": _relative(np.linalg.norm(lhs - m), np.linalg.norm(m)),
             "route": "quadratic-dense"}
    return TransportResult("xxm_residual", value, float(L), [], True, None, extra,
                           spec.as_dict(), _model_hash(model), time.perf_counter() - t0)
