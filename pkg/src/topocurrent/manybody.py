"""Exact diagonalization in fixed-charge sectors of spinless fermions.

Every orbital of the lattice is one fermionic mode.  Basis states of a sector
are bitmasks with a fixed popcount, sorted ascending; the Jordan-Wigner order
is the orbital index, so ``c_y`` acting on ``|s>`` picks up
``(-1)^(number of occupied orbitals below y)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chains import NChain
from .filters import FilterError, FilterSpec, SpectralData, spectral_IDelta
from .lattice import Lattice, Region

__all__ = [
    "ChargeViolationError",
    "DimensionError",
    "DegenerateGroundStateError",
    "Term",
    "SectorSpace",
    "ManyBodyOperator",
    "GroundState",
    "ManyBodyModel",
    "build_manybody_model",
    "terms_from_hopping_matrix",
    "quadratic_to_sector",
    "ground_state",
    "resolvent_apply",
    "kubo_pairing",
    "quasi_adiabatic_evolve",
    "EvolutionResult",
    "dense_expm",
]

DIM_CAP = 2_000_000
OPERATOR_MODE_MAX = 4000
CHARGE_CONSERVING = ("hop", "onsite", "nn")
KNOWN_KINDS = CHARGE_CONSERVING + ("pair", "create", "annihilate")


class ChargeViolationError(ValueError):
    """Raised for interaction terms that do not commute with total charge."""


class DimensionError(ValueError):
    """Raised when a sector exceeds the configured Hilbert-space cap."""


class DegenerateGroundStateError(ValueError):
    """Raised when the lowest level of a sector is (numerically) degenerate."""


@dataclass(frozen=True)
class Term:
    """One Hamiltonian term.

    ``hop``: ``amp c+_x c_y + h.c.``; ``onsite``: ``amp n_x``;
    ``nn``: ``amp n_x n_y``.  ``pair``, ``create`` and ``annihilate`` are
    recognized only so they can be rejected with a clear message.
    """

    kind: str
    orbitals: tuple
    amp: complex = 1.0

    def __post_init__(self):
        if self.kind not in KNOWN_KINDS:
            raise ValueError(f"unknown term kind {self.kind!r}")
        if self.kind not in CHARGE_CONSERVING:
            raise ChargeViolationError(f"term {self.kind!r} does not conserve total charge")
        need = {"hop": 2, "onsite": 1, "nn": 2}[self.kind]
        orbs = tuple(int(o) for o in self.orbitals)
        if len(orbs) != need:
            raise ValueError(f"{self.kind} term needs {need} orbitals, got {orbs}")
        if need == 2 and orbs[0] == orbs[1]:
            raise ValueError(f"{self.kind} term on a single orbital {orbs}")
        object.__setattr__(self, "orbitals", orbs)

    @classmethod
    def from_dict(cls, d: dict) -> "Term":
        amp = d.get("amp", 1.0)
        if isinstance(amp, (list, tuple)):
            amp = complex(amp[0], amp[1])
        return cls(d["kind"], tuple(d.get("orbitals", d.get("sites", ()))), amp)


class SectorSpace:
    """Fock states of ``n_modes`` modes with exactly ``n_particles`` fermions."""

    def __init__(self, n_modes: int, n_particles: int, cap: int = DIM_CAP):
        if not 0 <= n_particles <= n_modes:
            raise ValueError("particle number out of range")
        if n_modes > 62:
            raise DimensionError("more than 62 modes are not representable")
        dim = comb(n_modes, n_particles)
        if dim > cap:
            raise DimensionError(f"sector dimension {dim} exceeds the cap {cap}")
        self.n_modes = n_modes
        self.n_particles = n_particles
        states = np.fromiter(
            (sum(1 << i for i in c) for c in combinations(range(n_modes), n_particles)),
            dtype=np.int64, count=dim)
        self.states = np.sort(states)

    @property
    def dim(self) -> int:
        return len(self.states)

    def index(self, states: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.states, states)

    def occupations(self) -> np.ndarray:
        """(dim, n_modes) 0/1 array."""
        return ((self.states[:, None] >> np.arange(self.n_modes)) & 1).astype(np.int8)


def _below(s: np.ndarray, x: int) -> np.ndarray:
    return np.bitwise_count(s & ((1 << x) - 1)).astype(np.int64)


def _hop_coo(space: SectorSpace, x: int, y: int):
    """Rows, cols, signs of c+_x c_y (x != y) within the sector."""
    s = space.states
    ok = ((s >> y) & 1 == 1) & ((s >> x) & 1 == 0)
    src = s[ok]
    mid = src ^ (1 << y)
    sign = (-1.0) ** (_below(src, y) + _below(mid, x))
    dst = mid | (1 << x)
    return space.index(dst), np.flatnonzero(ok), sign


def quadratic_to_sector(a: np.ndarray, space: SectorSpace) -> sp.csr_matrix:
    """Sparse matrix of ``sum_xy a_xy c+_x c_y`` on one sector."""
    a = np.asarray(a)
    rows, cols, vals = [], [], []
    occ = space.occupations()
    diag = occ @ np.diag(a).astype(complex)
    rows.append(np.arange(space.dim))
    cols.append(np.arange(space.dim))
    vals.append(diag)
    xs, ys = np.nonzero(a)
    for x, y in zip(xs, ys):
        if x == y:
            continue
        r, c, sg = _hop_coo(space, int(x), int(y))
        rows.append(r)
        cols.append(c)
        vals.append(a[x, y] * sg)
    m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(space.dim, space.dim))
    return m.tocsr()


def _term_matrix(term: Term, space: SectorSpace) -> sp.csr_matrix:
    n = space.dim
    if term.kind == "onsite":
        (x,) = term.orbitals
        d = ((space.states >> x) & 1).astype(float) * complex(term.amp).real
        return sp.diags(d.astype(complex)).tocsr()
    if term.kind == "nn":
        x, y = term.orbitals
        d = (((space.states >> x) & 1) * ((space.states >> y) & 1)).astype(float)
        return sp.diags(d * complex(term.amp).real + 0j).tocsr()
    x, y = term.orbitals
    r, c, sg = _hop_coo(space, x, y)
    m = sp.coo_matrix((term.amp * sg, (r, c)), shape=(n, n)).tocsr()
    return (m + m.conj().T).tocsr()


@dataclass
class ManyBodyOperator:
    """Sparse operator stored as blocks between charge sectors.

    ``blocks[(n_out, n_in)]`` maps sector ``n_in`` into ``n_out``; charge
    conserving operators only have diagonal blocks.
    """

    blocks: dict
    hermitian: bool = False

    @property
    def displacement(self) -> int:
        ds = {a - b for a, b in self.blocks}
        if len(ds) > 1:
            raise ValueError("operator mixes several charge displacements")
        return ds.pop() if ds else 0

    def block(self, n: int) -> sp.csr_matrix:
        return self.blocks[(n, n)]

    def hermiticity_residual(self) -> float:
        res = 0.0
        for (a, b), m in self.blocks.items():
            other = self.blocks.get((b, a))
            if other is None:
                return np.inf
            d = m - other.conj().T
            res = max(res, float(abs(d).max()) if d.nnz else 0.0)
        return res


@dataclass(frozen=True)
class GroundState:
    """Lowest eigenpair of one sector.

    Attributes
    ----------
    gap : float
        Distance to the next level in the same sector.
    gap_cross : float
        Distance to the lowest level in the adjacent sectors (``inf`` if not
        computed).  Reported only; filters are validated against ``gap``
        because every operator used here conserves charge.
    """

    sector: int
    vector: np.ndarray
    energy: float
    gap: float
    gap_cross: float = np.inf
    residual: float = 0.0


class ManyBodyModel:
    """Interacting U(1)-symmetric fermion model on a lattice.

    Each term is assigned to the lattice site of its lowest-numbered support
    orbital; ``H_j`` is the sum of terms assigned to site ``j``.
    """

    def __init__(self, lattice: Lattice, terms: Sequence[Term], n_particles: int,
                 cap: int = DIM_CAP, name: str = "custom"):
        self.lattice = lattice
        self.name = name
        self.terms = tuple(t if isinstance(t, Term) else Term.from_dict(t) for t in terms)
        n_modes = lattice.n_orbitals
        for t in self.terms:
            if any(o < 0 or o >= n_modes for o in t.orbitals):
                raise ValueError(f"term {t} addresses an orbital outside the lattice")
        self.n_particles = int(n_particles)
        self.cap = cap
        self.space = SectorSpace(n_modes, self.n_particles, cap)
        site = lattice.orbital_site
        self._site_terms: dict[int, list] = {}
        for t in self.terms:
            owner = int(min(site[o] for o in t.orbitals))
            self._site_terms.setdefault(owner, []).append(t)
        n = self.space.dim
        self.H_sites = {j: sum((_term_matrix(t, self.space) for t in ts),
                               sp.csr_matrix((n, n), dtype=complex)).tocsr()
                        for j, ts in sorted(self._site_terms.items())}
        self.H = sum(self.H_sites.values(), sp.csr_matrix((n, n), dtype=complex)).tocsr()
        self._dense = None
        self._ground = None

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def operator_mode(self) -> bool:
        return self.dim <= OPERATOR_MODE_MAX

    def quadratic(self, a: np.ndarray) -> sp.csr_matrix:
        return quadratic_to_sector(a, self.space)

    def charge(self, region) -> sp.csr_matrix:
        m = region.orbital_mask if isinstance(region, Region) else np.asarray(region, bool)
        if m.shape == (self.lattice.n_sites,):
            m = np.repeat(m, self.lattice.orbitals)
        bits = np.flatnonzero(m)
        occ = self.space.occupations()
        return sp.diags(occ[:, bits].sum(axis=1).astype(complex)).tocsr()

    def site_charge(self, j: int) -> sp.csr_matrix:
        mask = np.zeros(self.lattice.n_sites, bool)
        mask[j] = True
        return self.charge(mask)

    def hamiltonian_chain(self) -> NChain:
        n = self.dim
        return NChain(0, self.lattice, {(j,): m for j, m in self.H_sites.items()}, "manybody",
                      selfadjoint=True, zero=sp.csr_matrix((n, n), dtype=complex))

    def charge_chain(self) -> NChain:
        n = self.dim
        return NChain(0, self.lattice,
                      {(j,): self.site_charge(j) for j in range(self.lattice.n_sites)},
                      "manybody", selfadjoint=True, zero=sp.csr_matrix((n, n), dtype=complex))

    def current_chain(self) -> NChain:
        """J_jk = i[H_k, Q_j] - i[H_j, Q_k] for every pair coupled by some H_l."""
        n = self.dim
        Q = {j: self.site_charge(j) for j in range(self.lattice.n_sites)}
        ent = {}
        pairs = set()
        site = self.lattice.orbital_site
        for t in self.terms:
            ss = sorted({int(site[o]) for o in t.orbitals})
            owner = int(min(site[o] for o in t.orbitals))
            for s in ss:
                if s != owner:
                    pairs.add((min(owner, s), max(owner, s)))
        zero = sp.csr_matrix((n, n), dtype=complex)
        for j, k in sorted(pairs):
            Hj = self.H_sites.get(j, zero)
            Hk = self.H_sites.get(k, zero)
            ent[(j, k)] = (1j * (Hk @ Q[j] - Q[j] @ Hk) - 1j * (Hj @ Q[k] - Q[k] @ Hj)).tocsr()
        return NChain(1, self.lattice, ent, "manybody", selfadjoint=True, zero=zero)

    def dense_spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.operator_mode:
            raise DimensionError(
                f"operator mode needs dimension <= {OPERATOR_MODE_MAX}, got {self.dim}")
        if self._dense is None:
            self._dense = np.linalg.eigh(self.H.toarray())
        return self._dense

    def spectra(self) -> SpectralData:
        e, V = self.dense_spectrum()
        gap = float(e[1] - e[0]) if len(e) > 1 else np.inf
        return SpectralData(e, V, gap, 0)

    def idelta(self, a, spec: FilterSpec) -> np.ndarray:
        """Operator-mode filter on the sector."""
        a = a.toarray() if sp.issparse(a) else np.asarray(a)
        return spectral_IDelta(a, self.spectra(), spec)

    def ground_state(self, cross_sectors: bool = False) -> GroundState:
        if self._ground is None or (cross_sectors and not np.isfinite(self._ground.gap_cross)):
            self._ground = ground_state(self, cross_sectors=cross_sectors)
        return self._ground

    def fingerprint(self) -> bytes:
        parts = [self.lattice.fingerprint(), np.int64(self.n_particles).tobytes()]
        for t in self.terms:
            parts.append(repr((t.kind, t.orbitals, complex(t.amp))).encode())
        return b"".join(parts)


def terms_from_hopping_matrix(h: np.ndarray, tol: float = 0.0) -> list[Term]:
    """Translate a single-particle Hamiltonian into hop/onsite terms."""
    h = np.asarray(h)
    terms = []
    n = h.shape[0]
    for x in range(n):
        if abs(h[x, x]) > tol:
            terms.append(Term("onsite", (x,), float(h[x, x].real)))
        for y in range(x + 1, n):
            if abs(h[x, y]) > tol:
                terms.append(Term("hop", (x, y), complex(h[x, y])))
    return terms


def build_manybody_model(lattice: Lattice, terms, n_particles: int,
                         cap: int = DIM_CAP, name: str = "custom") -> ManyBodyModel:
    return ManyBodyModel(lattice, terms, n_particles, cap=cap, name=name)


def _lowest(H: sp.csr_matrix, k: int) -> np.ndarray:
    n = H.shape[0]
    if n <= OPERATOR_MODE_MAX:
        return np.linalg.eigvalsh(H.toarray())[:k]
    v0 = np.cos(np.arange(n) * 0.37) + 1.0
    return np.sort(spla.eigsh(H, k=k, which="SA", v0=v0, tol=1e-12, return_eigenvectors=False))


def ground_state(model: ManyBodyModel, cross_sectors: bool = False,
                 degeneracy_tol: float = 1e-8) -> GroundState:
    """Lowest eigenpair of the model's sector.

    Dense diagonalization up to the operator-mode limit, Lanczos (``eigsh``)
    beyond it with a deterministic start vector.
    """
    H = model.H
    n = H.shape[0]
    if n == 1:
        vec = np.ones(1, complex)
        e0, gap = float(H[0, 0].real), np.inf
    elif model.operator_mode:
        e, V = model.dense_spectrum()
        e0, gap, vec = float(e[0]), float(e[1] - e[0]), V[:, 0]
    else:
        v0 = np.cos(np.arange(n) * 0.37) + 1.0
        try:
            e, V = spla.eigsh(H, k=2, which="SA", v0=v0, tol=1e-12, maxiter=20 * n)
        except spla.ArpackNoConvergence as exc:
            raise RuntimeError("ground-state eigensolver did not converge") from exc
        order = np.argsort(e)
        e, V = e[order], V[:, order]
        e0, gap, vec = float(e[0]), float(e[1] - e[0]), V[:, 0]
    if gap < degeneracy_tol:
        raise DegenerateGroundStateError(
            f"ground state is degenerate: in-sector gap {gap:.3e} < {degeneracy_tol:g}")
    # fix the global phase so the largest component is real positive
    k = int(np.argmax(np.abs(vec)))
    vec = vec * (abs(vec[k]) / vec[k])
    vec = vec / np.linalg.norm(vec)
    res = float(np.linalg.norm(H @ vec - e0 * vec))
    cross = np.inf
    if cross_sectors:
        lows = []
        for dn in (-1, 1):
            m = model.n_particles + dn
            if 0 <= m <= model.space.n_modes:
                other = ManyBodyModel(model.lattice, model.terms, m, cap=model.cap)
                lows.append(float(_lowest(other.H, 1)[0]))
        cross = min((x - e0 for x in lows), default=np.inf)
    return GroundState(model.n_particles, vec, e0, gap, cross, res)


def resolvent_apply(model: ManyBodyModel, gs: GroundState, v: np.ndarray,
                    rtol: float = 1e-13) -> np.ndarray:
    """Solve ``(H - E0) x = (1 - P) v`` with ``x`` orthogonal to the ground state."""
    psi = gs.vector
    v = np.asarray(v, complex)
    rhs = v - psi * np.vdot(psi, v)
    if np.linalg.norm(rhs) == 0:
        return np.zeros_like(rhs)
    if model.operator_mode:
        e, V = model.dense_spectrum()
        c = V.conj().T @ rhs
        inv = np.zeros_like(e)
        inv[1:] = 1.0 / (e[1:] - e[0])
        x = V @ (inv * c)
    else:
        n = model.dim
        shift = max(gs.gap, 1.0)

        def mv(u):
            return model.H @ u - gs.energy * u + shift * psi * np.vdot(psi, u)

        op = spla.LinearOperator((n, n), matvec=mv, dtype=complex)
        x, info = spla.cg(op, rhs, rtol=rtol, atol=0.0, maxiter=10 * n)
        if info != 0:
            raise RuntimeError(f"resolvent solve failed (cg info {info})")
    x = x - psi * np.vdot(psi, x)
    r = model.H @ x - gs.energy * x - rhs
    if np.linalg.norm(r) > 1e-8 * max(1.0, np.linalg.norm(rhs)):
        raise RuntimeError(f"resolvent residual {np.linalg.norm(r):.2e} above 1e-8")
    return x


def kubo_pairing(model: ManyBodyModel, gs: GroundState, a, b) -> float:
    """Ground-state value of ``i[I(A), B]`` for Hermitian A, B.

    Exact for any admissible filter: only matrix elements between the ground
    state and excited states enter, and there the response is ``-i/omega``.
    Evaluates ``-2 Re <A G0 B>``.
    """
    psi = gs.vector
    bv = b @ psi
    x = resolvent_apply(model, gs, bv)
    return float(-2.0 * np.vdot(a @ psi, x).real)


@dataclass
class EvolutionResult:
    """Final state of a quasi-adiabatic run and the overlap trace."""

    vector: np.ndarray
    s: np.ndarray
    overlaps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    min_gap: float = np.inf


def quasi_adiabatic_evolve(family: Callable[[float], ManyBodyModel], psi0: np.ndarray,
                           spec: FilterSpec, s0: float = 0.0, s1: float = 1.0,
                           steps: int = 100, fd_step: float = 1e-4,
                           track_overlap: bool = False) -> EvolutionResult:
    """Evolve a state by the generator ``G(s) = I(dH/ds)``.

    Uses the exponential midpoint rule: on each step ``G`` is frozen at the
    midpoint and the state is multiplied by ``exp(-i G ds)``, so that
    ``d<A>/ds = <i[G, A]>``.  ``dH/ds`` is a central finite difference.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    ds = (s1 - s0) / steps
    psi = np.asarray(psi0, complex).copy()
    ss = s0 + ds * np.arange(steps + 1)
    ovl = [1.0] if track_overlap else []
    min_gap = np.inf
    for k in range(steps):
        sm = s0 + (k + 0.5) * ds
        mid = family(sm)
        spectra = mid.spectra()
        min_gap = min(min_gap, spectra.gap)
        if not spec.delta < spectra.gap:
            raise FilterError(
                f"filter invalid: gap {spectra.gap:.4g} at s={sm:.4f} is not above {spec.delta:.4g}")
        dH = ((family(sm + fd_step).H - family(sm - fd_step).H) / (2 * fd_step)).toarray()
        G = spectral_IDelta(dH, spectra, spec)
        G = 0.5 * (G + G.conj().T)
        lam, V = np.linalg.eigh(G)
        psi = V @ (np.exp(-1j * lam * ds) * (V.conj().T @ psi))
        if track_overlap:
            gs = family(ss[k + 1]).ground_state()
            ovl.append(float(abs(np.vdot(gs.vector, psi))))
    return EvolutionResult(psi, ss, np.asarray(ovl), min_gap)


def dense_expm(a) -> np.ndarray:
    a = a.toarray() if sp.issparse(a) else np.asarray(a)
    return sla.expm(a)
