"""Free-fermion backend.

A quadratic operator ``A = sum_xy a_xy c+_x c_y`` is represented by its
single-particle matrix ``a``.  Commutators of such operators are again
quadratic, ``[A, B] -> [a, b]``, and Heisenberg evolution is conjugation
``tau_t(a) = exp(iht) a exp(-iht)``.

Index convention for ground-state data: with ``Phi`` the occupied orbitals
(columns) and ``P = Phi Phi^dagger``,

    <c+_x c_y> = P[y, x],    so    <A> = tr(a P).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .chains import NChain
from .filters import FilterError, FilterSpec, SpectralData
from .lattice import Lattice, Region

__all__ = [
    "GaplessError",
    "AmplitudeError",
    "QuadraticOperator",
    "GroundProjector",
    "GaussianProcess",
    "GaussianAmplitude",
    "QuadraticModel",
    "SpectralFrame",
    "Blocks",
    "build_quadratic_model",
    "hopping_matrix",
    "current_chain",
    "ground_expectation",
    "ground_product",
    "gaussian_process_amplitude",
    "evolve",
    "unitary_exp",
]

MAX_ORBITALS = 4000

# fault-injection hook used by the self-test: flips the Wick index convention
_WICK_TRANSPOSE = False


class GaplessError(ValueError):
    """Raised when the requested filling does not sit in a spectral gap."""


class AmplitudeError(ValueError):
    """Raised when a vacuum amplitude is too small for a meaningful phase."""


@dataclass(frozen=True)
class QuadraticOperator:
    """Single-particle matrix of a number-conserving bilinear."""

    matrix: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        if self.hermitian:
            a = np.asarray(self.matrix)
            if np.max(np.abs(a - a.conj().T), initial=0.0) > 1e-12 * max(1.0, np.abs(a).max()):
                raise ValueError("matrix flagged Hermitian is not Hermitian")


@dataclass(frozen=True)
class GroundProjector:
    """Projector onto the occupied single-particle states.

    Attributes
    ----------
    P : ndarray
        ``Phi Phi^dagger``.
    occupied : ndarray
        ``Phi``, the occupied orbitals as columns.
    n_particles : int
        Fermi index.
    gap : float
        Single-particle gap at the Fermi level.
    """

    P: np.ndarray
    occupied: np.ndarray
    n_particles: int
    gap: float

    @classmethod
    def from_orbitals(cls, Phi: np.ndarray, gap: float = np.nan) -> "GroundProjector":
        return cls(Phi @ Phi.conj().T, Phi, Phi.shape[1], gap)

    def residuals(self) -> tuple[float, float]:
        P = self.P
        return (float(np.abs(P @ P - P).max()), float(np.abs(P - P.conj().T).max()))


def hopping_matrix(n_orbitals: int, hoppings: Sequence[tuple]) -> np.ndarray:
    """Assemble ``h`` from ``(x, y, amplitude)`` triples.

    Each off-diagonal triple adds ``amplitude c+_x c_y + h.c.``; a diagonal
    triple adds the real part of the amplitude as an on-site energy.
    """
    h = np.zeros((n_orbitals, n_orbitals), complex)
    for x, y, amp in hoppings:
        x, y = int(x), int(y)
        if x == y:
            h[x, x] += complex(amp).real
        else:
            h[x, y] += amp
            h[y, x] += np.conj(amp)
    return h


class QuadraticModel:
    """Quadratic Hamiltonian on a lattice at fixed particle number.

    Parameters
    ----------
    lattice : Lattice
    h : ndarray
        Hermitian single-particle Hamiltonian.
    n_particles : int
        Number of occupied orbitals.
    gap_probe : float, optional
        Externally measured gap to use instead of the single-particle gap at
        the Fermi level (open systems whose edge states cross the bulk gap).
    """

    def __init__(self, lattice: Lattice, h: np.ndarray, n_particles: int,
                 gap_probe: float | None = None, name: str = "custom"):
        h = np.asarray(h, complex)
        if h.shape != (lattice.n_orbitals, lattice.n_orbitals):
            raise ValueError("Hamiltonian size does not match the lattice orbital count")
        if h.shape[0] > MAX_ORBITALS:
            raise ValueError(f"{h.shape[0]} orbitals exceed the dense limit {MAX_ORBITALS}")
        if np.abs(h - h.conj().T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(h).max()):
            raise ValueError("hopping matrix is not Hermitian")
        if not 0 <= n_particles <= h.shape[0]:
            raise ValueError("particle number out of range")
        self.lattice = lattice
        self.name = name
        self.h = 0.5 * (h + h.conj().T)
        self.h_sparse = sp.csr_matrix(self.h)
        self.n_particles = int(n_particles)
        self.evals, self.evecs = np.linalg.eigh(self.h)
        n = self.n_particles
        if 0 < n < len(self.evals):
            fermi_gap = float(self.evals[n] - self.evals[n - 1])
        else:
            fermi_gap = np.inf
        self.fermi_gap = fermi_gap
        self.gap = float(gap_probe) if gap_probe is not None else fermi_gap
        scale = max(1.0, float(np.abs(self.evals).max()))
        if self.gap <= 1e-8 * scale:
            raise GaplessError(
                f"no spectral gap at filling {n}/{len(self.evals)}: measured gap {self.gap:.3e}")
        self._orb_site = lattice.orbital_site

    # ----------------------------------------------------------------- basics
    @property
    def dim(self) -> int:
        return self.h.shape[0]

    @property
    def occupied(self) -> np.ndarray:
        return self.evecs[:, :self.n_particles]

    @property
    def projector(self) -> GroundProjector:
        Phi = self.occupied
        return GroundProjector(Phi @ Phi.conj().T, Phi, self.n_particles, self.gap)

    @property
    def spectra(self) -> SpectralData:
        return SpectralData(self.evals, self.evecs, self.gap, self.n_particles)

    def default_filter(self, interpolation: str = "linear-odd", fraction: float = 0.5) -> FilterSpec:
        return FilterSpec(fraction * self.gap, interpolation)

    def orbital_mask(self, region: Region | np.ndarray) -> np.ndarray:
        if isinstance(region, Region):
            return region.orbital_mask
        m = np.asarray(region, bool)
        if m.shape == (self.lattice.n_sites,):
            return np.repeat(m, self.lattice.orbitals)
        return m

    def charge(self, region) -> np.ndarray:
        """Single-particle matrix of Q_X (diagonal projector)."""
        return np.diag(self.orbital_mask(region).astype(complex))

    def current(self, X, Y) -> np.ndarray:
        """J_XY = i (pi_Y h pi_X - pi_X h pi_Y) for disjoint X, Y."""
        mx = self.orbital_mask(X)
        my = self.orbital_mask(Y)
        out = np.zeros_like(self.h)
        out[np.ix_(my, mx)] = 1j * self.h[np.ix_(my, mx)]
        out[np.ix_(mx, my)] -= 1j * self.h[np.ix_(mx, my)]
        return out

    def idelta(self, a: np.ndarray, spec: FilterSpec) -> np.ndarray:
        self.spectra.check(spec)
        V = self.evecs
        at = V.conj().T @ a @ V
        at *= spec.response(self.evals[:, None] - self.evals[None, :])
        return V @ at @ V.conj().T

    def commutator_h(self, a: np.ndarray) -> np.ndarray:
        """Single-particle matrix of i[H, A]."""
        return 1j * (self.h @ a - a @ self.h)

    def hamiltonian_chain(self) -> NChain:
        """H_j by symmetric split: h_j = (pi_j h + h pi_j) / 2."""
        n = self.dim
        ent = {}
        for j in range(self.lattice.n_sites):
            sl = self.lattice.orbital_slice(j)
            m = sp.lil_matrix((n, n), dtype=complex)
            m[sl, :] = 0.5 * self.h_sparse[sl, :]
            m[:, sl] = m[:, sl] + 0.5 * self.h_sparse[:, sl]
            ent[(j,)] = sp.csr_matrix(m)
        return NChain(0, self.lattice, ent, "quadratic", selfadjoint=True,
                      zero=sp.csr_matrix((n, n), dtype=complex))

    def charge_chain(self) -> NChain:
        n = self.dim
        ent = {}
        for j in range(self.lattice.n_sites):
            d = np.zeros(n)
            d[self.lattice.orbital_slice(j)] = 1.0
            ent[(j,)] = sp.diags(d).astype(complex).tocsr()
        return NChain(0, self.lattice, ent, "quadratic", selfadjoint=True,
                      zero=sp.csr_matrix((n, n), dtype=complex))

    def frame(self, spec: FilterSpec | None = None) -> "SpectralFrame":
        return SpectralFrame(self, spec)

    def fingerprint(self) -> bytes:
        return (self.lattice.fingerprint() + np.ascontiguousarray(self.h).tobytes()
                + np.int64(self.n_particles).tobytes())


def current_chain(model: QuadraticModel) -> NChain:
    """J_jk = i[H_k, Q_j] - i[H_j, Q_k] for every coupled pair of sites."""
    n = model.dim
    hs = model.h_sparse.tocoo()
    site = model._orb_site
    parts: dict[tuple, list] = {}
    for x, y, v in zip(hs.row, hs.col, hs.data):
        a, b = int(site[x]), int(site[y])
        if a == b:
            continue
        # entry (x, y) of J_{jk} with j < k: +i h on the (k, j) block, -i h on (j, k)
        key = (min(a, b), max(a, b))
        parts.setdefault(key, []).append((x, y, 1j * v if a > b else -1j * v))
    ent = {}
    for key in sorted(parts):
        r, c, d = zip(*parts[key])
        ent[key] = sp.csr_matrix((np.array(d), (np.array(r), np.array(c))), shape=(n, n))
    return NChain(1, model.lattice, ent, "quadratic", selfadjoint=True,
                  zero=sp.csr_matrix((n, n), dtype=complex))


def build_quadratic_model(lattice: Lattice, hoppings, n_particles: int | None = None,
                          filling: float | None = None, gap_probe: float | None = None,
                          name: str = "custom") -> QuadraticModel:
    """Build a free-fermion model.

    Parameters
    ----------
    hoppings : sequence of (x, y, amplitude) or ndarray
        Either triples (see :func:`hopping_matrix`) or the full matrix.
    n_particles, filling : int or float
        Occupation, given directly or as a fraction of the orbital count.
    """
    if isinstance(hoppings, np.ndarray) and hoppings.ndim == 2:
        h = hoppings
    else:
        h = hopping_matrix(lattice.n_orbitals, hoppings)
    if n_particles is None:
        if filling is None:
            raise ValueError("give n_particles or filling")
        n_particles = int(round(filling * lattice.n_orbitals))
    return QuadraticModel(lattice, h, n_particles, gap_probe=gap_probe, name=name)


def ground_expectation(a, proj: GroundProjector) -> complex:
    """<sum a_xy c+_x c_y> = tr(a P)."""
    a = a.matrix if isinstance(a, QuadraticOperator) else a
    P = proj.P.T if _WICK_TRANSPOSE else proj.P
    if sp.issparse(a):
        return complex(a.multiply(P.T).sum())
    return complex(np.einsum("xy,yx->", np.asarray(a), P))


def ground_product(a, b, proj: GroundProjector) -> complex:
    """<A B> by Wick's theorem: tr(aP) tr(bP) + tr(a (1-P) b P)."""
    P = proj.P.T if _WICK_TRANSPOSE else proj.P
    a = np.asarray(a)
    b = np.asarray(b)
    one = np.eye(len(P))
    return complex(np.trace(a @ P) * np.trace(b @ P) + np.trace(a @ (one - P) @ b @ P))


def evolve(a: np.ndarray, t: float, model: QuadraticModel) -> np.ndarray:
    """Heisenberg evolution exp(iht) a exp(-iht)."""
    V = model.evecs
    ph = np.exp(1j * model.evals * t)
    return (V * ph) @ (V.conj().T @ a @ V) @ (V * ph).conj().T


# ---------------------------------------------------------------------------
# eigenbasis fast path
# ---------------------------------------------------------------------------
@dataclass
class Blocks:
    """Occupied-unoccupied blocks of an operator in the eigenbasis.

    ``ou[m, n] = <m|a|n>`` with m occupied and n empty; ``uo`` the reverse.
    These blocks fix every ground-state commutator expectation.
    """

    ou: np.ndarray
    uo: np.ndarray

    def __add__(self, other: "Blocks") -> "Blocks":
        return Blocks(self.ou + other.ou, self.uo + other.uo)

    def __sub__(self, other: "Blocks") -> "Blocks":
        return Blocks(self.ou - other.ou, self.uo - other.uo)

    def __mul__(self, c) -> "Blocks":
        return Blocks(c * self.ou, c * self.uo)

    __rmul__ = __mul__


class SpectralFrame:
    """Ground-state commutator expectations from eigenbasis blocks.

    ``<[A, B]> = sum_{m occ, n empty} (a_mn b_nm - b_mn a_nm)``, and both the
    filter and ``i[H, .]`` act elementwise in the eigenbasis, so only the
    occupied-empty blocks are ever formed.  Cost per operator is
    ``O(N_occ N_empty |support|)`` instead of ``O(N^3)``.
    """

    def __init__(self, model: QuadraticModel, spec: FilterSpec | None = None):
        self.model = model
        self.spec = spec
        n = model.n_particles
        self.Uo = model.evecs[:, :n]
        self.Uu = model.evecs[:, n:]
        eo, eu = model.evals[:n], model.evals[n:]
        self.omega_ou = eo[:, None] - eu[None, :]
        if spec is not None:
            model.spectra.check(spec)
            self.w_ou = spec.response(self.omega_ou)
            self.w_uo = spec.response(-self.omega_ou.T)

    def project(self, region) -> Blocks:
        m = self.model.orbital_mask(region)
        ou = self.Uo[m].conj().T @ self.Uu[m]
        return Blocks(ou, ou.conj().T)

    def current(self, X, Y) -> Blocks:
        mx = self.model.orbital_mask(X)
        my = self.model.orbital_mask(Y)
        h = self.model.h_sparse
        hyx = h[my][:, mx]
        hxy = h[mx][:, my]
        ou = 1j * (self.Uo[my].conj().T @ (hyx @ self.Uu[mx])
                   - self.Uo[mx].conj().T @ (hxy @ self.Uu[my]))
        uo = 1j * (self.Uu[my].conj().T @ (hyx @ self.Uo[mx])
                   - self.Uu[mx].conj().T @ (hxy @ self.Uo[my]))
        return Blocks(ou, uo)

    def dense(self, a: np.ndarray) -> Blocks:
        return Blocks(self.Uo.conj().T @ a @ self.Uu, self.Uu.conj().T @ a @ self.Uo)

    def idelta(self, b: Blocks) -> Blocks:
        if self.spec is None:
            raise FilterError("frame built without a filter")
        return Blocks(self.w_ou * b.ou, self.w_uo * b.uo)

    def commutator_h(self, b: Blocks) -> Blocks:
        """Blocks of i[H, A]."""
        return Blocks(1j * self.omega_ou * b.ou, -1j * self.omega_ou.T * b.uo)

    @staticmethod
    def expect_commutator(a: Blocks, b: Blocks) -> complex:
        return complex(np.sum(a.ou * b.uo.T) - np.sum(b.ou * a.uo.T))


# ---------------------------------------------------------------------------
# Gaussian unitaries and vacuum amplitudes
# ---------------------------------------------------------------------------
def unitary_exp(x: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """exp(scale * x).

    Anti-Hermitian arguments go through an eigendecomposition of the
    Hermitian generator; anything else uses scipy's scaling-and-squaring
    ``expm``.
    """
    y = scale * np.asarray(x)
    if np.abs(y + y.conj().T).max(initial=0.0) <= 1e-12 * max(1.0, np.abs(y).max()):
        lam, V = np.linalg.eigh(-0.5j * (y - y.conj().T))
        return (V * np.exp(1j * lam)) @ V.conj().T
    return sla.expm(y)


@dataclass(frozen=True)
class GaussianProcess:
    """Ordered exponents (x1, ..., xn) standing for exp(X1) ... exp(Xn)."""

    exponents: tuple
    labels: tuple = ()

    def __post_init__(self):
        dims = {np.asarray(x).shape for x in self.exponents}
        if len(dims) > 1:
            raise ValueError("all exponents must share one dimension")


@dataclass(frozen=True)
class GaussianAmplitude:
    value: complex
    phase: float
    modulus: float
    branch_tracked: bool
    substeps: int
    min_modulus_along_path: float = field(default=np.nan)


class _Factor:
    """exp(lambda * x) for a fixed exponent, cheap for many lambdas."""

    def __init__(self, x: np.ndarray):
        x = np.asarray(x)
        self.anti = np.abs(x + x.conj().T).max(initial=0.0) <= 1e-12 * max(1.0, np.abs(x).max())
        if self.anti:
            self.lam, self.V = np.linalg.eigh(-0.5j * (x - x.conj().T))
        else:
            self.x = x

    def apply(self, lam: float, M: np.ndarray) -> np.ndarray:
        if self.anti:
            return self.V @ (np.exp(1j * lam * self.lam)[:, None] * (self.V.conj().T @ M))
        return sla.expm(lam * self.x) @ M


def gaussian_process_amplitude(proc: GaussianProcess, proj: GroundProjector,
                               substeps: int = 16, max_length: int = 64,
                               floor: float = 1e-8) -> GaussianAmplitude:
    """Vacuum amplitude <0| exp(X1) ... exp(Xn) |0> of a Gaussian process.

    The amplitude equals ``det((1-P) + e^{x1}...e^{xn} P)``, evaluated as
    ``det(Phi^dagger e^{x1}...e^{xn} Phi)``.  The phase is followed along
    ``lambda -> exp(lambda x1) ... exp(lambda xn)`` for ``lambda`` in
    ``substeps`` equal steps; when the modulus dips below ``floor`` on the way
    the branch cannot be followed and the principal value is reported.
    """
    n = len(proc.exponents)
    if n == 0:
        return GaussianAmplitude(1.0 + 0j, 0.0, 1.0, True, 0, 1.0)
    if n > max_length:
        raise ValueError(f"process of length {n} exceeds the limit {max_length}")
    if not 1 <= substeps <= 64:
        raise ValueError("substeps must lie in 1..64")
    Phi = proj.occupied
    factors = [_Factor(x) for x in proc.exponents]

    def amp(lam):
        M = Phi
        for f in reversed(factors):
            M = f.apply(lam, M)
        return complex(np.linalg.det(Phi.conj().T @ M))

    lams = np.linspace(0.0, 1.0, substeps + 1)[1:]
    phase = 0.0
    prev = 1.0 + 0j
    tracked = True
    min_mod = 1.0
    val = prev
    for lam in lams:
        val = amp(lam)
        mod = abs(val)
        min_mod = min(min_mod, mod)
        if mod < floor:
            tracked = False
        if tracked:
            phase += float(np.angle(val / prev))
        prev = val if mod > 0 else prev
    if abs(val) < floor:
        raise AmplitudeError(f"vacuum amplitude modulus {abs(val):.2e} below {floor:g}")
    if not tracked:
        phase = float(np.angle(val))
    return GaussianAmplitude(val, phase, abs(val), tracked, substeps, min_mod)
