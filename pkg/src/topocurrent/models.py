"""Model zoo: lattice Hamiltonians used by the workbench and the tests."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .lattice import Lattice, build_lattice
from .manybody import ManyBodyModel, Term
from .quadratic import QuadraticModel, hopping_matrix

__all__ = [
    "atomic_insulator",
    "hofstadter",
    "haldane",
    "haldane_hoppings",
    "rice_mele_hamiltonian",
    "rice_mele",
    "rice_mele_family",
    "rice_mele_bloch",
    "rice_mele_interacting",
    "rice_mele_interacting_family",
    "custom_hoppings",
    "custom_terms",
    "PumpLoop",
    "file_checksum",
]


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# two-dimensional models
# ---------------------------------------------------------------------------
def atomic_insulator(Lx: int = 24, Ly: int = 24, q: int = 3, spacing: float = 2.0,
                     periodic: bool = True) -> QuadraticModel:
    """Decoupled sites; every q-th diagonal (x + y = 0 mod q) is filled."""
    lat = build_lattice("square", Lx, Ly, periodic=periodic)
    x, y = lat.positions.T.astype(int)
    low = (x + y) % q == 0
    eps = np.where(low, -0.5 * spacing, 0.5 * spacing)
    return QuadraticModel(lat, np.diag(eps).astype(complex), int(low.sum()),
                          name="atomic-insulator")


def hofstadter(p: int = 1, q: int = 3, Lx: int = 24, Ly: int = 24, t: float = 1.0,
               filling: float | None = None, periodic: bool = True) -> QuadraticModel:
    """Square-lattice Hofstadter model in the Landau gauge.

    Horizontal hops carry ``-t``; the hop from ``(x, y)`` up to
    ``(x, y+1)`` carries ``-t exp(-2 pi i p x / q)`` so every plaquette
    encloses flux ``p/q`` (clockwise phase convention, chosen so that the
    lowest band has Hall marker +1 for flux 1/3).
    """
    if periodic and Lx % q:
        raise ValueError(f"a periodic Hofstadter lattice needs Lx divisible by q={q}")
    lat = build_lattice("square", Lx, Ly, periodic=periodic)
    N = Lx * Ly
    h = np.zeros((N, N), complex)

    def idx(x, y):
        return (y % Ly) * Lx + (x % Lx)

    for y in range(Ly):
        for x in range(Lx):
            j = idx(x, y)
            if periodic or x + 1 < Lx:
                h[idx(x + 1, y), j] += -t
                h[j, idx(x + 1, y)] += -t
            if periodic or y + 1 < Ly:
                ph = np.exp(-2j * np.pi * p * x / q)
                h[idx(x, y + 1), j] += -t * ph
                h[j, idx(x, y + 1)] += -t * np.conj(ph)
    if filling is None:
        filling = 1.0 / q
    return QuadraticModel(lat, h, int(round(filling * N)), name="hofstadter")


def _neighbors(lat: Lattice, dist: float, tol: float = 1e-6):
    """Ordered pairs (i, j), i != j, at the given minimum-image distance."""
    pairs = []
    for i in range(lat.n_sites):
        d = np.hypot(*lat.displacement(lat.positions[i]).T)
        pairs.extend((i, int(j)) for j in np.flatnonzero(np.abs(d - dist) < tol))
    return pairs


def haldane_hoppings(lat: Lattice, t1: float, t2: float, phi: float, mass) -> np.ndarray:
    """Haldane Hamiltonian on a honeycomb lattice.

    Nearest neighbours hop with ``t1``.  Next-nearest neighbours hop with
    ``t2 exp(i nu phi)``, where ``nu = +1`` when the two-bond path from the
    source through the shared neighbour to the target turns left.
    ``mass`` is a scalar or one value per site; it enters as ``+m`` on
    sublattice 0 and ``-m`` on sublattice 1.
    """
    n = lat.n_sites
    h = np.zeros((n, n), complex)
    nn = _neighbors(lat, 1 / np.sqrt(3))
    nbrs = {i: set() for i in range(n)}
    for i, j in nn:
        h[i, j] = t1
        nbrs[i].add(j)
    for i, j in _neighbors(lat, 1.0):
        # term c+_i c_j: path j -> k -> i
        ks = nbrs[i] & nbrs[j]
        if len(ks) != 1:
            raise ValueError("honeycomb neighbour structure is inconsistent (lattice too small?)")
        k = ks.pop()
        d1 = lat.pair_displacement(j, k)
        d2 = lat.pair_displacement(k, i)
        nu = np.sign(d1[0] * d2[1] - d1[1] * d2[0])
        h[i, j] = t2 * np.exp(1j * nu * phi)
    m = np.broadcast_to(np.asarray(mass, float), (n,))
    h[np.diag_indices(n)] = np.where(lat.sublattice == 0, m, -m)
    return h


def haldane(t1: float = 1.0, t2: float = 0.25, phi: float = np.pi / 2, m: float = 0.0,
            Lx: int = 24, Ly: int = 24, filling: float = 0.5, periodic: bool = True,
            mass_profile: Callable[[np.ndarray], np.ndarray] | None = None,
            gap_probe: float | None = None) -> QuadraticModel:
    """Haldane model; ``mass_profile(positions)`` overrides the uniform mass."""
    lat = build_lattice("honeycomb", Lx, Ly, periodic=periodic)
    mass = m if mass_profile is None else mass_profile(lat.positions)
    h = haldane_hoppings(lat, t1, t2, phi, mass)
    return QuadraticModel(lat, h, int(round(filling * lat.n_sites)), gap_probe=gap_probe,
                          name="haldane")


# ---------------------------------------------------------------------------
# one-dimensional pumps
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PumpLoop:
    """A closed family ``H(s)``, ``s`` in [0, 1].

    ``build(s)`` returns a backend model; ``steps`` is the integrator step
    count and ``cut`` the bond index after which the right region starts.
    """

    build: Callable[[float], object]
    steps: int
    cut: int
    name: str = "loop"

    def endpoint_mismatch(self) -> float:
        a, b = self.build(0.0), self.build(1.0)
        d = a.h - b.h if hasattr(a, "h") else (a.H - b.H).tocoo().data
        return float(np.abs(d).max(initial=0.0))


def rice_mele_hamiltonian(s: float, n_sites: int, t: float = 1.0, delta: float = 0.5,
                          Delta: float = 1.0, periodic: bool = False,
                          twist: float = 0.0) -> np.ndarray:
    """Single-particle Rice-Mele matrix at loop parameter ``s``.

    Site ``j`` has on-site energy ``(-1)^j Delta cos(2 pi s)``; bond
    ``(j, j+1)`` hops with ``-(t - (-1)^j delta sin(2 pi s))``.  ``twist``
    multiplies the closing bond of a ring by ``exp(i twist)``.
    """
    c, sn = np.cos(2 * np.pi * s), np.sin(2 * np.pi * s)
    h = np.zeros((n_sites, n_sites), complex)
    for j in range(n_sites):
        h[j, j] = (-1) ** j * Delta * c
    bonds = n_sites if periodic else n_sites - 1
    for j in range(bonds):
        k = (j + 1) % n_sites
        amp = -(t - (-1) ** j * delta * sn)
        if periodic and k == 0:
            amp = amp * np.exp(1j * twist)
        h[k, j] += amp
        h[j, k] += np.conj(amp)
    return h


def rice_mele_bloch(k: float, s: float, t: float = 1.0, delta: float = 0.5,
                    Delta: float = 1.0) -> np.ndarray:
    """Two-band Bloch matrix in the periodic gauge that keeps site positions.

    Sites sit at 0 and 1/2 inside a unit cell of length 1.
    """
    c, sn = np.cos(2 * np.pi * s), np.sin(2 * np.pi * s)
    v = -(t - delta * sn)
    w = -(t + delta * sn)
    off = v * np.exp(-0.5j * k) + w * np.exp(0.5j * k)
    return np.array([[Delta * c, np.conj(off)], [off, -Delta * c]])


def _pump_gap(n_sites: int, s: float, **kw) -> float:
    n = n_sites + (n_sites % 2)
    e = np.linalg.eigvalsh(rice_mele_hamiltonian(s, n, periodic=True, **kw))
    return float(e[n // 2] - e[n // 2 - 1])


def rice_mele(s: float = 0.0, n_sites: int = 100, t: float = 1.0, delta: float = 0.5,
              Delta: float = 1.0) -> QuadraticModel:
    """Open Rice-Mele chain at half filling.

    The open chain has edge levels inside the bulk gap, so the gap is probed on
    the periodic closure of the same chain.
    """
    lat = build_lattice("chain", n_sites)
    h = rice_mele_hamiltonian(s, n_sites, t, delta, Delta)
    gap = _pump_gap(n_sites, s, t=t, delta=delta, Delta=Delta)
    return QuadraticModel(lat, h, n_sites // 2, gap_probe=gap, name="rice-mele")


def rice_mele_family(n_sites: int = 100, steps: int = 200, cut: int | None = None,
                     **kw) -> PumpLoop:
    cut = n_sites // 2 - 1 if cut is None else cut
    return PumpLoop(lambda s: rice_mele(s, n_sites, **kw), steps, cut, "rice-mele")


def rice_mele_interacting(s: float = 0.0, n_sites: int = 8, t: float = 1.0,
                          delta: float = 0.5, Delta: float = 1.0, V: float = 0.5,
                          twist: float = 0.0, n_particles: int | None = None,
                          orbitals: int = 2) -> ManyBodyModel:
    """Rice-Mele ring with nearest-neighbour repulsion ``V n_x n_{x+1}``.

    Each lattice site is one unit cell holding ``orbitals`` consecutive
    orbitals of the chain (2 for the usual two-site cell, 1 for a site per
    orbital).  Charges, Hamiltonian terms and pair currents are attributed per
    lattice site.
    """
    lat = build_lattice("chain", n_sites, orbitals=orbitals, periodic=True)
    n_orb = n_sites * orbitals
    h = rice_mele_hamiltonian(s, n_orb, t, delta, Delta, periodic=True, twist=twist)
    terms = [Term("onsite", (x,), float(h[x, x].real)) for x in range(n_orb)]
    for x in range(n_orb):
        y = (x + 1) % n_orb
        terms.append(Term("hop", (y, x), complex(h[y, x])))
        if V:
            terms.append(Term("nn", (x, y), V))
    n_p = n_orb // 2 if n_particles is None else n_particles
    return ManyBodyModel(lat, terms, n_p, name="rice-mele-interacting")


def rice_mele_interacting_family(n_sites: int = 8, steps: int = 32, cut: int | None = None,
                                 **kw) -> PumpLoop:
    cut = n_sites // 2 - 1 if cut is None else cut
    return PumpLoop(lambda s: rice_mele_interacting(s, n_sites, **kw), steps, cut,
                    "rice-mele-interacting")


# ---------------------------------------------------------------------------
# user-supplied models
# ---------------------------------------------------------------------------
def custom_hoppings(path, lattice: Lattice, n_particles: int,
                    gap_probe: float | None = None) -> QuadraticModel:
    """Read a hopping list from CSV with columns ``x,y,re,im``.

    Each row adds ``(re + i im) c+_x c_y + h.c.``; rows with ``x == y`` set an
    on-site energy.  A header row is optional.
    """
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                x, y, re, im = rec[:4]
                rows.append((int(x), int(y), complex(float(re), float(im))))
            except ValueError:
                if rows:
                    raise
                continue  # header
    h = hopping_matrix(lattice.n_orbitals, rows)
    return QuadraticModel(lattice, h, n_particles, gap_probe=gap_probe, name="custom-hoppings")


def custom_terms(path, lattice: Lattice, n_particles: int) -> ManyBodyModel:
    """Read a JSON list of terms ``{"kind", "orbitals", "amp"}``."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data["terms"]
    return ManyBodyModel(lattice, [Term.from_dict(d) for d in data], n_particles,
                         name="custom-terms")
