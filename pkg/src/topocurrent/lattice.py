"""Finite lattices, regions and triple-junction partitions.

All geometric predicates act on site positions.  On periodic lattices the
positions are first unwrapped around a reference point with the minimum-image
convention, so a region such as a disk or a half-plane is always the
"local" one around that point.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GeometryError",
    "Lattice",
    "Region",
    "TriplePartition",
    "build_lattice",
    "half_plane",
    "disk",
    "annulus",
    "box",
    "sector",
    "triple_partition",
]

SQRT3 = np.sqrt(3.0)


class GeometryError(ValueError):
    """Raised for invalid lattice descriptors or region/partition requests."""


@dataclass(frozen=True, eq=False)
class Lattice:
    """Finite set of sites embedded in the plane.

    Parameters
    ----------
    positions : ndarray, shape (N, 2)
        Site coordinates.
    orbitals : ndarray, shape (N,)
        Number of orbitals carried by each site (>= 1).
    period : tuple of float or None
        Torus periods ``(Px, Py)``; ``None`` for an open lattice.
    kind : str
        Descriptor name, informational only.
    shape : tuple of int
        Cell extents ``(Lx, Ly)``.
    sublattice : ndarray, shape (N,)
        Index of the site inside its unit cell.
    """

    positions: np.ndarray
    orbitals: np.ndarray
    period: tuple[float, float] | None = None
    kind: str = "custom"
    shape: tuple[int, int] = (0, 0)
    sublattice: np.ndarray | None = None
    _offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=float)
        orb = np.ascontiguousarray(self.orbitals, dtype=int)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise GeometryError("positions must have shape (N, 2)")
        if len(pos) == 0:
            raise GeometryError("lattice has no sites")
        if orb.shape != (len(pos),) or np.any(orb < 1):
            raise GeometryError("orbital counts must be positive, one per site")
        if len(pos) > 1:
            dmin = _min_spacing(pos, self.period)
            if dmin <= 1e-9:
                raise GeometryError("duplicate site positions")
        pos.setflags(write=False)
        orb.setflags(write=False)
        sub = np.zeros(len(pos), int) if self.sublattice is None else np.asarray(self.sublattice, int)
        sub.setflags(write=False)
        offs = np.concatenate([[0], np.cumsum(orb)])
        offs.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "orbitals", orb)
        object.__setattr__(self, "sublattice", sub)
        object.__setattr__(self, "_offsets", offs)

    @property
    def n_sites(self) -> int:
        return len(self.positions)

    @property
    def n_orbitals(self) -> int:
        return int(self._offsets[-1])

    @property
    def periodic(self) -> bool:
        return self.period is not None

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower-left and upper-right corners of the bounding rectangle."""
        if self.period is not None:
            lo = self.positions.min(axis=0)
            return lo, lo + np.asarray(self.period)
        return self.positions.min(axis=0), self.positions.max(axis=0)

    @property
    def center(self) -> np.ndarray:
        lo, hi = self.bbox
        return 0.5 * (lo + hi)

    def orbital_slice(self, site: int) -> slice:
        return slice(int(self._offsets[site]), int(self._offsets[site + 1]))

    @property
    def orbital_site(self) -> np.ndarray:
        """Site index of every orbital."""
        return np.repeat(np.arange(self.n_sites), self.orbitals)

    def displacement(self, point) -> np.ndarray:
        """Vectors from ``point`` to every site (minimum image on a torus)."""
        d = self.positions - np.asarray(point, float)
        if self.period is not None:
            per = np.asarray(self.period)
            d = (d + 0.5 * per) % per - 0.5 * per
        return d

    def unwrapped(self, point) -> np.ndarray:
        """Site positions unwrapped around ``point``."""
        return np.asarray(point, float) + self.displacement(point)

    def distance(self, point) -> np.ndarray:
        return np.hypot(*self.displacement(point).T)

    def pair_displacement(self, i: int, j: int) -> np.ndarray:
        return self.displacement(self.positions[i])[j]

    def contains_point(self, point) -> bool:
        if self.period is not None:
            return True
        lo, hi = self.bbox
        p = np.asarray(point, float)
        return bool(np.all(p >= lo - 0.5) and np.all(p <= hi + 0.5))

    def fingerprint(self) -> bytes:
        per = np.asarray(self.period if self.period else (0.0, 0.0), float)
        return self.positions.tobytes() + self.orbitals.tobytes() + per.tobytes()


def _min_spacing(pos: np.ndarray, period) -> float:
    best = np.inf
    per = None if period is None else np.asarray(period, float)
    # chunked pairwise distances keep memory bounded for large lattices
    for start in range(0, len(pos), 512):
        d = pos[start:start + 512, None, :] - pos[None, :, :]
        if per is not None:
            d = (d + 0.5 * per) % per - 0.5 * per
        r = np.hypot(d[..., 0], d[..., 1])
        idx = np.arange(start, min(start + 512, len(pos)))
        r[idx - start, idx] = np.inf
        best = min(best, float(r.min()))
    return best


def build_lattice(kind: str, Lx: int, Ly: int = 1, orbitals: int = 1,
                  periodic: bool = False) -> Lattice:
    """Build a standard lattice.

    Parameters
    ----------
    kind : {"square", "honeycomb", "chain"}
        ``square`` has unit spacing; ``honeycomb`` uses unit lattice constant
        with two sites per cell (bond length ``1/sqrt(3)``), rows shifted so
        the cell array is rectangular; ``chain`` is one-dimensional.
    Lx, Ly : int
        Number of cells along each direction.
    orbitals : int
        Orbitals per site.
    periodic : bool
        Wrap into a torus.  A periodic honeycomb needs even ``Ly``.

    Returns
    -------
    Lattice
        Sites ordered row-major by cell (``y`` slowest), then by sublattice.
    """
    if Lx < 1 or Ly < 1:
        raise GeometryError(f"lattice extents must be >= 1, got {Lx}x{Ly}")
    if orbitals < 1:
        raise GeometryError("orbitals per site must be >= 1")
    if kind == "square":
        ys, xs = np.divmod(np.arange(Lx * Ly), Lx)
        pos = np.column_stack([xs, ys]).astype(float)
        sub = np.zeros(len(pos), int)
        period = (float(Lx), float(Ly)) if periodic else None
    elif kind == "chain":
        if Ly != 1:
            raise GeometryError("a chain has Ly = 1")
        pos = np.column_stack([np.arange(Lx), np.zeros(Lx)]).astype(float)
        sub = np.zeros(Lx, int)
        period = (float(Lx), 1.0) if periodic else None
    elif kind == "honeycomb":
        if periodic and Ly % 2:
            raise GeometryError("periodic honeycomb needs an even number of rows")
        pos, sub = [], []
        basis = [np.zeros(2), np.array([0.5, SQRT3 / 6])]
        for j in range(Ly):
            for i in range(Lx):
                origin = np.array([i + 0.5 * j - (j // 2), j * SQRT3 / 2])
                for s in range(2):
                    pos.append(origin + basis[s])
                    sub.append(s)
        pos = np.array(pos)
        sub = np.array(sub)
        period = (float(Lx), Ly * SQRT3 / 2) if periodic else None
    else:
        raise GeometryError(f"unknown lattice kind {kind!r}")
    orb = np.full(len(pos), orbitals, int)
    return Lattice(pos, orb, period=period, kind=kind, shape=(Lx, Ly), sublattice=sub)


@dataclass(frozen=True, eq=False)
class Region:
    """A set of lattice sites."""

    lattice: Lattice
    sites: np.ndarray

    def __post_init__(self):
        s = np.unique(np.asarray(self.sites, dtype=int))
        if len(s) and (s[0] < 0 or s[-1] >= self.lattice.n_sites):
            raise GeometryError("region contains sites outside the lattice")
        s.setflags(write=False)
        object.__setattr__(self, "sites", s)

    @classmethod
    def from_mask(cls, lattice: Lattice, mask) -> "Region":
        return cls(lattice, np.flatnonzero(np.asarray(mask, bool)))

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.lattice.n_sites, bool)
        m[self.sites] = True
        return m

    @property
    def orbital_mask(self) -> np.ndarray:
        return np.repeat(self.mask, self.lattice.orbitals)

    def _check(self, other: "Region"):
        if other.lattice is not self.lattice:
            raise GeometryError("regions live on different lattices")

    def complement(self) -> "Region":
        return Region.from_mask(self.lattice, ~self.mask)

    def __or__(self, other: "Region") -> "Region":
        self._check(other)
        return Region.from_mask(self.lattice, self.mask | other.mask)

    def __and__(self, other: "Region") -> "Region":
        self._check(other)
        return Region.from_mask(self.lattice, self.mask & other.mask)

    def __sub__(self, other: "Region") -> "Region":
        self._check(other)
        return Region.from_mask(self.lattice, self.mask & ~other.mask)

    def __len__(self) -> int:
        return len(self.sites)

    def __contains__(self, site) -> bool:
        return bool(self.mask[int(site)])

    def __eq__(self, other) -> bool:
        return (isinstance(other, Region) and other.lattice is self.lattice
                and np.array_equal(self.sites, other.sites))

    def __hash__(self):
        return hash((id(self.lattice), self.sites.tobytes()))

    def to_list(self) -> list[int]:
        return [int(s) for s in self.sites]


def _reference(lattice: Lattice, center) -> np.ndarray:
    return lattice.center if center is None else np.asarray(center, float)


def half_plane(lattice: Lattice, axis: int | str, offset: float, center=None,
               side: int = 1) -> Region:
    """Sites with coordinate ``> offset`` along ``axis`` (``side=+1``).

    ``side=-1`` returns the exact complement (coordinate ``<= offset``).
    On a torus the coordinates are unwrapped around ``center``.
    """
    ax = {"x": 0, "y": 1}.get(axis, axis)
    if ax not in (0, 1):
        raise GeometryError(f"axis must be 0/1 or 'x'/'y', got {axis!r}")
    u = lattice.unwrapped(_reference(lattice, center))[:, ax]
    m = u > offset
    return Region.from_mask(lattice, m if side > 0 else ~m)


def disk(lattice: Lattice, center, radius: float) -> Region:
    """Sites at distance strictly less than ``radius`` from ``center``."""
    if radius < 0:
        raise GeometryError("radius must be non-negative")
    return Region.from_mask(lattice, lattice.distance(center) < radius)


def annulus(lattice: Lattice, center, r_in: float, r_out: float) -> Region:
    """Sites with ``r_in <= distance < r_out``."""
    if r_in >= r_out:
        raise GeometryError(f"annulus needs r_in < r_out, got {r_in} >= {r_out}")
    r = lattice.distance(center)
    return Region.from_mask(lattice, (r >= r_in) & (r < r_out))


def box(lattice: Lattice, center, half_widths) -> Region:
    """Sites inside the open axis-aligned rectangle around ``center``."""
    d = np.abs(lattice.displacement(center))
    hw = np.asarray(half_widths, float)
    return Region.from_mask(lattice, (d[:, 0] < hw[0]) & (d[:, 1] < hw[1]))


def _angles(lattice: Lattice, point, center=None) -> np.ndarray:
    if center is None:
        d = lattice.displacement(point)
    else:
        c = np.asarray(center, float)
        d = lattice.displacement(c) - (np.asarray(point, float) - c)
    return np.degrees(np.arctan2(d[:, 1], d[:, 0])) % 360.0


def sector(lattice: Lattice, point, start_deg: float, stop_deg: float,
           center=None) -> Region:
    """Sites whose direction from ``point`` lies in ``[start, stop)`` counterclockwise.

    On a torus, positions are unwrapped around ``center`` (default: ``point``
    itself).  Sectors that belong to one construction should share a centre so
    that they are cut along the same seam.
    """
    rel = (_angles(lattice, point, center) - start_deg) % 360.0
    width = (stop_deg - start_deg) % 360.0
    return Region.from_mask(lattice, rel < width)


@dataclass(frozen=True, eq=False)
class TriplePartition:
    """Three regions meeting at a junction point.

    ``orientation = +1`` means A -> B -> C runs counterclockwise.
    """

    point: np.ndarray
    A: Region
    B: Region
    C: Region
    orientation: int
    angles: tuple[float, float, float]
    theta_min: float = 30.0

    @property
    def lattice(self) -> Lattice:
        return self.A.lattice

    def regions(self) -> tuple[Region, Region, Region]:
        return self.A, self.B, self.C

    def truncated(self, radius: float) -> tuple[Region, Region, Region]:
        """The three regions intersected with a disk around the junction."""
        d = disk(self.lattice, self.point, radius)
        return self.A & d, self.B & d, self.C & d


def triple_partition(lattice: Lattice, point, angles: Sequence[float],
                     orientation: int = 1, theta_min: float = 30.0) -> TriplePartition:
    """Split the lattice into three angular sectors around ``point``.

    Parameters
    ----------
    point : array_like
        Junction point; must not coincide with a site.
    angles : three floats (degrees)
        Ray directions.  For ``orientation=+1`` they are read counterclockwise
        and A = [a0, a1), B = [a1, a2), C = [a2, a0).  For ``orientation=-1``
        they are read clockwise and A = [a1, a0), B = [a2, a1), C = [a0, a2).
    theta_min : float
        Minimum separation between adjacent rays, in degrees.

    Notes
    -----
    A site exactly on a ray belongs to the sector counterclockwise of it.
    """
    if orientation not in (1, -1):
        raise GeometryError("orientation must be +1 or -1")
    a = [float(x) % 360.0 for x in angles]
    if len(a) != 3:
        raise GeometryError("need exactly three ray directions")
    p = np.asarray(point, float)
    if not lattice.contains_point(p):
        raise GeometryError("junction point outside the lattice bounding box")
    if np.min(lattice.distance(p)) < 1e-9:
        raise GeometryError("junction point coincides with a site")
    steps = [(a[(i + 1) % 3] - a[i]) % 360.0 for i in range(3)]
    if orientation < 0:
        steps = [(a[i] - a[(i + 1) % 3]) % 360.0 for i in range(3)]
    if abs(sum(steps) - 360.0) > 1e-9 or min(steps) <= theta_min:
        raise GeometryError(
            f"rays {angles} are not separated by more than theta_min={theta_min} deg "
            "in the requested cyclic order")
    if orientation > 0:
        A = sector(lattice, p, a[0], a[1])
        B = sector(lattice, p, a[1], a[2])
        C = sector(lattice, p, a[2], a[0])
    else:
        A = sector(lattice, p, a[1], a[0])
        B = sector(lattice, p, a[2], a[1])
        C = sector(lattice, p, a[0], a[2])
    return TriplePartition(p, A, B, C, orientation, tuple(a), theta_min)


def regions_from_lists(lattice: Lattice, lists: Iterable[Iterable[int]]) -> list[Region]:
    return [Region(lattice, np.fromiter(l, int)) for l in lists]
