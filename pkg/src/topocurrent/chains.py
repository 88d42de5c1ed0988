"""Operator-valued chains on a finite lattice.

An n-chain assigns an operator to every (n+1)-tuple of distinct sites and is
skew-symmetric under permutations of the tuple.  Only sorted tuples are
stored; reading a permuted tuple returns the stored entry times the
permutation sign.

Payloads are numpy arrays, scipy sparse matrices or plain complex scalars.
Every reduction walks tuples in ascending order so results do not depend on
dictionary insertion order or on how work was scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Callable, Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .lattice import GeometryError, Lattice, Region

__all__ = [
    "ChainError",
    "OperatorHandle",
    "NChain",
    "DressedChain",
    "boundary",
    "restrict",
    "chain_commutator_with_restriction",
    "op_norm",
    "permutation_sign",
]

BACKENDS = ("quadratic", "manybody", "scalar")


class ChainError(ValueError):
    """Raised for malformed chains or backend mismatches."""


@dataclass(frozen=True)
class OperatorHandle:
    """An operator tagged with the backend that produced it."""

    backend: str
    payload: object

    def dense(self) -> np.ndarray:
        return to_dense(self.payload)

    def __add__(self, other: "OperatorHandle") -> "OperatorHandle":
        if other.backend != self.backend:
            raise ChainError("cannot mix operators from different backends")
        return OperatorHandle(self.backend, _add(self.payload, other.payload))


def to_dense(x) -> np.ndarray:
    if sp.issparse(x):
        return x.toarray()
    return np.asarray(x)


def op_norm(x) -> float:
    """Frobenius norm; an upper bound on the operator norm."""
    if x is None:
        return 0.0
    if sp.issparse(x):
        return float(sp.linalg.norm(x)) if x.nnz else 0.0
    return float(np.linalg.norm(np.asarray(x)))


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _scale(c, a):
    return a * c


def _commutator(a, b):
    return a @ b - b @ a


def permutation_sign(perm) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


class NChain:
    """Skew-symmetric operator-valued function on (degree+1)-tuples of sites.

    Parameters
    ----------
    degree : int
        0, 1 or 2.
    lattice : Lattice
    entries : mapping
        Tuple of site ids to payload.  Tuples may be unsorted; they are
        normalized with the permutation sign.  Repeated entries add up.
    backend : {"quadratic", "manybody", "scalar"}
    cutoff : float
        Entries whose tuple diameter exceeds the cutoff are dropped.
    selfadjoint : bool
        Declares every payload self-adjoint (checked on request).
    """

    def __init__(self, degree: int, lattice: Lattice, entries: Mapping[tuple, object],
                 backend: str, cutoff: float = np.inf, selfadjoint: bool = False,
                 zero=None):
        if degree not in (0, 1, 2):
            raise ChainError(f"chain degree must be 0, 1 or 2, got {degree}")
        if backend not in BACKENDS:
            raise ChainError(f"unknown backend {backend!r}")
        self.degree = degree
        self.lattice = lattice
        self.backend = backend
        self.cutoff = float(cutoff)
        self.selfadjoint = selfadjoint
        self.zero = zero
        store: dict[tuple, object] = {}
        for key in sorted(entries, key=lambda k: tuple(sorted(k))):
            key = tuple(int(k) for k in key)
            if len(key) != degree + 1:
                raise ChainError(f"tuple {key} does not match degree {degree}")
            if len(set(key)) != len(key):
                raise ChainError(f"tuple {key} repeats a site")
            if any(k < 0 or k >= lattice.n_sites for k in key):
                raise ChainError(f"tuple {key} leaves the lattice")
            if np.isfinite(self.cutoff) and self._diameter(key) > self.cutoff:
                continue
            order = sorted(range(len(key)), key=lambda i: key[i])
            skey = tuple(key[i] for i in order)
            val = entries[key]
            if permutation_sign(order) < 0:
                val = _scale(-1, val)
            store[skey] = _add(store.get(skey), val)
        self._entries = dict(sorted(store.items()))

    def _diameter(self, key) -> float:
        if len(key) == 1:
            return 0.0
        return max(float(np.hypot(*self.lattice.pair_displacement(i, j)))
                   for i in key for j in key if i < j)

    def keys(self) -> list[tuple]:
        return list(self._entries)

    def items(self):
        return list(self._entries.items())

    def __len__(self) -> int:
        return len(self._entries)

    def entry(self, *idx):
        """Entry for an arbitrary ordering of sites (``None`` if absent)."""
        if len(idx) != self.degree + 1:
            raise ChainError("wrong number of indices")
        if len(set(idx)) != len(idx):
            return None
        order = sorted(range(len(idx)), key=lambda i: idx[i])
        skey = tuple(idx[i] for i in order)
        val = self._entries.get(skey)
        if val is None:
            return None
        return val if permutation_sign(order) > 0 else _scale(-1, val)

    def map(self, fn: Callable, cutoff: float | None = None) -> "NChain":
        """Apply a linear map entrywise."""
        return NChain(self.degree, self.lattice, {k: fn(v) for k, v in self._entries.items()},
                      self.backend, self.cutoff if cutoff is None else cutoff,
                      self.selfadjoint, self.zero)

    def __add__(self, other: "NChain") -> "NChain":
        _same(self, other)
        keys = sorted(set(self._entries) | set(other._entries))
        ent = {k: _add(self._entries.get(k), other._entries.get(k)) for k in keys}
        return NChain(self.degree, self.lattice, ent, self.backend,
                      min(self.cutoff, other.cutoff), self.selfadjoint and other.selfadjoint,
                      self.zero)

    def __mul__(self, c) -> "NChain":
        return self.map(lambda v: _scale(c, v))

    __rmul__ = __mul__

    def max_entry_norm(self) -> float:
        return max((op_norm(v) for v in self._entries.values()), default=0.0)

    def selfadjoint_residual(self) -> float:
        res = 0.0
        for v in self._entries.values():
            if np.isscalar(v):
                res = max(res, abs(np.imag(v)))
            else:
                res = max(res, op_norm(v - v.conj().T))
        return res

    def norm_profile(self) -> list[tuple[float, float]]:
        """(tuple diameter, entry norm) pairs in ascending key order."""
        return [(self._diameter(k), op_norm(v)) for k, v in self._entries.items()]

    def manifest(self) -> dict:
        return {"degree": self.degree, "backend": self.backend, "cutoff": self.cutoff,
                "entries": [{"sites": list(k), "norm": op_norm(v)}
                            for k, v in self._entries.items()]}


class DressedChain:
    """Chain defined as a linear image ``fn(base)`` of another chain.

    Entries and restrictions are evaluated on demand: by linearity
    ``restrict(fn(base), R) = fn(restrict(base, R))``.  This is how dressed
    currents with dense payloads are handled without storing one dense
    matrix per bond.
    """

    def __init__(self, base: NChain, fn: Callable, cutoff: float = np.inf):
        self.base = base
        self.fn = fn
        self.degree = base.degree
        self.lattice = base.lattice
        self.backend = base.backend
        self.cutoff = float(cutoff)
        self.selfadjoint = base.selfadjoint

    def keys(self):
        return self.base.keys()

    def entry(self, *idx):
        v = self.base.entry(*idx)
        return None if v is None else self.fn(v)

    def materialize(self) -> NChain:
        return self.base.map(self.fn, cutoff=self.cutoff)

    def restrict(self, regions) -> OperatorHandle:
        h = restrict(self.base, regions)
        return OperatorHandle(self.backend, self.fn(h.payload))


def _same(a, b):
    if a.lattice is not b.lattice:
        raise ChainError("chains live on different lattices")
    if a.backend != b.backend:
        raise ChainError("chains use different backends")
    if a.degree != b.degree:
        raise ChainError("chains have different degrees")


def boundary(chain: NChain) -> NChain:
    """Sum over the last index: (dM)_{j0..j(n-1)} = sum_jn M_{j0..jn}."""
    if isinstance(chain, DressedChain):
        chain = chain.materialize()
    if chain.degree == 0:
        raise ChainError("boundary of a 0-chain is undefined")
    n = chain.degree
    out: dict[tuple, object] = {}
    for key, val in chain.items():
        for pos in range(n + 1):
            # moving key[pos] to the end is a cycle of length n - pos + 1
            sign = -1 if (n - pos) % 2 else 1
            rest = key[:pos] + key[pos + 1:]
            out[rest] = _add(out.get(rest), val if sign > 0 else _scale(-1, val))
    return NChain(n - 1, chain.lattice, out, chain.backend, chain.cutoff,
                  chain.selfadjoint, chain.zero)


def restrict(chain, regions: Iterable[Region]) -> OperatorHandle:
    """Sum of entries over tuples with j_i in regions[i].

    Absent entries count as zero; the sum runs over stored tuples in
    ascending order and over permutations in lexicographic order.
    """
    if isinstance(chain, DressedChain):
        return chain.restrict(regions)
    regions = list(regions)
    if len(regions) != chain.degree + 1:
        raise ChainError(f"need {chain.degree + 1} regions for a degree-{chain.degree} chain")
    for r in regions:
        if r.lattice is not chain.lattice:
            raise GeometryError("region and chain live on different lattices")
    masks = [r.mask for r in regions]
    perms = list(permutations(range(chain.degree + 1)))
    signs = [permutation_sign(p) for p in perms]
    total = None
    for key, val in chain.items():
        for perm, sgn in zip(perms, signs):
            if all(masks[i][key[perm[i]]] for i in range(len(perm))):
                total = _add(total, val if sgn > 0 else _scale(-1, val))
    if total is None:
        total = 0.0 if chain.zero is None else chain.zero
    return OperatorHandle(chain.backend, total)


def chain_commutator_with_restriction(chain0: NChain, op: OperatorHandle) -> OperatorHandle:
    """Sum over sites of [F_j, op] for a 0-chain F."""
    if chain0.degree != 0:
        raise ChainError("expected a 0-chain")
    if op.backend != chain0.backend:
        raise ChainError("backend mismatch between chain and operator")
    total = None
    for _, val in chain0.items():
        total = _add(total, _commutator(val, op.payload))
    if total is None:
        total = 0.0 if chain0.zero is None else chain0.zero
    return OperatorHandle(op.backend, total)
