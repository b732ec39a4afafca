"""Truncated lattice boxes ``[-L, L]^d`` of the integer lattice.

Sites are stored in row-major order over their coordinates, first
coordinate slowest. Distances are always the graph (l1) metric.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import CapacityError, ValidationError

#: Largest number of sites a box may hold.
MAX_SITES = 2_000_000


@dataclass(frozen=True)
class LatticeBox:
    """The box ``[-L, L]^d`` with a fixed site <-> index bijection."""

    d: int
    L: int
    _coords: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValidationError(f"dimension d must be an integer >= 1, got {self.d}")
        if int(self.L) != self.L or self.L < 1:
            raise ValidationError(f"box radius L must be an integer >= 1, got {self.L}")
        if (2 * self.L + 1) ** self.d > MAX_SITES:
            raise CapacityError(
                f"box with d={self.d}, L={self.L} has {(2 * self.L + 1) ** self.d} sites, "
                f"more than the limit {MAX_SITES}"
            )
        side = np.arange(-self.L, self.L + 1)
        grids = np.meshgrid(*([side] * self.d), indexing="ij")
        coords = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
        coords.setflags(write=False)
        object.__setattr__(self, "_coords", coords)

    @property
    def side(self) -> int:
        return 2 * self.L + 1

    @property
    def M(self) -> int:
        return self.side**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.d

    @property
    def coords(self) -> np.ndarray:
        """``(M, d)`` integer array; row ``i`` is the site with flat index ``i``."""
        return self._coords

    def site_of(self, i: int) -> tuple[int, ...]:
        if not 0 <= i < self.M:
            raise ValidationError(f"index {i} outside [0, {self.M})")
        return tuple(int(c) for c in self._coords[i])

    def index_of(self, site) -> int:
        site = tuple(int(c) for c in site)
        if len(site) != self.d:
            raise ValidationError(f"site {site} does not have dimension {self.d}")
        idx = 0
        for c in site:
            if abs(c) > self.L:
                raise ValidationError(f"site {site} lies outside the box of radius {self.L}")
            idx = idx * self.side + (c + self.L)
        return idx

    @property
    def origin_index(self) -> int:
        return (self.M - 1) // 2

    @cached_property
    def l1_norms(self) -> np.ndarray:
        """``|x|_1`` for every site, in index order."""
        return np.abs(self._coords).sum(axis=1)

    @cached_property
    def offsets(self) -> tuple[np.ndarray, int]:
        return self.displacement_offsets()

    def displacement_offsets(self) -> tuple[np.ndarray, int]:
        """Offsets into a row-major ``(4L+1)^d`` displacement table.

        The table entry for ``x - y`` sits at ``center + off[x] - off[y]``.
        """
        width = 4 * self.L + 1
        strides = width ** np.arange(self.d - 1, -1, -1, dtype=np.int64)
        off = ((self._coords + self.L) * strides).sum(axis=1).astype(np.int64)
        center = int((2 * self.L * strides).sum())
        return off, center

    def check_field(self, u, name: str = "u") -> np.ndarray:
        """Return ``u`` as a flat float array after shape and finiteness checks."""
        arr = np.asarray(u, dtype=float)
        if arr.shape == self.shape:
            arr = arr.ravel()
        if arr.shape != (self.M,):
            raise ValidationError(
                f"field {name} has shape {np.shape(u)}, expected ({self.M},) or {self.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"field {name} has non-finite entries")
        return arr

    def delta(self, site=None) -> np.ndarray:
        """Unit mass at ``site`` (the origin by default)."""
        u = np.zeros(self.M)
        u[self.origin_index if site is None else self.index_of(site)] = 1.0
        return u


def build_box(d: int, L: int) -> LatticeBox:
    return LatticeBox(d, L)


def l1_distance(x, y) -> int:
    """Graph distance on the integer lattice, ``sum_j |x_j - y_j|``."""
    x = np.atleast_1d(np.asarray(x, dtype=np.int64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"sites {tuple(x)} and {tuple(y)} differ in dimension")
    return int(np.abs(x - y).sum())
