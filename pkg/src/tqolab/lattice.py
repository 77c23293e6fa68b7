"""Periodic 2D square lattice, square regions, and qubit layouts.

The lattice is Z_L x Z_L with periodic wrap in both directions and the
l-infinity metric: d(a, b) = max over axes of the cyclic coordinate
distance.

Two qubit layouts are supported.

``sites``
    One qubit per site; qubit index = y * L + x.

``edges``
    Two qubits per site, as in toric-type models. Qubit 2*(y*L + x) is the
    horizontal edge pointing from (x, y) to (x+1, y); qubit 2*(y*L + x) + 1
    is the vertical edge pointing from (x, y) to (x, y+1). An edge qubit
    belongs to a region exactly when its anchor site (x, y) does. With this
    membership rule both plaquette and star operators of the toric code fit
    inside 2x2 squares.

Square regions are anchored blocks of r x r sites with wrap. A square of
size r >= L is the whole lattice and is normalized to anchor (0, 0),
size L, so equality checks behave.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

LAYOUTS = ("sites", "edges")


def cyclic_distance(a: int, b: int, period: int) -> int:
    d = abs(a - b) % period
    return min(d, period - d)


def minimal_cyclic_interval(coords, period: int):
    """Shortest cyclic interval [start, start+length) covering coords.

    Returns (start, length). Ties between equally short intervals resolve
    to the smallest start.
    """
    uniq = sorted({c % period for c in coords})
    if not uniq:
        raise ValueError("empty coordinate set")
    m = len(uniq)
    if m == period:
        return 0, period
    if m == 1:
        return uniq[0], 1
    # the interval complements the largest gap between consecutive coords;
    # a gap of g steps from c_i to c_{i+1} leaves an interval of
    # period - g + 1 sites starting at c_{i+1}
    best_start, best_len = None, period + 1
    for i in range(m):
        nxt = uniq[(i + 1) % m]
        gap = (nxt - uniq[i]) % period
        length = period - gap + 1
        start = nxt
        if length < best_len or (length == best_len and start < best_start):
            best_start, best_len = start, length
    return best_start, best_len


@dataclass(frozen=True)
class Square:
    """An r x r block of sites anchored at (x, y), with periodic wrap."""

    x: int
    y: int
    r: int
    L: int

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("square size must be >= 1")
        if self.r >= self.L:
            object.__setattr__(self, "r", self.L)
            object.__setattr__(self, "x", 0)
            object.__setattr__(self, "y", 0)
        else:
            object.__setattr__(self, "x", self.x % self.L)
            object.__setattr__(self, "y", self.y % self.L)

    @cached_property
    def sites(self) -> tuple:
        L = self.L
        return tuple(sorted(((self.x + i) % L, (self.y + j) % L)
                            for i in range(self.r) for j in range(self.r)))

    @cached_property
    def site_set(self) -> frozenset:
        return frozenset(self.sites)

    def contains_site(self, site) -> bool:
        return (site[0] % self.L, site[1] % self.L) in self.site_set

    def contains(self, other: "Square") -> bool:
        return other.site_set <= self.site_set

    def expand(self, pad: int) -> "Square":
        """Grow by ``pad`` sites on every side (clamped at the whole lattice)."""
        if pad < 0:
            raise ValueError("pad must be >= 0")
        return Square(self.x - pad, self.y - pad, self.r + 2 * pad, self.L)

    @property
    def is_whole_lattice(self) -> bool:
        return self.r == self.L

    def __str__(self):
        return f"({self.x},{self.y},{self.r})"


class Lattice:
    """Periodic Z_L x Z_L lattice with a site or edge qubit layout."""

    def __init__(self, L: int, layout: str = "sites"):
        if L < 2:
            raise ValueError("linear size must be >= 2")
        if layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}, got {layout!r}")
        self.L = int(L)
        self.layout = layout
        self.qubits_per_site = 2 if layout == "edges" else 1

    # -- indexing ------------------------------------------------------------

    @property
    def n_sites(self) -> int:
        return self.L * self.L

    @property
    def n_qubits(self) -> int:
        return self.qubits_per_site * self.n_sites

    def site_index(self, x: int, y: int) -> int:
        return (y % self.L) * self.L + (x % self.L)

    def qubit_index(self, x: int, y: int, orient: int = 0) -> int:
        if not 0 <= orient < self.qubits_per_site:
            raise ValueError(f"orientation {orient} not valid for {self.layout}")
        return self.qubits_per_site * self.site_index(x, y) + orient

    def site_of_qubit(self, q: int):
        s = q // self.qubits_per_site
        return s % self.L, s // self.L

    def site_qubits(self, x: int, y: int) -> tuple:
        base = self.qubits_per_site * self.site_index(x, y)
        return tuple(range(base, base + self.qubits_per_site))

    def region_qubits(self, sites) -> tuple:
        """Sorted qubit indices anchored at the given sites."""
        if isinstance(sites, Square):
            sites = sites.sites
        out = []
        for x, y in sites:
            out.extend(self.site_qubits(x, y))
        return tuple(sorted(out))

    # -- metric --------------------------------------------------------------

    def site_distance(self, a, b) -> int:
        return max(cyclic_distance(a[0], b[0], self.L),
                   cyclic_distance(a[1], b[1], self.L))

    def region_distance(self, a, b) -> int:
        """Minimum site-to-site distance between two regions (0 if they meet)."""
        sa = a.sites if isinstance(a, Square) else tuple(a)
        sb = b.sites if isinstance(b, Square) else tuple(b)
        return min(self.site_distance(p, q) for p in sa for q in sb)

    def neighborhood(self, sites, radius: int) -> frozenset:
        """All sites within l-infinity distance ``radius`` of the region."""
        if isinstance(sites, Square):
            sites = sites.sites
        out = set()
        for x, y in sites:
            for dx in range(-radius, radius + 1):
                for dy in range(-radius, radius + 1):
                    out.add(((x + dx) % self.L, (y + dy) % self.L))
        return frozenset(out)

    # -- square families -----------------------------------------------------

    def square(self, x: int, y: int, r: int) -> Square:
        return Square(x, y, r, self.L)

    def squares(self, r: int) -> list:
        """All r x r squares: L^2 translations for r < L, just the whole
        lattice for r = L, empty for r > L."""
        if r < 1:
            raise ValueError("square size must be >= 1")
        if r > self.L:
            return []
        if r == self.L:
            return [Square(0, 0, self.L, self.L)]
        return [Square(x, y, r, self.L)
                for x in range(self.L) for y in range(self.L)]

    def covering_square(self, sites, r: int = None) -> Square:
        """Smallest square covering the sites; anchors tie-break
        lexicographically.

        With ``r`` given, returns the lexicographically first square of that
        exact size covering the sites instead (raises if none fits).
        """
        if isinstance(sites, Square):
            sites = sites.sites
        sites = [(x % self.L, y % self.L) for x, y in sites]
        if not sites:
            raise ValueError("cannot cover an empty region")
        if r is None:
            _, lx = minimal_cyclic_interval([s[0] for s in sites], self.L)
            _, ly = minimal_cyclic_interval([s[1] for s in sites], self.L)
            r = max(lx, ly)
        if r >= self.L:
            return Square(0, 0, self.L, self.L)
        target = frozenset(sites)
        for x in range(self.L):
            for y in range(self.L):
                sq = Square(x, y, r, self.L)
                if target <= sq.site_set:
                    return sq
        raise ValueError(f"no square of size {r} covers the region")

    # -- symmetries ----------------------------------------------------------

    def translation_permutation(self, dx: int, dy: int) -> np.ndarray:
        """Qubit permutation for the shift (x,y) -> (x+dx, y+dy):
        perm[old] = new."""
        perm = np.empty(self.n_qubits, dtype=np.intp)
        for q in range(self.n_qubits):
            x, y = self.site_of_qubit(q)
            orient = q % self.qubits_per_site
            perm[q] = self.qubit_index(x + dx, y + dy, orient)
        return perm
