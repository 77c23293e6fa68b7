"""Local operator decompositions with decay bookkeeping.

A :class:`LocalDecomposition` represents an operator on the lattice as a sum
of dense blocks, each registered to an ``r x r`` square. A block may act on
any subset of its square's qubits, so re-registering a block on a larger
square (see :func:`pad_boundary`) never changes the operator, only the
bookkeeping key.

The decay predicate

    norm(block) * r**degree * exp(rate * r) <= strength

is the contract downstream norm estimates rely on; every operation that
produces a decomposition either fits a fresh envelope or re-verifies the
claimed one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dense import check_dense, embed, operator_norm
from .lattice import Lattice, Square

__all__ = [
    "DecayClass",
    "InteractionTerm",
    "LocalDecomposition",
    "degree_reset",
    "embed_on_register",
    "pad_boundary",
]


@dataclass(frozen=True)
class DecayClass:
    """Term-norm envelope ``norm <= strength * r**(-degree) * exp(-rate*r)``.

    ``strength`` sets the overall scale, ``rate`` the exponential falloff in
    the square size r, and ``degree`` an extra polynomial suppression
    (negative degrees weaken the envelope).
    """

    strength: float
    rate: float
    degree: float = 0.0

    def __post_init__(self):
        if not (self.strength >= 0.0 and math.isfinite(self.strength)):
            raise ValueError("strength must be finite and >= 0")
        if not (self.rate > 0.0 and math.isfinite(self.rate)):
            raise ValueError("rate must be finite and > 0")
        if not math.isfinite(self.degree):
            raise ValueError("degree must be finite")

    def term_bound(self, size: int) -> float:
        """Largest admissible block norm on a square of the given size."""
        if size < 1:
            raise ValueError("square size must be >= 1")
        return self.strength * size ** (-self.degree) * math.exp(-self.rate * size)

    def allows(self, size: int, norm: float, tol: float = 1e-9) -> bool:
        """Whether a block of this norm fits the envelope (relative slack)."""
        return norm * size ** self.degree * math.exp(self.rate * size) \
            <= self.strength * (1.0 + tol)

    def degree_reset(self, epsilon: float, degree_gain: float) -> "DecayClass":
        """Trade a little exponential decay for polynomial degree.

        Any decomposition satisfying this envelope also satisfies the
        returned one: degree grows by ``degree_gain``, strength becomes
        ``c * strength**(1-epsilon)`` with ``c = (degree_gain/e)**degree_gain``
        (the peak of ``x**degree_gain * exp(-x)``), and the rate drops by
        ``strength**(epsilon/degree_gain)``. Raises when the reduced rate
        would not stay positive.
        """
        if not 0.0 < epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if degree_gain <= 0.0:
            raise ValueError("degree_gain must be > 0")
        if self.strength == 0.0:
            return DecayClass(0.0, self.rate, self.degree + degree_gain)
        peak = (degree_gain / math.e) ** degree_gain
        new_strength = peak * self.strength ** (1.0 - epsilon)
        new_rate = self.rate - self.strength ** (epsilon / degree_gain)
        if new_rate <= 0.0:
            raise ValueError(
                f"decay exhausted: rate {self.rate:g} cannot absorb the "
                f"degree gain at strength {self.strength:g}")
        return DecayClass(new_strength, new_rate, self.degree + degree_gain)


def degree_reset(decay: DecayClass, epsilon: float, degree_gain: float) -> DecayClass:
    """Functional alias for :meth:`DecayClass.degree_reset`."""
    return decay.degree_reset(epsilon, degree_gain)


def embed_on_register(block: np.ndarray, qubits, register) -> np.ndarray:
    """Embed a block acting on ``qubits`` into a register of global indices.

    ``register`` must contain every entry of ``qubits``; slots keep the
    most-significant-first convention of :func:`tqolab.dense.embed`.
    """
    register = tuple(register)
    lookup = {q: i for i, q in enumerate(register)}
    try:
        positions = [lookup[int(q)] for q in qubits]
    except KeyError as exc:
        raise ValueError(f"register {register} misses block qubit {exc}") from exc
    return embed(block, positions, len(register))


@dataclass(frozen=True)
class InteractionTerm:
    """One dense block registered to a square.

    ``block`` acts on ``qubits`` (strictly increasing global indices, first
    index most significant) which must stay inside the square's qubit set.
    ``norm`` caches the spectral norm of the block.
    """

    square: Square
    qubits: tuple
    block: np.ndarray
    norm: float

    @classmethod
    def on(cls, lattice: Lattice, square: Square, block, qubits=None) -> "InteractionTerm":
        if qubits is None:
            qubits = lattice.region_qubits(square)
        qubits = tuple(int(q) for q in qubits)
        if list(qubits) != sorted(set(qubits)):
            raise ValueError("qubits must be strictly increasing")
        allowed = set(lattice.region_qubits(square))
        if not set(qubits) <= allowed:
            raise ValueError(
                f"block qubits {qubits} leave the declared square {square}")
        block = np.asarray(block, dtype=np.complex128)
        dim = 1 << len(qubits)
        check_dense(dim)
        if block.shape != (dim, dim):
            raise ValueError(
                f"block shape {block.shape} does not match {len(qubits)} qubits")
        return cls(square, qubits, block, float(operator_norm(block)))

    @property
    def size(self) -> int:
        return self.square.r

    @property
    def key(self):
        return (self.square.r, (self.square.x, self.square.y))

    def embed_to(self, register) -> np.ndarray:
        return embed_on_register(self.block, self.qubits, register)

    def scaled(self, factor: float) -> "InteractionTerm":
        return InteractionTerm(self.square, self.qubits,
                               self.block * factor, self.norm * abs(factor))

    def deviation_from_hermitian(self) -> float:
        return float(operator_norm(self.block - self.block.conj().T))

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return self.deviation_from_hermitian() <= tol * max(1.0, self.norm)

    def is_anti_hermitian(self, tol: float = 1e-10) -> bool:
        drift = float(operator_norm(self.block + self.block.conj().T))
        return drift <= tol * max(1.0, self.norm)


class LocalDecomposition:
    """A sum of square-registered blocks with an optional claimed envelope.

    Terms are keyed by ``(size, anchor)``; adding a block under an existing
    key accumulates it (registers are merged). Iteration order is sorted by
    key, which keeps parallel term-level maps mergeable deterministically.
    """

    def __init__(self, lattice: Lattice, terms=(), claimed: DecayClass | None = None,
                 info: dict | None = None):
        self.lattice = lattice
        self.claimed = claimed
        self.info = dict(info or {})
        self._terms: dict = {}
        for term in terms:
            self.add_term(term)

    # -- construction ----------------------------------------------------------

    def add_term(self, term: InteractionTerm):
        if term.square.L != self.lattice.L:
            raise ValueError("term square belongs to a different lattice size")
        key = term.key
        cur = self._terms.get(key)
        if cur is None:
            self._terms[key] = term
            return
        register = tuple(sorted(set(cur.qubits) | set(term.qubits)))
        block = embed_on_register(cur.block, cur.qubits, register) \
            + embed_on_register(term.block, term.qubits, register)
        self._terms[key] = InteractionTerm.on(self.lattice, term.square, block, register)

    def add(self, square: Square, block, qubits=None):
        self.add_term(InteractionTerm.on(self.lattice, square, block, qubits))

    def copy(self) -> "LocalDecomposition":
        out = LocalDecomposition(self.lattice, claimed=self.claimed,
                                 info=dict(self.info))
        out._terms = dict(self._terms)
        return out

    # -- views -----------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        for key in sorted(self._terms):
            yield self._terms[key]

    def keys(self):
        return sorted(self._terms)

    def get(self, key) -> InteractionTerm | None:
        if isinstance(key, Square):
            key = (key.r, (key.x, key.y))
        return self._terms.get(key)

    @property
    def terms(self) -> tuple:
        return tuple(self)

    def support_qubits(self) -> tuple:
        out = set()
        for term in self._terms.values():
            out.update(term.qubits)
        return tuple(sorted(out))

    def support_sites(self) -> frozenset:
        return frozenset(self.lattice.site_of_qubit(q)
                         for q in self.support_qubits())

    def max_size(self) -> int:
        return max((t.size for t in self._terms.values()), default=0)

    def norm_bound(self) -> float:
        """Triangle-inequality bound on the norm of the represented operator."""
        return float(sum(t.norm for t in self._terms.values()))

    # -- algebra -----------------------------------------------------------------

    def total(self, register=None) -> np.ndarray:
        """Dense sum of all blocks on the given register (default: support)."""
        if register is None:
            register = self.support_qubits()
        register = tuple(register)
        dim = 1 << len(register)
        check_dense(dim)
        out = np.zeros((dim, dim), dtype=np.complex128)
        for term in self:
            out += term.embed_to(register)
        return out

    def merged(self, other: "LocalDecomposition") -> "LocalDecomposition":
        if other.lattice.L != self.lattice.L:
            raise ValueError("cannot merge decompositions on different lattices")
        out = self.copy()
        out.claimed = None
        out.info = {}
        for term in other:
            out.add_term(term)
        return out

    def __add__(self, other):
        return self.merged(other)

    def scaled(self, factor: float) -> "LocalDecomposition":
        out = LocalDecomposition(self.lattice)
        out._terms = {k: t.scaled(factor) for k, t in self._terms.items()}
        if self.claimed is not None and factor != 0:
            out.claimed = DecayClass(self.claimed.strength * abs(factor),
                                     self.claimed.rate, self.claimed.degree)
        return out

    def map_blocks(self, fn) -> "LocalDecomposition":
        """New decomposition with ``fn(term) -> block`` applied per term."""
        out = LocalDecomposition(self.lattice)
        for term in self:
            out.add(term.square, fn(term), term.qubits)
        return out

    def split(self, max_size: int):
        """Partition into (terms with size <= max_size, the rest)."""
        within = LocalDecomposition(self.lattice, claimed=self.claimed)
        beyond = LocalDecomposition(self.lattice, claimed=self.claimed)
        for term in self:
            (within if term.size <= max_size else beyond).add_term(term)
        return within, beyond

    # -- predicates ---------------------------------------------------------------

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return all(t.is_hermitian(tol) for t in self)

    def is_anti_hermitian(self, tol: float = 1e-10) -> bool:
        return all(t.is_anti_hermitian(tol) for t in self)

    def fit_strength(self, rate: float, degree: float = 0.0) -> float:
        """Smallest envelope strength at the given rate and degree."""
        best = 0.0
        for term in self:
            best = max(best, term.norm * term.size ** degree
                       * math.exp(rate * term.size))
        return best

    def fit_class(self, rate: float, degree: float = 0.0) -> DecayClass:
        return DecayClass(self.fit_strength(rate, degree), rate, degree)

    def verify_class(self, decay: DecayClass | None = None, tol: float = 1e-9) -> bool:
        decay = decay if decay is not None else self.claimed
        if decay is None:
            raise ValueError("no decay envelope given or claimed")
        return all(decay.allows(t.size, t.norm, tol) for t in self)

    def class_report(self, decay: DecayClass | None = None) -> list:
        decay = decay if decay is not None else self.claimed
        if decay is None:
            raise ValueError("no decay envelope given or claimed")
        return [{"key": t.key, "norm": t.norm,
                 "bound": decay.term_bound(t.size),
                 "ok": decay.allows(t.size, t.norm)} for t in self]


def pad_boundary(dec: LocalDecomposition) -> LocalDecomposition:
    """Re-register every block on its square grown by one site per side.

    The represented operator is unchanged; a key ``(r, a)`` moves to
    ``(r+2, a-1)``, clamped to the whole lattice once ``r+2`` reaches the
    lattice size (whole-lattice terms are exactly the ones a flow run routes
    to its error channel). Re-registered blocks act trivially on the sites
    adjacent to their new square's boundary, which is what makes them commute
    with every generator not contained in that square.

    A claimed envelope (strength, rate, degree) converts to
    ``(c * strength * exp(2*rate), rate, degree)`` with
    ``c = max(1, 3**degree)``, which the output is guaranteed to satisfy.
    """
    out = LocalDecomposition(dec.lattice)
    for term in dec:
        out.add(term.square.expand(1), term.block, term.qubits)
    if dec.claimed is not None:
        factor = max(1.0, 3.0 ** dec.claimed.degree)
        out.claimed = DecayClass(
            factor * dec.claimed.strength * math.exp(2.0 * dec.claimed.rate),
            dec.claimed.rate, dec.claimed.degree)
    out.info["padded"] = True
    return out
