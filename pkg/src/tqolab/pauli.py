"""Pauli operators and stabilizer groups in the GF(2) symplectic picture.

Encoding
--------
An n-qubit Pauli is stored as ``i**lam * X^x * Z^z`` where ``x`` and ``z``
are length-n bit vectors and ``lam`` is an exact phase exponent in Z_4.
Qubit q contributes ``X^x[q] Z^z[q]`` on tensor factor q (factor 0 is the
leftmost, i.e. most significant, slot of the tensor product). In this
encoding ``Y = i * X Z`` has ``lam = 1``.

Products compose as

    (i^a X^x1 Z^z1)(i^b X^x2 Z^z2) = i^(a+b+2*(z1.x2)) X^(x1+x2) Z^(z1+z2)

with all bit arithmetic mod 2, so phases are tracked exactly; no floating
point is involved anywhere in this module. Two Paulis commute iff their
symplectic product ``x1.z2 + z1.x2`` vanishes mod 2.

An operator is Hermitian iff ``lam = x.z (mod 2)``; Hermitian Paulis square
to +I, which is what makes phase bookkeeping through row elimination exact:
group elements are Hermitian products of Hermitian commuting generators.

Text format
-----------
``"<phase> <letter><qubit> ..."`` with phase one of ``+1 -1 +i -i`` and
letters X/Y/Z, e.g. ``"+1 X3 Z7"``. The identity is the bare phase token.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import gf2

PHASE_TOKENS = {"+1": 0, "+i": 1, "-1": 2, "-i": 3}
PHASE_VALUES = {0: 1.0 + 0j, 1: 1j, 2: -1.0 + 0j, 3: -1j}
_TOKEN_OF = {v: k for k, v in PHASE_TOKENS.items()}
_LETTER_BITS = {"X": (1, 0, 0), "Y": (1, 1, 1), "Z": (0, 1, 0)}


def _bits(a, n) -> np.ndarray:
    out = gf2.as_gf2(a)
    if out.shape != (n,):
        raise ValueError(f"expected {n} bits, got shape {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PauliOperator:
    """Immutable Pauli with exact phase, ``i**phase_power * X^x * Z^z``."""

    x_bits: np.ndarray
    z_bits: np.ndarray
    phase_power: int = 0

    def __post_init__(self):
        n = np.asarray(self.x_bits).shape[0]
        object.__setattr__(self, "x_bits", _bits(self.x_bits, n))
        object.__setattr__(self, "z_bits", _bits(self.z_bits, n))
        object.__setattr__(self, "phase_power", int(self.phase_power) % 4)

    # -- constructors ------------------------------------------------------

    @classmethod
    def identity(cls, n: int) -> "PauliOperator":
        return cls(np.zeros(n, np.uint8), np.zeros(n, np.uint8), 0)

    @classmethod
    def from_text(cls, text: str, n_qubits: int) -> "PauliOperator":
        """Parse the ``"+1 X3 Z7"`` format; see the module docstring."""
        parts = text.split()
        if not parts or parts[0] not in PHASE_TOKENS:
            raise ValueError(f"Pauli text must start with a phase token: {text!r}")
        lam = PHASE_TOKENS[parts[0]]
        x = np.zeros(n_qubits, np.uint8)
        z = np.zeros(n_qubits, np.uint8)
        for tok in parts[1:]:
            letter, idx = tok[0].upper(), tok[1:]
            if letter not in _LETTER_BITS or not idx.isdigit():
                raise ValueError(f"bad Pauli term {tok!r} in {text!r}")
            q = int(idx)
            if q >= n_qubits:
                raise ValueError(f"qubit {q} out of range (n={n_qubits})")
            if x[q] or z[q]:
                raise ValueError(f"qubit {q} named twice in {text!r}")
            xb, zb, extra = _LETTER_BITS[letter]
            x[q], z[q] = xb, zb
            lam = (lam + extra) % 4
        return cls(x, z, lam)

    @classmethod
    def from_letters(cls, letters: str, phase_power: int = 0):
        """Build from a letter string like ``"IXZY"``, one letter per qubit."""
        n = len(letters)
        x = np.zeros(n, np.uint8)
        z = np.zeros(n, np.uint8)
        lam = phase_power
        for q, letter in enumerate(letters):
            if letter == "I":
                continue
            xb, zb, extra = _LETTER_BITS[letter]
            x[q], z[q] = xb, zb
            lam += extra
        return cls(x, z, lam)

    # -- views -------------------------------------------------------------

    @property
    def n_qubits(self) -> int:
        return self.x_bits.shape[0]

    @property
    def phase(self) -> complex:
        return PHASE_VALUES[self.phase_power]

    @property
    def weight(self) -> int:
        return int((self.x_bits | self.z_bits).sum())

    @property
    def support(self) -> tuple:
        """Sorted qubit indices the operator acts on nontrivially."""
        return tuple(int(q) for q in np.nonzero(self.x_bits | self.z_bits)[0])

    @property
    def is_identity(self) -> bool:
        return self.weight == 0 and self.phase_power == 0

    @property
    def is_hermitian(self) -> bool:
        return (self.phase_power - int((self.x_bits & self.z_bits).sum())) % 2 == 0

    def supported_on(self, region) -> bool:
        mask = np.zeros(self.n_qubits, bool)
        mask[np.asarray(list(region), dtype=np.intp)] = True
        return bool(((self.x_bits | self.z_bits).astype(bool) <= mask).all())

    # -- algebra -----------------------------------------------------------

    def adjoint(self) -> "PauliOperator":
        cross = int((self.x_bits & self.z_bits).sum())
        return PauliOperator(self.x_bits, self.z_bits, -self.phase_power + 2 * cross)

    def with_phase_power(self, lam: int) -> "PauliOperator":
        return PauliOperator(self.x_bits, self.z_bits, lam)

    def permuted(self, perm) -> "PauliOperator":
        """Relabel qubits; ``perm[old] = new``."""
        perm = np.asarray(perm, dtype=np.intp)
        x = np.zeros_like(self.x_bits)
        z = np.zeros_like(self.z_bits)
        x[perm] = self.x_bits
        z[perm] = self.z_bits
        return PauliOperator(x, z, self.phase_power)

    def embedded(self, qubits, n: int) -> "PauliOperator":
        """Place this operator on the listed qubits of an n-qubit register."""
        qubits = np.asarray(list(qubits), dtype=np.intp)
        if qubits.size != self.n_qubits:
            raise ValueError("qubit list length must match the operator")
        x = np.zeros(n, np.uint8)
        z = np.zeros(n, np.uint8)
        x[qubits] = self.x_bits
        z[qubits] = self.z_bits
        return PauliOperator(x, z, self.phase_power)

    def to_text(self) -> str:
        y = self.x_bits & self.z_bits
        token = _TOKEN_OF[(self.phase_power - int(y.sum())) % 4]
        terms = []
        for q in self.support:
            letter = "Y" if y[q] else ("X" if self.x_bits[q] else "Z")
            terms.append(f"{letter}{q}")
        return " ".join([token] + terms)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PauliOperator)
            and self.phase_power == other.phase_power
            and np.array_equal(self.x_bits, other.x_bits)
            and np.array_equal(self.z_bits, other.z_bits)
        )

    def __hash__(self):
        return hash((self.phase_power, self.x_bits.tobytes(), self.z_bits.tobytes()))

    def __repr__(self):
        return f"PauliOperator({self.to_text()!r}, n={self.n_qubits})"


def multiply(p: PauliOperator, q: PauliOperator) -> PauliOperator:
    """Exact product ``p q``, phase included."""
    if p.n_qubits != q.n_qubits:
        raise ValueError("qubit count mismatch")
    cross = int((p.z_bits & q.x_bits).sum()) & 1
    lam = (p.phase_power + q.phase_power + 2 * cross) % 4
    return PauliOperator(p.x_bits ^ q.x_bits, p.z_bits ^ q.z_bits, lam)


def symplectic_product(p: PauliOperator, q: PauliOperator) -> int:
    """``x_p.z_q + z_p.x_q`` mod 2; zero iff the operators commute."""
    return int(((p.x_bits & q.z_bits).sum() + (p.z_bits & q.x_bits).sum()) & 1)


def commutes(p: PauliOperator, q: PauliOperator) -> bool:
    return symplectic_product(p, q) == 0


# -- phase-tracked row elimination ----------------------------------------
#
# Rows live in a (m, 2n) bit table B = [X | Z] with a parallel Z_4 phase
# vector. Adding row j into row i means replacing element i by the group
# product (element i) * (element j); the phase picks up 2 * (z_i . x_j).
# All rows in play commute pairwise, so products are order-independent.


def _rowmul_into(B, lam, rows, j, n):
    cross = (B[rows, n:] & B[j, :n]).sum(axis=1) & 1
    lam[rows] = (lam[rows] + lam[j] + 2 * cross) % 4
    B[rows] ^= B[j]


def _phased_rref(B, lam):
    """Full RREF of the phased row table; returns (B, lam, pivots) copies."""
    B = B.copy()
    lam = lam.astype(np.int64).copy()
    m, twon = B.shape
    n = twon // 2
    pivots = []
    row = 0
    for col in range(twon):
        if row == m:
            break
        hot = np.nonzero(B[row:, col])[0]
        if hot.size == 0:
            continue
        piv = row + int(hot[0])
        if piv != row:
            B[[row, piv]] = B[[piv, row]]
            lam[[row, piv]] = lam[[piv, row]]
        others = np.nonzero(B[:, col])[0]
        others = others[others != row]
        if others.size:
            _rowmul_into(B, lam, others, row, n)
        pivots.append(col)
        row += 1
    return B, lam, pivots


def _combine(X, Z, lam, select) -> PauliOperator:
    """Exact product of the selected commuting rows, ascending index order."""
    sel = np.nonzero(select)[0]
    n = X.shape[1]
    if sel.size == 0:
        return PauliOperator.identity(n)
    xs = X[sel]
    zs = Z[sel]
    cross_mat = (zs.astype(np.int64) @ xs.astype(np.int64).T)
    cross = int(np.triu(cross_mat, 1).sum()) & 1
    phase = (int(lam[sel].sum()) + 2 * cross) % 4
    return PauliOperator(
        np.bitwise_xor.reduce(xs, axis=0), np.bitwise_xor.reduce(zs, axis=0), phase
    )


class StabilizerGroup:
    """A group generated by commuting Hermitian Paulis, with -I excluded.

    The declared generating set is remembered as given (several operations
    are sensitive to the presentation, not just the abstract group).
    """

    def __init__(self, generators: Sequence[PauliOperator], n_qubits=None, validate=True):
        gens = list(generators)
        if n_qubits is None:
            if not gens:
                raise ValueError("need n_qubits for an empty generating set")
            n_qubits = gens[0].n_qubits
        self.n_qubits = int(n_qubits)
        for g in gens:
            if g.n_qubits != self.n_qubits:
                raise ValueError("generator qubit count mismatch")
        m = len(gens)
        self._X = np.zeros((m, self.n_qubits), np.uint8)
        self._Z = np.zeros((m, self.n_qubits), np.uint8)
        self._lam = np.zeros(m, np.int64)
        for i, g in enumerate(gens):
            self._X[i] = g.x_bits
            self._Z[i] = g.z_bits
            self._lam[i] = g.phase_power
        self._rref_cache = None
        if validate:
            self.validate()

    # -- basic views -------------------------------------------------------

    @property
    def n_generators(self) -> int:
        return self._X.shape[0]

    def generator(self, i: int) -> PauliOperator:
        return PauliOperator(self._X[i], self._Z[i], int(self._lam[i]))

    @property
    def generators(self):
        return [self.generator(i) for i in range(self.n_generators)]

    def __iter__(self):
        return iter(self.generators)

    def __len__(self):
        return self.n_generators

    @property
    def bit_table(self) -> np.ndarray:
        """(m, 2n) generator bit table [X | Z] (copy)."""
        return np.hstack([self._X, self._Z])

    def rank(self) -> int:
        """Number of independent generators (log2 of the group order)."""
        return len(self._rref()[2])

    # -- validation --------------------------------------------------------

    def validate(self):
        """Check pairwise commutation, Hermitian generators, and no -I."""
        X, Z = self._X.astype(np.int64), self._Z.astype(np.int64)
        sym = (X @ Z.T + Z @ X.T) & 1
        bad = np.argwhere(np.triu(sym, 1))
        if bad.size:
            i, j = bad[0]
            raise ValueError(f"generators {i} and {j} anticommute")
        herm = (self._lam - (self._X & self._Z).sum(axis=1)) % 2
        if herm.any():
            raise ValueError(f"generator {int(np.nonzero(herm)[0][0])} is not Hermitian")
        # Every GF(2) dependency among generators must multiply to +I, else
        # -I is in the group. Checking a kernel basis suffices: Hermitian
        # elements square to +I, so phase is a homomorphism on the kernel.
        B = self.bit_table
        for e in gf2.nullspace(B.T):
            prod = _combine(self._X, self._Z, self._lam, e)
            if prod.phase_power != 0:
                raise ValueError("the group contains -I")

    # -- internals ---------------------------------------------------------

    def _rref(self):
        if self._rref_cache is None:
            self._rref_cache = _phased_rref(self.bit_table, self._lam)
        return self._rref_cache


def contains(group: StabilizerGroup, p: PauliOperator, ignore_phase: bool = False) -> bool:
    """Exact membership of ``p`` in the group (phase-aware by default).

    With ``ignore_phase`` the test is on the bit part only, i.e. membership
    up to a scalar.
    """
    if p.n_qubits != group.n_qubits:
        raise ValueError("qubit count mismatch")
    B, lam, pivots = group._rref()
    n = group.n_qubits
    t = np.concatenate([p.x_bits, p.z_bits]).copy()
    acc_z = np.zeros(n, np.uint8)
    acc_lam = 0
    for i, col in enumerate(pivots):
        if t[col]:
            cross = int((acc_z & B[i, :n]).sum()) & 1
            acc_lam = (acc_lam + int(lam[i]) + 2 * cross) % 4
            acc_z ^= B[i, n:]
            t ^= B[i]
    if t.any():
        return False
    return ignore_phase or acc_lam == p.phase_power


def group_leq(sub: StabilizerGroup, sup: StabilizerGroup, ignore_phase: bool = False) -> bool:
    """Whether every generator of ``sub`` lies in ``sup``."""
    return all(contains(sup, g, ignore_phase=ignore_phase) for g in sub)


def generated_subgroup(group: StabilizerGroup, region) -> StabilizerGroup:
    """Subgroup generated by the declared generators supported inside ``region``.

    This depends on the presentation of the group, by design: a different
    generating set for the same group gives a different answer.
    """
    region = sorted(int(q) for q in region)
    gens = [g for g in group if g.supported_on(region)]
    return StabilizerGroup(gens, n_qubits=group.n_qubits, validate=False)


def supported_subgroup(group: StabilizerGroup, region) -> StabilizerGroup:
    """All group elements supported inside ``region``, as a generated group.

    An element is a product of generators; its support lies in the region
    iff the product's bits vanish on every outside qubit. Those exponent
    vectors form the kernel of the outside-restricted generator matrix, and
    a kernel basis maps to a generating set of the subgroup (phases exact).
    """
    region = set(int(q) for q in region)
    outside = np.asarray(
        [q for q in range(group.n_qubits) if q not in region], dtype=np.intp
    )
    if outside.size == 0:
        return StabilizerGroup(group.generators, n_qubits=group.n_qubits, validate=False)
    M_out = np.hstack([group._X[:, outside], group._Z[:, outside]])
    kernel = gf2.nullspace(M_out.T)
    gens = []
    for e in kernel:
        prod = _combine(group._X, group._Z, group._lam, e)
        if prod.weight:
            gens.append(prod)
    return StabilizerGroup(gens, n_qubits=group.n_qubits, validate=False)


def _letter_patterns(w: int):
    """All 3^w assignments of X/Y/Z to w slots, as (3^w, w) x/z bit arrays."""
    grids = np.indices((3,) * w).reshape(w, -1).T
    xbits = (grids != 2).astype(np.uint8)
    zbits = (grids != 0).astype(np.uint8)
    return xbits, zbits


def minimum_distance(group: StabilizerGroup, weight_cutoff: int, jobs: int = 1,
                     return_witness: bool = False):
    """Smallest weight <= cutoff of a Pauli in the centralizer but not the group.

    Exhaustive over supports of weight up to ``weight_cutoff`` and all X/Y/Z
    letter patterns; membership is tested with phases ignored. Returns the
    weight (with a witness if requested), or ``None`` when every such Pauli
    of weight <= cutoff is in the group ("greater than cutoff").

    ``jobs`` chunks the support scan across threads; results are reduced in
    deterministic order, so the reported witness does not depend on ``jobs``.
    """
    from concurrent.futures import ThreadPoolExecutor
    from itertools import combinations

    n = group.n_qubits
    Xg = group._X.astype(np.int64)
    Zg = group._Z.astype(np.int64)

    def scan_support(sup):
        sup = np.asarray(sup, dtype=np.intp)
        w = sup.size
        px, pz = _letter_patterns(w)
        # Commutation with every generator, restricted to the support columns.
        sym = (px @ Zg[:, sup].T + pz @ Xg[:, sup].T) & 1
        ok = np.nonzero(~sym.any(axis=1))[0]
        for k in ok:
            x = np.zeros(n, np.uint8)
            z = np.zeros(n, np.uint8)
            x[sup] = px[k]
            z[sup] = pz[k]
            y = int((x & z).sum())
            cand = PauliOperator(x, z, y)  # Hermitian representative
            if not contains(group, cand, ignore_phase=True):
                return cand
        return None

    for w in range(1, weight_cutoff + 1):
        supports = list(combinations(range(n), w))
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(scan_support, supports))
        else:
            results = map(scan_support, supports)
        for cand in results:
            if cand is not None:
                return (w, cand) if return_witness else w
    return (None, None) if return_witness else None
