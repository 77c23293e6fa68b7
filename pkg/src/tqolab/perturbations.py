"""Perturbation inputs as data: entry lists, decay claims, random draws.

A :class:`PerturbationSpec` is the file format the command-line tools pass
around. It records a list of (square, operator) entries together with the
decay envelope the input claims to satisfy, and the claim is re-verified
every time a spec is loaded, so a report downstream can cite the class of
its input without trusting the producer.

Entries come in two shapes:

* a Pauli sum: ``[[coeff, "+1 X0 Z1"], ...]`` with qubit indices local to
  the square's register (``lattice.region_qubits(square)``, ascending);
* a dense Hermitian block stored in a sidecar ``.npy`` file, acting on an
  explicit subset of the square's qubits.

:func:`random_perturbation` draws reproducible random inputs whose term
norms sit exactly on the claimed envelope boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dense import operator_norm, pauli_matrix, random_hermitian, apply_block
from .decompositions import DecayClass, LocalDecomposition
from .lattice import Lattice, Square
from .pauli import PauliOperator

HERMITICITY_TOL = 1e-12


def _entry_block_from_pauli(pauli_sum, register_size: int):
    """Assemble a Pauli-sum entry into a dense block on its joint support.

    Qubits outside the joint support carry the identity in every term, so
    the block is built only on the supported local positions. Returns the
    block and the supported positions (indices into the square register).
    """
    parsed = []
    support = set()
    for coeff, text in pauli_sum:
        p = PauliOperator.from_text(text, register_size)
        parsed.append((complex(coeff), p))
        support.update(int(q) for q in p.support)
    if not support:
        raise ValueError("Pauli-sum entry has empty support; drop the entry "
                         "or fold the constant into the scalar offset")
    positions = sorted(support)
    k = len(positions)
    block = np.zeros((1 << k, 1 << k), dtype=np.complex128)
    for coeff, p in parsed:
        # identity positions only contribute kron factors of I, so the
        # matrix restricts exactly by slicing the bit arrays
        sub = PauliOperator(p.x_bits[positions], p.z_bits[positions],
                            p.phase_power)
        block += coeff * pauli_matrix(sub)
    drift = operator_norm(block - block.conj().T)
    if drift > HERMITICITY_TOL * max(1.0, operator_norm(block)):
        raise ValueError("Pauli-sum entry is not Hermitian")
    return block, positions


@dataclass(eq=False)
class PerturbationEntry:
    """One term: a Hermitian block on named qubits inside a declared square.

    ``pauli_sum`` keeps the textual form an entry was built from (if any)
    so round-trips stay human-readable; ``block_file`` records the sidecar
    file a dense entry was read from or written to.
    """

    square: tuple
    qubits: tuple
    block: np.ndarray
    pauli_sum: tuple | None = None
    block_file: str | None = None

    def __post_init__(self):
        self.square = tuple(int(v) for v in self.square)
        if len(self.square) != 3:
            raise ValueError("entry square must be (x, y, r)")
        self.qubits = tuple(int(q) for q in self.qubits)
        if list(self.qubits) != sorted(set(self.qubits)):
            raise ValueError("entry qubits must be strictly increasing")
        self.block = np.asarray(self.block, dtype=np.complex128)
        dim = 1 << len(self.qubits)
        if self.block.shape != (dim, dim):
            raise ValueError(
                f"entry block shape {self.block.shape} does not match "
                f"{len(self.qubits)} qubits")

    @property
    def size(self) -> int:
        return self.square[2]

    @property
    def norm(self) -> float:
        return operator_norm(self.block)

    def __eq__(self, other):
        if not isinstance(other, PerturbationEntry):
            return NotImplemented
        return (self.square == other.square and self.qubits == other.qubits
                and np.array_equal(self.block, other.block))


@dataclass(eq=False)
class PerturbationSpec:
    """A serializable list of local Hermitian terms with a decay claim.

    ``strength``, ``mu`` and ``alpha`` declare the envelope
    ``norm <= strength * r**(-alpha) * exp(-mu * r)`` on every entry whose
    square has size r. :meth:`load` and :meth:`from_dict` re-verify the
    claim and refuse specs that break it.
    """

    lattice_size: int
    layout: str
    strength: float
    mu: float
    alpha: float = 0.0
    entries: tuple = ()
    seed: int | None = None

    def __post_init__(self):
        self.lattice_size = int(self.lattice_size)
        if self.layout not in ("edges", "sites"):
            raise ValueError(f"unknown layout {self.layout!r}")
        self.strength = float(self.strength)
        self.mu = float(self.mu)
        self.alpha = float(self.alpha)
        if self.strength < 0.0:
            raise ValueError("strength must be >= 0")
        if self.mu <= 0.0:
            raise ValueError("decay rate mu must be > 0")
        self.entries = tuple(self.entries)
        lat = self.lattice
        for e in self.entries:
            x, y, r = e.square
            allowed = set(lat.region_qubits(Square(x, y, r, lat.L)))
            if not set(e.qubits) <= allowed:
                raise ValueError(
                    f"entry qubits {e.qubits} leave the declared square "
                    f"({x}, {y}, {r})")

    @property
    def lattice(self) -> Lattice:
        return Lattice(self.lattice_size, layout=self.layout)

    @property
    def decay_class(self) -> DecayClass:
        return DecayClass(self.strength, self.mu, self.alpha)

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        if not isinstance(other, PerturbationSpec):
            return NotImplemented
        return (self.lattice_size == other.lattice_size
                and self.layout == other.layout
                and self.strength == other.strength
                and self.mu == other.mu and self.alpha == other.alpha
                and self.entries == other.entries)

    # -- class verification --------------------------------------------

    def offenders(self, tol: float = 1e-9) -> list:
        """Entries whose norm breaks the claimed envelope."""
        decay = self.decay_class
        out = []
        for e in self.entries:
            norm = e.norm
            if not decay.allows(e.size, norm, tol):
                out.append({"square": list(e.square), "size": e.size,
                            "norm": norm,
                            "bound": decay.term_bound(e.size)})
        return out

    def verify(self, tol: float = 1e-9):
        """Raise with the offender list if the claim fails; else no-op."""
        bad = self.offenders(tol)
        if bad:
            parts = ", ".join(
                f"square ({b['square'][0]}, {b['square'][1]}, "
                f"{b['square'][2]}): norm {b['norm']:.6g} > bound "
                f"{b['bound']:.6g}" for b in bad)
            raise ValueError(
                f"perturbation breaks its claimed decay class "
                f"(J={self.strength:g}, mu={self.mu:g}, "
                f"alpha={self.alpha:g}): {parts}")

    # -- conversions -----------------------------------------------------

    def to_decomposition(self, model=None) -> LocalDecomposition:
        """Local decomposition carrying the claimed class.

        ``model`` (or a :class:`Lattice`) must match the spec's geometry;
        by default the spec's own lattice is used.
        """
        lat = self.lattice
        if model is not None:
            other = model if isinstance(model, Lattice) else model.lattice
            if other.L != lat.L or other.layout != lat.layout:
                raise ValueError(
                    f"spec geometry (L={lat.L}, {lat.layout}) does not "
                    f"match the model (L={other.L}, {other.layout})")
            lat = other
        dec = LocalDecomposition(lat, claimed=self.decay_class)
        for e in self.entries:
            x, y, r = e.square
            dec.add(Square(x, y, r, lat.L), e.block, qubits=e.qubits)
        return dec

    def applier(self, scale: float = 1.0) -> "BlockApplier":
        """Matrix-free ``apply(psi)`` object for the full-lattice register."""
        return BlockApplier(self.entries, scale)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        """JSON-ready form; dense entries must have a block file assigned
        (see :meth:`save`)."""
        rows = []
        for i, e in enumerate(self.entries):
            row = {"square": list(e.square), "qubits": list(e.qubits)}
            if e.pauli_sum is not None:
                row["pauli_sum"] = [[float(c), t] for c, t in e.pauli_sum]
            elif e.block_file is not None:
                row["block_file"] = e.block_file
            else:
                raise ValueError(
                    f"entry {i} holds a dense block with no file name; "
                    f"use save() to write it")
            rows.append(row)
        out = {"lattice": {"L": self.lattice_size, "layout": self.layout},
               "strength": self.strength, "mu": self.mu,
               "alpha": self.alpha, "entries": rows}
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    @classmethod
    def from_dict(cls, data: dict, base_dir=None,
                  tol: float = 1e-9) -> "PerturbationSpec":
        """Build and verify a spec from its JSON form.

        ``base_dir`` resolves relative ``block_file`` references. The
        claimed decay class is checked; a spec that breaks it is refused.
        """
        try:
            lat_info = data["lattice"]
            size = int(lat_info["L"])
            layout = str(lat_info["layout"])
            strength = float(data["strength"])
            mu = float(data["mu"])
            alpha = float(data.get("alpha", 0.0))
            rows = data["entries"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"perturbation spec missing field: {exc}")
        lat = Lattice(size, layout=layout)
        base = Path(base_dir) if base_dir is not None else Path(".")
        entries = []
        for i, row in enumerate(rows):
            square = tuple(int(v) for v in row["square"])
            x, y, r = square
            register = lat.region_qubits(Square(x, y, r, lat.L))
            if "pauli_sum" in row:
                terms = tuple((float(c), str(t)) for c, t in row["pauli_sum"])
                block, positions = _entry_block_from_pauli(
                    terms, len(register))
                qubits = tuple(register[p] for p in positions)
                entries.append(PerturbationEntry(square, qubits, block,
                                                 pauli_sum=terms))
            elif "block_file" in row:
                ref = str(row["block_file"])
                path = base / ref
                if not path.exists():
                    raise ValueError(
                        f"entry {i}: block file {ref!r} not found under "
                        f"{base}")
                block = np.load(path)
                qubits = tuple(int(q) for q in
                               row.get("qubits", register))
                drift = operator_norm(block - block.conj().T)
                if drift > HERMITICITY_TOL * max(1.0, operator_norm(block)):
                    raise ValueError(f"entry {i}: block in {ref!r} is not "
                                     f"Hermitian")
                entries.append(PerturbationEntry(square, qubits, block,
                                                 block_file=ref))
            else:
                raise ValueError(
                    f"entry {i} needs either 'pauli_sum' or 'block_file'")
        seed = data.get("seed")
        spec = cls(size, layout, strength, mu, alpha, tuple(entries),
                   seed=None if seed is None else int(seed))
        spec.verify(tol)
        return spec

    def save(self, path) -> Path:
        """Write the spec as JSON, with dense blocks in sidecar .npy files.

        Sidecar names derive from the JSON stem and the entry index, so a
        re-save of the same spec produces byte-identical artifacts.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        for i, e in enumerate(self.entries):
            if e.pauli_sum is not None:
                continue
            name = f"{path.stem}-block{i:03d}.npy"
            np.save(path.parent / name, e.block)
            e.block_file = name
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        path.write_text(text + "\n")
        return path

    @classmethod
    def load(cls, path, tol: float = 1e-9) -> "PerturbationSpec":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"perturbation file {path} is not valid JSON: "
                             f"{exc}")
        return cls.from_dict(data, base_dir=path.parent, tol=tol)


class BlockApplier:
    """Matrix-free sum of embedded blocks, for the full-lattice register."""

    def __init__(self, entries, scale: float = 1.0):
        self.entries = tuple(entries)
        self.scale = float(scale)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(np.asarray(psi, dtype=complex))
        for e in self.entries:
            out += apply_block(e.block, e.qubits, psi)
        return self.scale * out


def _spread_choice(items, count: int) -> tuple:
    """Up to ``count`` picks spread evenly across a sorted list."""
    if len(items) <= count:
        return tuple(items)
    idx = np.round(np.linspace(0, len(items) - 1, count)).astype(int)
    return tuple(items[i] for i in sorted(set(int(i) for i in idx)))


def random_perturbation(model, seed: int, locality: int, strength: float,
                        mu: float, max_block_qubits: int = 3
                        ) -> PerturbationSpec:
    """Seeded random spec with one term per square of each size <= locality.

    Every term is a Hermitized Gaussian-ensemble block rescaled so its
    operator norm equals ``strength * exp(-mu * r)`` exactly on an r-sized
    square; the generated spec therefore sits on the boundary of the
    (strength, mu, 0) class. Blocks act on at most ``max_block_qubits``
    qubits chosen deterministically from the square's register (restricted
    to qubits the model actually uses), which keeps block dimensions small
    without loosening the norm contract. The same seed always reproduces
    the same spec; ``strength = 0`` gives an empty one.
    """
    lat = model.lattice
    locality = int(locality)
    if locality < 1:
        raise ValueError("locality must be >= 1")
    if locality > lat.L:
        raise ValueError(f"locality {locality} exceeds the lattice size "
                         f"{lat.L}")
    if max_block_qubits < 1:
        raise ValueError("max_block_qubits must be >= 1")
    strength = float(strength)
    if strength < 0.0:
        raise ValueError("strength must be >= 0")
    active = set()
    for g in model.generators:
        active.update(int(q) for q in g.support)
    entries = []
    if strength > 0.0:
        rng = np.random.default_rng(seed)
        for r in range(1, locality + 1):
            target = strength * math.exp(-mu * r)
            for sq in lat.squares(r):
                register = [q for q in lat.region_qubits(sq) if q in active]
                if not register:
                    continue
                qubits = _spread_choice(register, max_block_qubits)
                dim = 1 << len(qubits)
                block = random_hermitian(dim, rng, norm=target)
                entries.append(PerturbationEntry(
                    (sq.x, sq.y, sq.r), qubits, block))
    spec = PerturbationSpec(lat.L, lat.layout, strength, mu, 0.0,
                            tuple(entries), seed=int(seed))
    spec.verify()
    return spec
