"""Commuting-projector stabilizer models on the periodic lattice.

A model is a lattice together with a list of stabilizer generators, each
assigned to a square region. The assigned squares organize the Hamiltonian

    H0 = sum over assigned squares A of G_A,
    G_A = sum over generators a assigned to A of (I - S_a) / 2.

Each (I - S)/2 is a projector, the terms all commute, and eigenvalues of
G_A are nonnegative integers, so G_A >= 0 and G_A^2 >= G_A hold by
construction.

Generators whose support fits a 2x2 square are assigned to the
lexicographically first covering 2x2 square. Generators needing a larger
region (the paired-plaquette generators of the unstable toric code span
three columns of sites) are assigned to the lexicographically first
covering square of the minimal sufficient size.

Model text format: a header line ``lattice L=<int> layout=<edges|sites>``
followed by one generator per line in the Pauli text format, optionally
suffixed with an explicit assignment ``@square (x,y,r)``. Lines starting
with ``#`` and blank lines are ignored.
"""

import re

import numpy as np

from . import gf2
from .dense import check_dense, check_matfree, pauli_apply, pauli_matrix
from .lattice import Lattice, Square
from .pauli import PauliOperator, StabilizerGroup, multiply

HEADER_RE = re.compile(r"^lattice\s+L=(\d+)\s+layout=(edges|sites)\s*$")
ASSIGN_RE = re.compile(r"@square\s*\((\d+)\s*,\s*(\d+)\s*,\s*(\d+)\)\s*$")


class Model:
    """Immutable stabilizer model with a generator-to-square assignment."""

    def __init__(self, lattice: Lattice, generators, assignments=None,
                 name: str = "", meta: dict = None):
        self.lattice = lattice
        gens = list(generators)
        for g in gens:
            if g.n_qubits != lattice.n_qubits:
                raise ValueError(
                    f"generator acts on {g.n_qubits} qubits, lattice has "
                    f"{lattice.n_qubits}")
        # validates commutation, hermiticity, and absence of -I
        self.group = StabilizerGroup(gens, n_qubits=lattice.n_qubits)
        self.name = name
        self.meta = dict(meta or {})
        if assignments is None:
            assignments = [None] * len(gens)
        resolved = []
        for g, sq in zip(gens, assignments):
            resolved.append(self._resolve_square(g, sq))
        self._assignments = tuple(resolved)
        terms = {}
        for idx, sq in enumerate(resolved):
            terms.setdefault(sq, []).append(idx)
        # fixed iteration order: sort squares by (r, x, y)
        self.terms = {sq: tuple(terms[sq]) for sq in
                      sorted(terms, key=lambda s: (s.r, s.x, s.y))}

    def _resolve_square(self, gen: PauliOperator, declared) -> Square:
        sites = {self.lattice.site_of_qubit(q) for q in gen.support}
        if not sites:
            raise ValueError("identity generators are not assignable")
        if declared is not None:
            sq = declared
            if sq.r < 2:
                raise ValueError("assigned squares must have size >= 2")
            if not sites <= sq.site_set:
                raise ValueError(
                    f"generator support {sorted(sites)} not inside "
                    f"declared square {sq}")
            return sq
        minimal = self.lattice.covering_square(sites)
        if minimal.r >= 2:
            return minimal
        return self.lattice.covering_square(sites, r=2)

    # -- views ---------------------------------------------------------------

    @property
    def generators(self) -> tuple:
        return self.group.generators

    @property
    def assignments(self) -> tuple:
        return self._assignments

    @property
    def n_qubits(self) -> int:
        return self.lattice.n_qubits

    @property
    def n_terms(self) -> int:
        return len(self.group.generators)

    def generators_on(self, square: Square) -> tuple:
        return tuple(self.group.generators[i]
                     for i in self.terms.get(square, ()))

    def max_term_size(self) -> int:
        return max(sq.r for sq in self.terms)

    # -- dense pieces ----------------------------------------------------------

    def term_matrix(self, square: Square) -> np.ndarray:
        """Dense G_A for one assigned square."""
        check_dense(2 ** self.n_qubits)
        dim = 2 ** self.n_qubits
        out = np.zeros((dim, dim), dtype=complex)
        eye = np.eye(dim)
        for g in self.generators_on(square):
            out += (eye - pauli_matrix(g)) / 2
        return out


def parse_model(text: str, name: str = "") -> Model:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty model text")
    m = HEADER_RE.match(lines[0])
    if not m:
        raise ValueError(f"bad model header: {lines[0]!r}")
    lattice = Lattice(int(m.group(1)), layout=m.group(2))
    if len(lines) == 1:
        raise ValueError("model file has no generator lines")
    gens, assigns = [], []
    for ln in lines[1:]:
        declared = None
        am = ASSIGN_RE.search(ln)
        if am:
            declared = Square(int(am.group(1)), int(am.group(2)),
                              int(am.group(3)), lattice.L)
            ln = ln[:am.start()].strip()
        gens.append(PauliOperator.from_text(ln, n_qubits=lattice.n_qubits))
        assigns.append(declared)
    return Model(lattice, gens, assigns, name=name)


def format_model(model: Model) -> str:
    out = [f"lattice L={model.lattice.L} layout={model.lattice.layout}"]
    for g, sq in zip(model.generators, model.assignments):
        out.append(f"{g.to_text()} @square ({sq.x},{sq.y},{sq.r})")
    return "\n".join(out) + "\n"


def load_model(source: str) -> Model:
    """Load from a ``--builtin`` style name (``toric:<L>``,
    ``unstable-toric:<L>``, ``ising-chain:<n>``) or a model file path."""
    m = re.match(r"^(toric|unstable-toric|ising-chain):(\d+)$", source)
    if m:
        kind, size = m.group(1), int(m.group(2))
        if kind == "toric":
            return build_toric_code(size)
        if kind == "unstable-toric":
            return build_unstable_toric_code(size)
        return build_ising_chain(size)
    with open(source) as fh:
        return parse_model(fh.read(), name=source)


# -- built-in models ---------------------------------------------------------


def _plaquette(lat: Lattice, x: int, y: int) -> PauliOperator:
    edges = [lat.qubit_index(x, y, 0), lat.qubit_index(x, y + 1, 0),
             lat.qubit_index(x, y, 1), lat.qubit_index(x + 1, y, 1)]
    z = np.zeros(lat.n_qubits, np.uint8)
    z[edges] = 1
    return PauliOperator(np.zeros(lat.n_qubits, np.uint8), z, 0)


def _star(lat: Lattice, x: int, y: int) -> PauliOperator:
    edges = [lat.qubit_index(x, y, 0), lat.qubit_index(x - 1, y, 0),
             lat.qubit_index(x, y, 1), lat.qubit_index(x, y - 1, 1)]
    xb = np.zeros(lat.n_qubits, np.uint8)
    xb[edges] = 1
    return PauliOperator(xb, np.zeros(lat.n_qubits, np.uint8), 0)


def toric_plaquettes(lat: Lattice) -> dict:
    return {(x, y): _plaquette(lat, x, y)
            for x in range(lat.L) for y in range(lat.L)}


def toric_stars(lat: Lattice) -> dict:
    return {(x, y): _star(lat, x, y)
            for x in range(lat.L) for y in range(lat.L)}


def build_toric_code(L: int) -> Model:
    """Plaquette and star generators on 2 L^2 edge qubits."""
    if L < 2:
        raise ValueError("toric code needs L >= 2")
    lat = Lattice(L, layout="edges")
    plaq = toric_plaquettes(lat)
    star = toric_stars(lat)
    gens = [plaq[k] for k in sorted(plaq)] + [star[k] for k in sorted(star)]
    meta = {"plaquettes": plaq, "stars": star, "kind": "toric"}
    return Model(lat, gens, name=f"toric:{L}", meta=meta)


def build_unstable_toric_code(L: int, pstar=(0, 0)) -> Model:
    """Adjacent-plaquette pair products, stars, and one bare plaquette.

    Generates the same group as the toric code but in a presentation whose
    plaquette sector is only pinned globally through the single bare
    plaquette at ``pstar``. Requires an even number of plaquettes.
    """
    if L < 2:
        raise ValueError("needs L >= 2")
    if (L * L) % 2:
        raise ValueError(f"plaquette count L^2 = {L * L} must be even")
    lat = Lattice(L, layout="edges")
    plaq = toric_plaquettes(lat)
    star = toric_stars(lat)
    pairs = set()
    for x in range(L):
        for y in range(L):
            for q in (((x + 1) % L, y), (x, (y + 1) % L)):
                key = frozenset(((x, y), q))
                if len(key) == 2:
                    pairs.add(key)
    gens, kinds = [], []
    for key in sorted(pairs, key=sorted):
        p, q = sorted(key)
        gens.append(multiply(plaq[p], plaq[q]))
        kinds.append(("pair", p, q))
    for k in sorted(star):
        gens.append(star[k])
        kinds.append(("star", k))
    pstar = (pstar[0] % L, pstar[1] % L)
    gens.append(plaq[pstar])
    kinds.append(("bare", pstar))
    meta = {"plaquettes": plaq, "stars": star, "pstar": pstar,
            "kinds": kinds, "kind": "unstable-toric"}
    return Model(lat, gens, name=f"unstable-toric:{L}", meta=meta)


def toric_logical_pair(model: Model, column: int = 0):
    """Anticommuting pair of winding string operators for a toric model.

    Returns ``(z_string, x_string)``: a Z product over the horizontal edges
    of row 0 and an X product over the horizontal edges of the chosen
    column. They overlap on exactly one edge, so they anticommute with each
    other while commuting with every plaquette and star.
    """
    lat = model.lattice
    if lat.layout != "edges":
        raise ValueError("string pair needs an edge-layout model")
    c = column % lat.L
    zb = np.zeros(lat.n_qubits, np.uint8)
    xb = np.zeros(lat.n_qubits, np.uint8)
    for k in range(lat.L):
        zb[lat.qubit_index(k, 0, 0)] = 1
        xb[lat.qubit_index(c, k, 0)] = 1
    zeros = np.zeros(lat.n_qubits, np.uint8)
    z_string = PauliOperator(zeros, zb, 0)
    x_string = PauliOperator(xb, zeros.copy(), 0)
    return z_string, x_string


def build_ising_chain(n: int, closed: bool = True) -> Model:
    """Nearest-neighbor ZZ chain embedded as an n x 1 strip of sites.

    Uses the ``sites`` layout on an n x n lattice restricted to row 0; handy
    as a small frustration-free reference model with a classical ground
    space.
    """
    if n < 2:
        raise ValueError("chain needs n >= 2")
    lat = Lattice(n, layout="sites")
    gens = []
    count = n if closed else n - 1
    for i in range(count):
        z = np.zeros(lat.n_qubits, np.uint8)
        z[lat.site_index(i, 0)] = 1
        z[lat.site_index((i + 1) % n, 0)] = 1
        gens.append(PauliOperator(np.zeros(lat.n_qubits, np.uint8), z, 0))
    return Model(lat, gens, name=f"ising-chain:{n}",
                 meta={"kind": "ising-chain"})


# -- projectors and operators --------------------------------------------------


def local_ground_projector(model: Model, region: Square) -> np.ndarray:
    """Dense product of per-square ground projectors over assigned squares
    inside the region.

    Each generator contributes (I + S)/2; squares with no assigned
    generators contribute identity. The result is Hermitian, idempotent,
    and supported on the region.
    """
    dim = 2 ** model.n_qubits
    check_dense(dim)
    out = np.eye(dim, dtype=complex)
    eye = np.eye(dim, dtype=complex)
    for sq, idxs in model.terms.items():
        if region.contains(sq):
            for i in idxs:
                s = pauli_matrix(model.generators[i])
                out = out @ ((eye + s) / 2)
    return out


class HamiltonianOperator:
    """Matrix-free application of H0 (+ optional perturbation).

    ``convention="projector"`` applies sum of (I - S_a)/2 per generator;
    ``convention="signed"`` applies -sum of S_a. The perturbation may be a
    dense array or any object with an ``apply(psi)`` method.
    """

    def __init__(self, model: Model, perturbation=None,
                 convention: str = "projector"):
        if convention not in ("projector", "signed"):
            raise ValueError(f"unknown convention {convention!r}")
        self.model = model
        self.convention = convention
        self.dimension = 2 ** model.n_qubits
        check_matfree(self.dimension)
        if isinstance(perturbation, np.ndarray):
            mat = perturbation
            perturbation = _DenseWrapper(mat)
        self.perturbation = perturbation

    def apply(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        acc = np.zeros_like(psi)
        gens = self.model.generators
        for g in gens:
            acc += pauli_apply(g, psi)
        if self.convention == "projector":
            out = (len(gens) * psi - acc) / 2
        else:
            out = -acc
        if self.perturbation is not None:
            out = out + self.perturbation.apply(psi)
        return out

    def dense(self) -> np.ndarray:
        check_dense(self.dimension)
        return self.apply(np.eye(self.dimension, dtype=complex))

    def to_scipy(self):
        from scipy.sparse.linalg import LinearOperator
        return LinearOperator(
            (self.dimension, self.dimension),
            matvec=lambda v: self.apply(np.asarray(v).ravel()),
            dtype=complex)


class _DenseWrapper:
    def __init__(self, mat):
        self.mat = np.asarray(mat, dtype=complex)

    def apply(self, psi):
        return self.mat @ psi


def hamiltonian_operator(model: Model, perturbation=None,
                         convention: str = "projector") -> HamiltonianOperator:
    return HamiltonianOperator(model, perturbation, convention)


def plaquette_product_is_identity(model: Model) -> bool:
    """GF(2) dependency check: the product of all plaquettes is trivial."""
    plaq = model.meta.get("plaquettes")
    if not plaq:
        raise ValueError("model has no plaquette metadata")
    rows = np.array([np.concatenate([p.x_bits, p.z_bits])
                     for p in plaq.values()], dtype=np.uint8)
    total = rows.sum(axis=0) % 2
    return not total.any()
