"""Local-indistinguishability conditions for stabilizer models.

Two families of checks decide whether a model's ground space looks the same
inside every small square as it does globally.

The first condition asks that every operator supported on a small square act
as a scalar on the ground space. Symbolically this reduces to a minimum
distance question for the stabilizer group; exactly, it is checked over a
complete operator basis on the square against the dense ground projector.

The second condition compares the reduced state of the global ground space
on a square A with the reduced state of the locally-consistent space built
from the squares inside the padded region B (A grown by one site on every
side). Symbolically: every group element supported inside A must be
generated by the declared generators supported inside B. This check is
deliberately sensitive to the presentation of the group, not just the
abstract group, which is what separates the stable from the unstable
presentation of the same toric-code group.

All verdicts are parameterized by ``l_star``, the largest square size
checked. ``default_l_star`` gives the conservative default floor(L/2) - 1.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .dense import check_dense, partial_trace, pauli_apply, pauli_matrix
from .lattice import Square
from .models import Model, hamiltonian_operator, local_ground_projector
from .pauli import (
    PauliOperator,
    contains,
    generated_subgroup,
    supported_subgroup,
)

EXACT_TOL = 1e-9
SV_REL_TOL = 1e-10
ANGLE_TOL = 1e-8


def default_l_star(L: int) -> int:
    return L // 2 - 1


@dataclass
class TqoReport:
    condition: str          # "TQO1" or "TQO2"
    method: str             # "exact" or "stabilizer"
    l_star: int
    verdict: bool
    witnesses: list = field(default_factory=list)   # [(Square, str)]
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.verdict and not self.witnesses:
            raise ValueError("a failing report needs at least one witness")

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "method": self.method,
            "l_star": self.l_star,
            "verdict": "pass" if self.verdict else "fail",
            "witnesses": [{"square": str(sq), "diagnostic": diag}
                          for sq, diag in self.witnesses],
            "details": self.details,
        }


# -- ground-space helpers ------------------------------------------------------


def ground_space_basis(model: Model) -> np.ndarray:
    """Columns form an orthonormal basis of the ground space of H0."""
    dim = 2 ** model.n_qubits
    check_dense(dim)
    h = hamiltonian_operator(model).dense()
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    expect = 2 ** (model.n_qubits - model.group.rank())
    sel = w < 0.5  # spectrum is integer-valued for stabilizer terms
    if int(sel.sum()) != expect or w[sel].max(initial=0.0) > EXACT_TOL:
        raise RuntimeError("ground-space dimension does not match group rank")
    return v[:, sel]


def ground_projector(model: Model) -> np.ndarray:
    v = ground_space_basis(model)
    return v @ v.conj().T


# -- symbolic checks -----------------------------------------------------------


def tqo2_square_stabilizer(model: Model, square: Square):
    """Inclusion test for one square; returns (ok, diagnostic)."""
    lat = model.lattice
    inner = supported_subgroup(model.group, lat.region_qubits(square))
    outer = generated_subgroup(model.group,
                               lat.region_qubits(square.expand(1)))
    for g in inner:
        if not contains(outer, g):
            return False, (f"element {g.to_text()} supported on {square} is "
                           f"not generated inside the padded square")
    return True, ""


def _scan_squares(model: Model, l_star: int, check, jobs: int = 1):
    squares = []
    for r in range(1, l_star + 1):
        squares.extend(model.lattice.squares(r))
    if jobs > 1 and len(squares) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(check, squares))
    else:
        results = [check(sq) for sq in squares]
    witnesses = [(sq, diag) for sq, (ok, diag) in zip(squares, results)
                 if not ok]
    witnesses.sort(key=lambda w: (w[0].r, w[0].x, w[0].y))
    return witnesses, len(squares)


def check_tqo2_stabilizer(model: Model, l_star: int = None,
                          jobs: int = 1) -> TqoReport:
    """Inclusion check over every square of size 1..l_star."""
    if l_star is None:
        l_star = default_l_star(model.lattice.L)
    witnesses, n_checked = _scan_squares(
        model, l_star, lambda sq: tqo2_square_stabilizer(model, sq), jobs)
    return TqoReport("TQO2", "stabilizer", l_star, not witnesses, witnesses,
                     {"squares_checked": n_checked})


def check_tqo1_stabilizer(model: Model, l_star: int = None,
                          weight_cutoff: int = None, jobs: int = 1,
                          threshold: int = None) -> TqoReport:
    """Distance-based check: no nontrivial logical of weight <= threshold.

    ``threshold`` defaults to l_star (require distance > l_star); the search
    cutoff is the larger of threshold and ``weight_cutoff``.
    """
    from .pauli import minimum_distance

    if l_star is None:
        l_star = default_l_star(model.lattice.L)
    if threshold is None:
        threshold = l_star
    cutoff = max(threshold, weight_cutoff or 0)
    details = {"threshold": threshold, "cutoff": cutoff}
    if cutoff < 1:
        return TqoReport("TQO1", "stabilizer", l_star, True, [], details)
    d, witness = minimum_distance(model.group, cutoff, jobs=jobs,
                                  return_witness=True)
    details["distance"] = d if d is not None else f">{cutoff}"
    verdict = d is None or d > threshold
    witnesses = []
    if not verdict:
        sites = {model.lattice.site_of_qubit(q) for q in witness.support}
        sq = model.lattice.covering_square(sites)
        witnesses = [(sq, f"logical operator {witness.to_text()} of weight "
                          f"{d} acts inside one square")]
    return TqoReport("TQO1", "stabilizer", l_star, verdict, witnesses, details)


# -- exact checks ----------------------------------------------------------------


def _pauli_basis(qubits, n):
    """All Pauli strings supported on the given qubits (identity included)."""
    qubits = list(qubits)
    for letters in product("IXYZ", repeat=len(qubits)):
        yield PauliOperator.from_letters(
            "".join(letters), 0).embedded(qubits, n)


def check_tqo1_exact(model: Model, square: Square,
                     tol: float = EXACT_TOL) -> TqoReport:
    """Scalar-action test over a complete operator basis on the square."""
    v = ground_space_basis(model)
    k = v.shape[1]
    qubits = model.lattice.region_qubits(square)
    worst, worst_op = 0.0, None
    count = 0
    for op in _pauli_basis(qubits, model.n_qubits):
        m = v.conj().T @ pauli_apply(op, v)
        c = np.trace(m) / k
        dev = np.linalg.norm(m - c * np.eye(k), ord=2)
        count += 1
        if dev > worst:
            worst, worst_op = dev, op
    verdict = worst <= tol
    witnesses = []
    if not verdict:
        witnesses = [(square, f"operator {worst_op.to_text()} acts "
                              f"non-trivially: deviation {worst:.3e}")]
    return TqoReport("TQO1", "exact", square.r, verdict, witnesses,
                     {"max_deviation": float(worst), "basis_size": count})


def _range_basis(rho, sv_rel_tol):
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    thr = sv_rel_tol * max(float(np.abs(w).max()), 1e-300)
    sel = np.abs(w) > thr
    return v[:, sel]


def check_tqo2_exact(model: Model, square: Square,
                     sv_rel_tol: float = SV_REL_TOL,
                     angle_tol: float = ANGLE_TOL) -> TqoReport:
    """Kernel-coincidence test between the reduced global ground state and
    the reduced locally-consistent state on the padded square.

    Kernels of Hermitian matrices agree exactly when their ranges do, so the
    test compares range bases: rank equality plus the sine of the largest
    principal angle below tolerance.
    """
    dim = 2 ** model.n_qubits
    check_dense(dim)
    keep = model.lattice.region_qubits(square)
    p = ground_projector(model)
    pb = local_ground_projector(model, square.expand(1))
    rho_a = partial_trace(p, keep, model.n_qubits)
    rho_ab = partial_trace(pb, keep, model.n_qubits)
    va = _range_basis(rho_a, sv_rel_tol)
    vb = _range_basis(rho_ab, sv_rel_tol)
    details = {"rank_global": va.shape[1], "rank_local": vb.shape[1]}
    if va.shape[1] != vb.shape[1]:
        diag = (f"reduced-state ranks differ: {va.shape[1]} (global) vs "
                f"{vb.shape[1]} (local)")
        return TqoReport("TQO2", "exact", square.r, False, [(square, diag)],
                         details)
    resid = va - vb @ (vb.conj().T @ va)
    sine = float(np.linalg.norm(resid, ord=2))
    details["max_principal_angle_sine"] = sine
    if sine > angle_tol:
        diag = f"kernels tilt apart: principal-angle sine {sine:.3e}"
        return TqoReport("TQO2", "exact", square.r, False, [(square, diag)],
                         details)
    return TqoReport("TQO2", "exact", square.r, True, [], details)


def check_tqo2_exact_all(model: Model, l_star: int = None,
                         jobs: int = 1) -> TqoReport:
    """Exact kernel test over every square of size 1..l_star."""
    if l_star is None:
        l_star = default_l_star(model.lattice.L)

    def check(sq):
        rep = check_tqo2_exact(model, sq)
        diag = rep.witnesses[0][1] if rep.witnesses else ""
        return rep.verdict, diag

    witnesses, n_checked = _scan_squares(model, l_star, check, jobs)
    return TqoReport("TQO2", "exact", l_star, not witnesses, witnesses,
                     {"squares_checked": n_checked})


def check_tqo1_exact_all(model: Model, l_star: int = None,
                         jobs: int = 1) -> TqoReport:
    """Exact scalar-action test over every square of size 1..l_star."""
    if l_star is None:
        l_star = default_l_star(model.lattice.L)

    def check(sq):
        rep = check_tqo1_exact(model, sq)
        diag = rep.witnesses[0][1] if rep.witnesses else ""
        return rep.verdict, diag

    witnesses, n_checked = _scan_squares(model, l_star, check, jobs)
    return TqoReport("TQO1", "exact", l_star, not witnesses, witnesses,
                     {"squares_checked": n_checked})


# -- vanishing-overlap corollary -------------------------------------------------


@dataclass
class Tqo3Result:
    status: str          # "pass", "fail", or "precondition"
    ground_overlap: float
    local_overlap: float

    @property
    def ok(self) -> bool:
        return self.status == "pass"


def corollary_tqo3_check(model: Model, square: Square, op,
                         tol: float = EXACT_TOL) -> Tqo3Result:
    """If an operator on the square annihilates the ground space, it must
    annihilate the padded local ground space too.

    ``op`` is a dense matrix on the full register (or a PauliOperator). A
    nonzero overlap with the ground space is a precondition violation and is
    reported as such, distinct from a failure of the implication itself.
    """
    if isinstance(op, PauliOperator):
        op = pauli_matrix(op)
    op = np.asarray(op, dtype=complex)
    scale = max(float(np.linalg.norm(op, ord=2)), 1e-300)
    p = ground_projector(model)
    pre = float(np.linalg.norm(op @ p, ord=2)) / scale
    if pre > tol:
        return Tqo3Result("precondition", pre, float("nan"))
    pb = local_ground_projector(model, square.expand(1))
    post = float(np.linalg.norm(op @ pb, ord=2)) / scale
    status = "pass" if post <= tol else "fail"
    return Tqo3Result(status, pre, post)
