"""Iterative block diagonalization of perturbed commuting-projector models.

The machinery here rotates a Hamiltonian ``H0 + V`` level by level so that
the perturbation becomes block-diagonal with respect to the ground projector
of ``H0``, while everything stays expressed as sums of square-registered
blocks (:class:`~tqolab.decompositions.LocalDecomposition`).

Main entry points:

``e_super``
    The block-rotation superoperator of a square's restricted Hamiltonian;
    the elementary solver every other routine is built from.
``solve_linearized``
    Series solution of the linearized rotation equation
    ``Q([S, H0 + W] + V) P = 0``.
``transformed_diagonal`` / ``commutator_decomposition`` / ``second_order_remainder``
    The pieces of the rotated Hamiltonian, each as a fresh decomposition.
``flow_step`` / ``FlowState``
    One full level of the flow, with unitarity checked densely.
``scalar_flow``
    The scalar shadow of the flow: the strength/rate recursion that predicts
    how many levels survive before decay is exhausted.

Everything dense is built on "active" registers (unions of the qubits the
participating blocks actually touch), so moderate chains and strips work
even when the ambient lattice is large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .decompositions import (
    DecayClass,
    InteractionTerm,
    LocalDecomposition,
    degree_reset,
    embed_on_register,
    pad_boundary,
)
from .dense import check_dense, hermitize, kernel_projector, operator_norm, pauli_matrix
from .lattice import Lattice, Square
from .models import Model
from .pauli import PauliOperator

__all__ = [
    "FlowBreakdownError",
    "FlowContext",
    "FlowDivergenceError",
    "FlowState",
    "LocalBlocks",
    "ScalarFlowResult",
    "commutator_decomposition",
    "degree_reset",
    "e_super",
    "flow_step",
    "h0_decomposition",
    "initial_flow_state",
    "offdiagonal_residual",
    "pad_boundary",
    "scalar_flow",
    "scalar_flow_closed_form",
    "second_order_remainder",
    "solve_linearized",
]

PINV_RELATIVE_CUTOFF = 1e-10
SERIES_STALL_RATIO = 0.9
DEFAULT_SERIES_DEPTH = 8
BLOCK_OFFDIAG_TOL = 1e-10
SPECTRUM_DRIFT_TOL = 1e-9


class FlowDivergenceError(RuntimeError):
    """Series residual failed to decrease over two consecutive depths."""


class FlowBreakdownError(RuntimeError):
    """Scalar recursion ran out of exponential decay."""


def _restricted_pauli(gen: PauliOperator, register) -> PauliOperator:
    idx = list(register)
    return PauliOperator(gen.x_bits[idx], gen.z_bits[idx], gen.phase_power)


def _projector_sum_dense(gens, register) -> np.ndarray:
    """Dense sum of (I - g)/2 over the generators, on the given register."""
    dim = 1 << len(register)
    check_dense(dim)
    out = np.zeros((dim, dim), dtype=np.complex128)
    eye = np.eye(dim)
    for g in gens:
        if not g.supported_on(register):
            raise ValueError("generator support leaves the register")
        out += 0.5 * (eye - pauli_matrix(_restricted_pauli(g, register)))
    return out


@dataclass(frozen=True)
class _BlockData:
    register: tuple
    hamiltonian: np.ndarray | None
    ground: np.ndarray | None
    pinv: np.ndarray | None
    eigenvalues: np.ndarray | None


class LocalBlocks:
    """Spectral cache for the restricted Hamiltonians of a model.

    The restriction to a square keeps the generator terms assigned to squares
    contained in it, built on the union of their supports; qubits no
    generator touches never materialize.
    """

    def __init__(self, model: Model):
        self.model = model
        self._cache: dict = {}

    def assigned_inside(self, square: Square) -> tuple:
        return tuple(sq for sq in self.model.terms if square.contains(sq))

    def data(self, square: Square) -> _BlockData:
        key = (square.r, square.x, square.y)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._build(square)
            self._cache[key] = hit
        return hit

    def _build(self, square: Square) -> _BlockData:
        gens = [g for sq in self.assigned_inside(square)
                for g in self.model.generators_on(sq)]
        register = tuple(sorted({q for g in gens for q in g.support}))
        if not register:
            return _BlockData((), None, None, None, None)
        ham = hermitize(_projector_sum_dense(gens, register))
        evals, evecs = np.linalg.eigh(ham)
        cutoff = PINV_RELATIVE_CUTOFF * max(float(evals[-1]), 1.0)
        kernel = evals <= cutoff
        vk = evecs[:, kernel]
        ground = vk @ vk.conj().T
        inv = np.where(kernel, 0.0, 1.0 / np.where(kernel, 1.0, evals))
        pinv = (evecs * inv) @ evecs.conj().T
        return _BlockData(register, ham, ground, pinv, evals)


def e_super(model: Model, square: Square, operator, qubits=None,
            blocks: LocalBlocks | None = None) -> InteractionTerm:
    """Block-rotation superoperator of the square's restricted Hamiltonian.

    ``operator`` is either an :class:`InteractionTerm` or a dense block with
    an explicit ``qubits`` register (default: all of the square's qubits),
    supported inside the square. The result solves the local rotation
    equation: commuting it with the restricted Hamiltonian cancels the
    off-diagonal blocks of the input. It is anti-Hermitian for Hermitian
    input and never exceeds the input norm, because the restricted
    Hamiltonian has integer spectrum with unit gap.
    """
    lattice = model.lattice
    blocks = blocks if blocks is not None else LocalBlocks(model)
    if isinstance(operator, InteractionTerm):
        block, qubits = operator.block, operator.qubits
    else:
        block = np.asarray(operator, dtype=np.complex128)
        if qubits is None:
            qubits = lattice.region_qubits(square)
        qubits = tuple(int(q) for q in qubits)
    data = blocks.data(square)
    if not data.register:
        # no generator lives inside the square: the excited block is empty
        dim = 1 << len(qubits)
        return InteractionTerm.on(lattice, square, np.zeros((dim, dim)), qubits)
    register = tuple(sorted(set(qubits) | set(data.register)))
    check_dense(1 << len(register))
    op = embed_on_register(block, qubits, register)
    gnd = embed_on_register(data.ground, data.register, register)
    pinv = embed_on_register(data.pinv, data.register, register)
    out = pinv @ op @ gnd - gnd @ op @ pinv
    return InteractionTerm.on(lattice, square, out, register)


def h0_decomposition(model: Model) -> LocalDecomposition:
    """The model's own terms as a decomposition, one block per assigned
    square, each on the union of its generators' supports."""
    out = LocalDecomposition(model.lattice)
    for sq in model.terms:
        gens = model.generators_on(sq)
        register = tuple(sorted({q for g in gens for q in g.support}))
        out.add(sq, _projector_sum_dense(gens, register), register)
    return out


class FlowContext:
    """Dense global view of a model on its active register.

    The register is the union of the generator supports, the supports of any
    decompositions handed in, and ``extra_qubits``; residuals, spectra, and
    ground averages are all evaluated here.
    """

    def __init__(self, model: Model, decompositions=(), extra_qubits=()):
        self.model = model
        qs = {q for g in model.generators for q in g.support}
        for dec in decompositions:
            if dec is not None:
                qs.update(dec.support_qubits())
        qs.update(int(q) for q in extra_qubits)
        self.register = tuple(sorted(qs))
        self.dim = 1 << len(self.register)
        check_dense(self.dim)
        self.h0 = hermitize(_projector_sum_dense(model.generators, self.register))
        self.ground, self.ground_rank = kernel_projector(self.h0)
        self.excited = np.eye(self.dim) - self.ground

    def dense(self, dec: LocalDecomposition) -> np.ndarray:
        return dec.total(self.register)

    def identity(self) -> np.ndarray:
        return np.eye(self.dim)

    def offdiag_norm(self, mat: np.ndarray) -> float:
        """Norm of the block coupling excited to ground space."""
        return float(operator_norm(self.excited @ mat @ self.ground))

    def ground_average(self, mat: np.ndarray) -> float:
        return float(np.trace(mat @ self.ground).real) / self.ground_rank

    def state_dense(self, state: "FlowState") -> np.ndarray:
        h = self.h0.copy()
        for part in state.diagonal_parts:
            h = h + self.dense(part)
        h = h + self.dense(state.perturbation)
        if state.error_dense is not None:
            h = h + embed_on_register(state.error_dense, state.error_register,
                                      self.register)
        return h + state.scalar * np.eye(self.dim)

    def spectrum(self, mat: np.ndarray) -> np.ndarray:
        return np.linalg.eigvalsh(hermitize(mat))


def _commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def _chi_square(lattice: Lattice, a: Square, b: Square) -> Square:
    """Canonical covering square for a commutator of blocks on a and b:
    the lexicographically smallest square of size (a.r + b.r, clamped to L)
    containing a, b, and b's nearest neighbors; grown when the wrap-around
    geometry leaves no square of that exact size."""
    need = set(a.site_set) | set(lattice.neighborhood(b.sites, 1))
    size = min(a.r + b.r, lattice.L)
    for r in range(size, lattice.L + 1):
        if r >= lattice.L:
            return Square(0, 0, lattice.L, lattice.L)
        try:
            return lattice.covering_square(need, r=r)
        except ValueError:
            continue
    return Square(0, 0, lattice.L, lattice.L)


def commutator_decomposition(s_dec: LocalDecomposition,
                             v_dec: LocalDecomposition) -> LocalDecomposition:
    """[S, V] as a decomposition, pairwise commutator by pairwise commutator.

    A nonzero commutator of blocks on squares of sizes p and q is registered
    to the canonical covering square of size p+q (clamped to the whole
    lattice, whose terms downstream consumers route to their error channel).
    When both inputs claim an envelope, the output carries a fitted one at
    the weaker rate and degree zero.
    """
    lattice = s_dec.lattice
    out = LocalDecomposition(lattice)
    for ts in s_dec:
        s_support = set(ts.qubits)
        for tv in v_dec:
            if s_support.isdisjoint(tv.qubits):
                continue
            register = tuple(sorted(s_support | set(tv.qubits)))
            check_dense(1 << len(register))
            comm = _commutator(ts.embed_to(register), tv.embed_to(register))
            scale = 2.0 * ts.norm * tv.norm
            if operator_norm(comm) <= 1e-14 * max(scale, 1e-14):
                continue
            out.add(_chi_square(lattice, ts.square, tv.square), comm, register)
    if s_dec.claimed is not None and v_dec.claimed is not None:
        rate = min(s_dec.claimed.rate, v_dec.claimed.rate)
        out.claimed = out.fit_class(rate, 0.0)
    return out


def solve_linearized(model: Model, perturbation: LocalDecomposition,
                     diagonal: LocalDecomposition | None = None,
                     series_depth: int = DEFAULT_SERIES_DEPTH,
                     blocks: LocalBlocks | None = None,
                     context: FlowContext | None = None) -> LocalDecomposition:
    """Series solution of ``Q([S, H0 + W] + V) P = 0``.

    The depth-1 part applies :func:`e_super` to the boundary-padded
    perturbation; each further depth applies it to the commutator of the
    previous part with the block-diagonal ``diagonal`` operator. Residuals
    (the global off-diagonal norm of ``[S, H0+W] + V`` after each depth) are
    recorded in ``info["residuals"]`` and should shrink geometrically with
    ratio proportional to the diagonal strength; the series stops early once
    the improvement ratio passes ``SERIES_STALL_RATIO`` and raises
    :class:`FlowDivergenceError` after two consecutive depths without
    improvement. ``info`` also carries the padded input and the commutator
    parts, which :func:`transformed_diagonal` consumes.
    """
    if series_depth < 1:
        raise ValueError("series_depth must be >= 1")
    lattice = model.lattice
    blocks = blocks if blocks is not None else LocalBlocks(model)
    w_dec = diagonal if diagonal is not None else LocalDecomposition(lattice)
    v_dec = perturbation

    s_out = LocalDecomposition(lattice)
    if len(v_dec) == 0:
        s_out.info = {"residuals": [0.0], "initial_offdiag": 0.0,
                      "padded_input": LocalDecomposition(lattice),
                      "commutator_parts": [], "depths": 0}
        return s_out

    ctx = context if context is not None else FlowContext(model, (v_dec, w_dec))
    padded = pad_boundary(v_dec)

    def apply_e(dec: LocalDecomposition) -> LocalDecomposition:
        part = LocalDecomposition(lattice)
        for term in dec:
            image = e_super(model, term.square, term, blocks=blocks)
            if image.norm > 0.0:
                part.add_term(image)
        return part

    h0w = ctx.h0 + ctx.dense(w_dec)
    v_dense = ctx.dense(v_dec)

    def residual_of(s_dec: LocalDecomposition) -> float:
        return ctx.offdiag_norm(_commutator(ctx.dense(s_dec), h0w) + v_dense)

    initial = ctx.offdiag_norm(v_dense)
    parts = [apply_e(padded)]
    for term in parts[0]:
        s_out.add_term(term)
    residuals = [residual_of(s_out)]
    d_parts: list = []

    floor = 1e-13 * max(1.0, initial)
    non_improving = 0
    for _ in range(1, series_depth):
        if len(w_dec) == 0 or residuals[-1] <= floor:
            break
        d = commutator_decomposition(parts[-1], w_dec)
        if len(d) == 0:
            break
        d_parts.append(d)
        nxt = apply_e(d)
        if len(nxt) == 0:
            break
        parts.append(nxt)
        for term in nxt:
            s_out.add_term(term)
        res = residual_of(s_out)
        ratio = res / residuals[-1] if residuals[-1] > 0 else 0.0
        residuals.append(res)
        if ratio >= 1.0:
            non_improving += 1
            if non_improving >= 2:
                raise FlowDivergenceError(
                    f"series residual stopped decreasing at depth "
                    f"{len(residuals)} (ratio {ratio:.3g}); the block-diagonal "
                    f"part is too strong for the linearized solve")
        else:
            non_improving = 0
            if ratio > SERIES_STALL_RATIO:
                break

    if v_dec.claimed is not None:
        s_out.claimed = s_out.fit_class(v_dec.claimed.rate, 0.0)
    s_out.info = {
        "residuals": residuals,
        "initial_offdiag": initial,
        "padded_input": padded,
        "commutator_parts": d_parts,
        "depths": len(parts),
    }
    return s_out


def transformed_diagonal(model: Model, s_dec: LocalDecomposition,
                         diagonal: LocalDecomposition | None = None,
                         perturbation: LocalDecomposition | None = None,
                         blocks: LocalBlocks | None = None,
                         context: FlowContext | None = None) -> LocalDecomposition:
    """Block-diagonal part of the rotated Hamiltonian at linear order.

    Consumes the series bookkeeping attached by :func:`solve_linearized`:
    the padded perturbation contributes ``P_A T P_A + Q_A T Q_A`` per term,
    and so does each commutator part on its own squares. Every term is
    shifted by a multiple of the identity to have zero ground-space average;
    the accumulated scalar is reported in ``info["scalar_shift"]`` (the
    represented operator is the term sum plus that multiple of the
    identity). Each term is verified block-diagonal against the global
    ground projector; a violation signals an upstream bug and raises.
    """
    if "padded_input" not in s_dec.info:
        raise ValueError("the rotation generator lacks series bookkeeping; "
                         "build it with solve_linearized")
    lattice = model.lattice
    blocks = blocks if blocks is not None else LocalBlocks(model)
    sources = [s_dec.info["padded_input"], *s_dec.info["commutator_parts"]]
    if context is not None:
        ctx = context
    else:
        ctx = FlowContext(model, (s_dec, diagonal, perturbation, *sources))

    raw = LocalDecomposition(lattice)
    for src in sources:
        for term in src:
            data = blocks.data(term.square)
            if not data.register:
                # trivial restricted Hamiltonian: the whole block is diagonal
                raw.add(term.square, term.block, term.qubits)
                continue
            register = tuple(sorted(set(term.qubits) | set(data.register)))
            check_dense(1 << len(register))
            op = embed_on_register(term.block, term.qubits, register)
            gnd = embed_on_register(data.ground, data.register, register)
            exc = np.eye(1 << len(register)) - gnd
            raw.add(term.square, gnd @ op @ gnd + exc @ op @ exc, register)

    out = LocalDecomposition(lattice)
    shift_total = 0.0
    for term in raw:
        avg = ctx.ground_average(
            embed_on_register(term.block, term.qubits, ctx.register))
        block = term.block - avg * np.eye(1 << len(term.qubits))
        shift_total += avg
        offdiag = ctx.offdiag_norm(
            embed_on_register(block, term.qubits, ctx.register))
        if offdiag > BLOCK_OFFDIAG_TOL:
            raise RuntimeError(
                f"transformed term on {term.square} is not block-diagonal "
                f"(off-diagonal norm {offdiag:.3e}); upstream rotation bug")
        out.add(term.square, block, term.qubits)
    out.info["scalar_shift"] = shift_total
    source_class = (perturbation.claimed if perturbation is not None else None) \
        or s_dec.claimed
    if source_class is not None:
        out.claimed = out.fit_class(source_class.rate, 0.0)
    return out


def second_order_remainder(s_dec: LocalDecomposition,
                           hamiltonian: LocalDecomposition,
                           j_max: int | None = None) -> LocalDecomposition:
    """Shell decomposition of ``e^S H e^{-S} - H - [S, H]``, term by term.

    For each block of ``hamiltonian`` the conjugation is localized over
    growing squares: shell ``j`` keeps only the rotation blocks inside the
    term's square expanded by ``j`` sites, and the shell term is the
    difference between consecutive localizations (exact matrix exponentials
    on the shell registers). Once the expansion swallows every rotation
    block, reaches the whole lattice, or passes ``j_max``, the remaining
    difference to the full conjugation is folded into one final term, so the
    output always sums exactly to the full remainder. Shell norms are
    recorded in ``info["shells"]`` for decay diagnostics.
    """
    lattice = s_dec.lattice
    if j_max is None:
        j_max = lattice.L
    out = LocalDecomposition(lattice)
    rows: list = []
    out.info["shells"] = rows
    if len(s_dec) == 0:
        return out
    s_terms = list(s_dec)

    def omega(base_term: InteractionTerm, included) -> tuple:
        register = set(base_term.qubits)
        for ts in included:
            register.update(ts.qubits)
        register = tuple(sorted(register))
        check_dense(1 << len(register))
        op = embed_on_register(base_term.block, base_term.qubits, register)
        gen = np.zeros((1 << len(register),) * 2, dtype=np.complex128)
        for ts in included:
            gen += ts.embed_to(register)
        rot = scipy.linalg.expm(gen)
        inv = scipy.linalg.expm(-gen)
        return rot @ op @ inv - op - _commutator(gen, op), register

    for term in hamiltonian:
        prev_block, prev_register = None, ()
        for j in range(0, j_max + 1):
            shell_square = term.square.expand(j)
            inside = [ts for ts in s_terms if shell_square.contains(ts.square)]
            swallowed = len(inside) == len(s_terms)
            last = (j == j_max) or shell_square.is_whole_lattice or swallowed
            if last and not swallowed:
                inside = s_terms
            block, register = omega(term, inside)
            if prev_block is not None:
                block = block - embed_on_register(prev_block, prev_register,
                                                  register)
            norm = float(operator_norm(block))
            if last and not swallowed and not shell_square.is_whole_lattice:
                sites = set(shell_square.site_set)
                sites.update(lattice.site_of_qubit(q) for q in register)
                key_square = lattice.covering_square(sites)
            else:
                key_square = shell_square
            rows.append({"base": term.key, "shell": j, "size": shell_square.r,
                         "norm": norm, "aggregate": bool(last and not swallowed)})
            if norm > 1e-15 * max(1.0, term.norm):
                out.add(key_square, block, register)
            if last:
                break
            prev_block = block if prev_block is None else \
                embed_on_register(prev_block, prev_register, register) + block
            prev_register = register
    if s_dec.claimed is not None:
        out.claimed = out.fit_class(s_dec.claimed.rate / 2.0, -1.0)
    return out


@dataclass
class FlowState:
    """One level of the flow: the pieces of the current Hamiltonian.

    ``diagonal_parts`` collects the block-diagonal decompositions produced
    by completed levels, ``perturbation`` is the part still to be rotated,
    ``error_dense`` (on ``error_register``) holds everything routed to the
    error channel with ``error_norm_bound`` tracking its accumulated norm
    bound, and ``scalar`` the accumulated identity coefficient.
    """

    level: int
    diagonal_parts: tuple
    perturbation: LocalDecomposition
    error_dense: np.ndarray | None
    error_register: tuple
    error_norm_bound: float
    scalar: float
    classes: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def initial_flow_state(model: Model, perturbation: LocalDecomposition,
                       l_star: int | None = None,
                       context: FlowContext | None = None) -> FlowState:
    """Level-0 state: terms over the size threshold start in the error
    channel, everything else is the perturbation to rotate."""
    if l_star is None:
        l_star = model.lattice.L
    keep, oversize = perturbation.split(l_star)
    error_dense, error_register = None, ()
    error_bound = 0.0
    if len(oversize) > 0:
        ctx = context if context is not None else FlowContext(model, (perturbation,))
        error_dense = ctx.dense(oversize)
        error_register = ctx.register
        error_bound = oversize.norm_bound()
    return FlowState(level=0, diagonal_parts=(), perturbation=keep,
                     error_dense=error_dense, error_register=error_register,
                     error_norm_bound=error_bound, scalar=0.0,
                     classes={"perturbation": perturbation.claimed}, meta={})


def offdiagonal_residual(state: FlowState, context: FlowContext) -> float:
    """Global norm of the excited-to-ground block of the state Hamiltonian."""
    return context.offdiag_norm(context.state_dense(state))


def flow_step(model: Model, state: FlowState, l_star: int | None = None,
              series_depth: int = DEFAULT_SERIES_DEPTH,
              j_max: int | None = None,
              blocks: LocalBlocks | None = None,
              context: FlowContext | None = None,
              check_spectrum: bool = True) -> FlowState:
    """Advance the flow by one level.

    Solves for the rotation generator, splits the rotated Hamiltonian into a
    new block-diagonal part and a new perturbation at the size threshold
    ``l_star`` (larger blocks join the error channel, which is conjugated
    along), and verifies on the dense register that the spectrum moved by
    less than ``SPECTRUM_DRIFT_TOL``. ``meta`` on the returned state records
    the series residuals and the off-diagonal norms before and after.
    """
    lattice = model.lattice
    if l_star is None:
        l_star = lattice.L
    blocks = blocks if blocks is not None else LocalBlocks(model)
    if context is None:
        context = FlowContext(model, (state.perturbation, *state.diagonal_parts),
                              extra_qubits=state.error_register)
    ctx = context

    if len(state.perturbation) == 0:
        nxt = replace(state, level=state.level + 1)
        nxt.meta = dict(state.meta, note="no perturbation left; level advanced")
        return nxt

    w_all = LocalDecomposition(lattice)
    for part in state.diagonal_parts:
        for term in part:
            w_all.add_term(term)

    offdiag_before = offdiagonal_residual(state, ctx)
    spectrum_before = ctx.spectrum(ctx.state_dense(state)) if check_spectrum else None

    s_dec = solve_linearized(model, state.perturbation, w_all, series_depth,
                             blocks=blocks, context=ctx)
    w_tilde = transformed_diagonal(model, s_dec, w_all, state.perturbation,
                                   blocks=blocks, context=ctx)
    linear_part = commutator_decomposition(s_dec, state.perturbation)
    conjugated = h0_decomposition(model).merged(w_all).merged(state.perturbation)
    remainder = second_order_remainder(s_dec, conjugated, j_max)
    v_tilde = linear_part.merged(remainder)

    old_class = state.perturbation.claimed
    if old_class is not None:
        v_tilde.claimed = v_tilde.fit_class(old_class.rate / 2.0, -1.0)

    w_keep, w_over = w_tilde.split(l_star)
    v_keep, v_over = v_tilde.split(l_star)

    error_old = np.zeros((ctx.dim, ctx.dim), dtype=np.complex128)
    if state.error_dense is not None:
        error_old = embed_on_register(state.error_dense, state.error_register,
                                      ctx.register)
    s_dense = ctx.dense(s_dec)
    rot = scipy.linalg.expm(s_dense)
    error_new = rot @ error_old @ scipy.linalg.expm(-s_dense)
    if len(w_over) > 0:
        error_new = error_new + ctx.dense(w_over)
    if len(v_over) > 0:
        error_new = error_new + ctx.dense(v_over)
    error_bound = state.error_norm_bound + w_over.norm_bound() + v_over.norm_bound()
    have_error = state.error_dense is not None or len(w_over) > 0 or len(v_over) > 0

    nxt = FlowState(
        level=state.level + 1,
        diagonal_parts=state.diagonal_parts + (w_keep,),
        perturbation=v_keep,
        error_dense=error_new if have_error else None,
        error_register=ctx.register if have_error else (),
        error_norm_bound=error_bound if have_error else 0.0,
        scalar=state.scalar + w_tilde.info["scalar_shift"],
        classes={"rotation": s_dec.claimed, "diagonal": w_tilde.claimed,
                 "perturbation": v_tilde.claimed},
        meta={"residuals": list(s_dec.info["residuals"]),
              "offdiag_before": offdiag_before},
    )
    nxt.meta["offdiag_after"] = offdiagonal_residual(nxt, ctx)
    if check_spectrum:
        spectrum_after = ctx.spectrum(ctx.state_dense(nxt))
        drift = float(np.max(np.abs(spectrum_after - spectrum_before)))
        nxt.meta["spectrum_drift"] = drift
        scale = max(1.0, float(np.max(np.abs(spectrum_before))))
        if drift > SPECTRUM_DRIFT_TOL * scale:
            raise RuntimeError(
                f"flow step changed the spectrum by {drift:.3e}; "
                f"conjugation bookkeeping is inconsistent")
    return nxt


@dataclass
class ScalarFlowResult:
    """Trajectory of the scalar recursion, one row per level."""

    strength: np.ndarray
    block_strength: np.ndarray
    rate: np.ndarray
    error_bound: np.ndarray
    breakdown_level: int | None
    params: dict

    @property
    def levels(self) -> np.ndarray:
        return np.arange(len(self.strength))

    @property
    def rate_stays_positive(self) -> bool:
        return self.breakdown_level is None

    def below_target_level(self, target: float) -> int | None:
        """First level whose strength drops below the target, if any."""
        hits = np.nonzero(self.strength < target)[0]
        return int(hits[0]) if hits.size else None

    def rows(self) -> list:
        return [{"level": int(n), "strength": float(self.strength[n]),
                 "block_strength": float(self.block_strength[n]),
                 "rate": float(self.rate[n]),
                 "error_bound": float(self.error_bound[n])}
                for n in range(len(self.strength))]


def scalar_flow_closed_form(strength: float, c1: float, epsilon: float,
                            level: int) -> float:
    """Strength after ``level`` steps of ``J -> c1 * J**(2(1-eps))``."""
    theta = 2.0 * (1.0 - epsilon)
    if strength == 0.0:
        return 0.0
    if theta == 1.0:
        return strength * c1 ** level
    base = c1 ** (-1.0 / (theta - 1.0))
    return base ** (1.0 - theta ** level) * strength ** (theta ** level)


def scalar_flow(strength: float, rate: float, *, c1: float, c2: float,
                c3: float, epsilon: float, size: int, levels: int,
                error_prefactor: float = 1.0,
                strict: bool = False) -> ScalarFlowResult:
    """Iterate the scalar recursion that shadows the operator flow.

    Per level: strength ``J -> c1 * J**(2(1-eps))``, block strength
    ``-> c2 * J**(1-eps)``, rate ``-> rate/2 - c3 * J_next**(eps/10)``, and
    the error bound grows by ``error_prefactor * size**3 * J * exp(-c3 *
    size * rate)``. The trajectory stops early when the rate is exhausted
    (non-positive); ``strict=True`` turns that into a
    :class:`FlowBreakdownError`.
    """
    if min(c1, c2, c3) < 0 or not 0.0 <= epsilon < 1.0:
        raise ValueError("constants must be >= 0 and epsilon in [0, 1)")
    if strength < 0 or rate <= 0 or size < 1 or levels < 0:
        raise ValueError("strength >= 0, rate > 0, size >= 1, levels >= 0 required")
    js = [float(strength)]
    jds = [0.0]
    rates = [float(rate)]
    errs = [0.0]
    breakdown = None
    for k in range(levels):
        j = js[-1]
        j_next = c1 * j ** (2.0 * (1.0 - epsilon))
        jd_next = c2 * j ** (1.0 - epsilon)
        rate_next = rates[-1] / 2.0 - c3 * j_next ** (epsilon / 10.0)
        err_next = errs[-1] + error_prefactor * size ** 3 * j \
            * math.exp(-c3 * size * rates[-1])
        if rate_next <= 0.0:
            breakdown = k + 1
            if strict:
                raise FlowBreakdownError(f"flow breakdown at level {k + 1}")
            break
        js.append(j_next)
        jds.append(jd_next)
        rates.append(rate_next)
        errs.append(err_next)
    return ScalarFlowResult(
        strength=np.array(js), block_strength=np.array(jds),
        rate=np.array(rates), error_bound=np.array(errs),
        breakdown_level=breakdown,
        params={"strength": strength, "rate": rate, "c1": c1, "c2": c2,
                "c3": c3, "epsilon": epsilon, "size": size, "levels": levels,
                "error_prefactor": error_prefactor})
