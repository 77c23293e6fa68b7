"""Local-indistinguishability checks on the built-in models.

The toric presentation should pass everything at small sizes; the
paired-plaquette presentation of the same group should fail the
presentation-sensitive inclusion check once the padded square no longer
wraps the whole torus (L >= 6). The classical chain fails the
scalar-action condition but passes the kernel-coincidence one.
"""

import numpy as np
import pytest

from tqolab.dense import pauli_matrix
from tqolab.lattice import Lattice
from tqolab.models import (
    Model,
    build_ising_chain,
    build_toric_code,
    build_unstable_toric_code,
)
from tqolab.pauli import PauliOperator
from tqolab.tqo import (
    check_tqo1_exact,
    check_tqo1_stabilizer,
    check_tqo2_exact,
    check_tqo2_stabilizer,
    corollary_tqo3_check,
    default_l_star,
    ground_projector,
    tqo2_square_stabilizer,
)


def test_default_l_star():
    assert default_l_star(6) == 2
    assert default_l_star(12) == 5


def test_tqo2_stabilizer_toric_passes():
    m = build_toric_code(6)
    rep = check_tqo2_stabilizer(m, l_star=4)
    assert rep.verdict
    assert rep.details["squares_checked"] == 4 * 36


def test_tqo2_stabilizer_unstable_fails_at_6():
    m = build_unstable_toric_code(6)
    rep = check_tqo2_stabilizer(m, l_star=2, jobs=2)
    assert not rep.verdict
    assert rep.witnesses
    # failing squares sit away from the bare plaquette at the origin
    for sq, diag in rep.witnesses:
        assert "not generated" in diag
    # squares right at the origin are fine: the bare generator is available
    ok, _ = tqo2_square_stabilizer(m, m.lattice.square(0, 0, 2))
    assert ok


def test_tqo2_stabilizer_unstable_passes_at_4():
    # with L=4 every padded square wraps the whole torus, so the inclusion
    # cannot fail: the counterexample needs L >= 6 to bite
    m = build_unstable_toric_code(4)
    rep = check_tqo2_stabilizer(m, l_star=2)
    assert rep.verdict


def test_tqo2_stabilizer_trivial_group():
    m = Model(Lattice(4, layout="sites"), [])
    rep = check_tqo2_stabilizer(m, l_star=2)
    assert rep.verdict


def test_tqo2_stabilizer_order_independent():
    m = build_unstable_toric_code(6)
    gens = list(m.generators)
    rng = np.random.default_rng(5)
    order = rng.permutation(len(gens))
    shuffled = Model(m.lattice, [gens[i] for i in order])
    a = check_tqo2_stabilizer(m, l_star=2)
    b = check_tqo2_stabilizer(shuffled, l_star=2)
    assert a.verdict == b.verdict == False
    assert {sq for sq, _ in a.witnesses} == {sq for sq, _ in b.witnesses}


def test_unstable_moving_pstar_keeps_fail():
    a = check_tqo2_stabilizer(build_unstable_toric_code(6), l_star=2)
    b = check_tqo2_stabilizer(build_unstable_toric_code(6, pstar=(3, 3)),
                              l_star=2)
    assert not a.verdict and not b.verdict
    assert {sq for sq, _ in a.witnesses} != {sq for sq, _ in b.witnesses}


def test_tqo1_stabilizer_toric3():
    m = build_toric_code(3)
    rep = check_tqo1_stabilizer(m, l_star=2, weight_cutoff=3)
    assert rep.verdict
    # exhaustive search pins the distance at exactly L
    assert rep.details["distance"] == 3
    tight = check_tqo1_stabilizer(m, l_star=2, weight_cutoff=3, threshold=3)
    assert not tight.verdict and tight.witnesses


def test_tqo1_stabilizer_chain_fails():
    m = build_ising_chain(3)
    rep = check_tqo1_stabilizer(m, l_star=1)
    assert not rep.verdict
    assert rep.details["distance"] == 1


def test_tqo1_stabilizer_toric_weight1():
    m = build_toric_code(2)
    rep = check_tqo1_stabilizer(m, l_star=1, threshold=1)
    assert rep.verdict
    assert rep.details["distance"] == ">1"
    wider = check_tqo1_stabilizer(m, l_star=1, threshold=1, weight_cutoff=2)
    assert wider.verdict
    assert wider.details["distance"] == 2  # found just above the threshold


def test_tqo1_exact_toric2_small_square():
    m = build_toric_code(2)
    rep = check_tqo1_exact(m, m.lattice.square(0, 0, 1))
    assert rep.verdict
    assert rep.details["basis_size"] == 16
    assert rep.details["max_deviation"] <= 1e-9


def test_tqo1_exact_toric2_wrapping_square_fails():
    # at L=2 a 2x2 square wraps the whole torus and carries the logical
    # operators, so scalar action must fail there
    m = build_toric_code(2)
    rep = check_tqo1_exact(m, m.lattice.square(0, 0, 2))
    assert not rep.verdict
    assert rep.details["max_deviation"] > 0.5


def test_tqo1_exact_unstable2_small_square():
    m = build_unstable_toric_code(2)
    rep = check_tqo1_exact(m, m.lattice.square(1, 1, 1))
    assert rep.verdict


def test_tqo2_exact_toric2():
    m = build_toric_code(2)
    for sq in m.lattice.squares(1) + m.lattice.squares(2):
        rep = check_tqo2_exact(m, sq)
        assert rep.verdict, (sq, rep.witnesses)
        assert rep.details["rank_global"] == rep.details["rank_local"]


def test_exact_and_stabilizer_tqo2_agree_at_2():
    for build in (build_toric_code, build_unstable_toric_code):
        m = build(2)
        for sq in m.lattice.squares(1) + m.lattice.squares(2):
            ok, _ = tqo2_square_stabilizer(m, sq)
            rep = check_tqo2_exact(m, sq)
            assert ok == rep.verdict


def test_chain_passes_tqo2_fails_tqo1():
    m = build_ising_chain(3)
    sq = m.lattice.square(0, 0, 1)
    assert check_tqo2_exact(m, sq).verdict
    assert tqo2_square_stabilizer(m, sq)[0]
    rep = check_tqo1_exact(m, sq)
    assert not rep.verdict  # a single Z distinguishes the two ground states


def test_corollary_tqo3_zero_operator():
    m = build_toric_code(2)
    sq = m.lattice.square(0, 0, 1)
    zero = np.zeros((2 ** m.n_qubits,) * 2)
    assert corollary_tqo3_check(m, sq, zero).ok


def test_corollary_tqo3_excited_projector():
    m = build_toric_code(2)
    sq = next(iter(m.terms))
    dim = 2 ** m.n_qubits
    pa = np.eye(dim, dtype=complex)
    for g in m.generators_on(sq):
        pa = pa @ (np.eye(dim) + pauli_matrix(g)) / 2
    res = corollary_tqo3_check(m, sq, np.eye(dim) - pa)
    assert res.ok
    assert res.local_overlap <= 1e-9


def test_corollary_tqo3_random_annihilating(seed=11):
    m = build_toric_code(2)
    sq = next(iter(m.terms))
    dim = 2 ** m.n_qubits
    pa = np.eye(dim, dtype=complex)
    for g in m.generators_on(sq):
        pa = pa @ (np.eye(dim) + pauli_matrix(g)) / 2
    rng = np.random.default_rng(seed)
    # random operator on the square's qubits times the local excited projector
    word = rng.choice(list("IXYZ"), size=len(sq.sites) * 2)
    op = pauli_matrix(PauliOperator.from_letters("".join(word)).embedded(
        m.lattice.region_qubits(sq), m.n_qubits))
    res = corollary_tqo3_check(m, sq, op @ (np.eye(dim) - pa))
    assert res.ok


def test_corollary_tqo3_precondition_flagged():
    m = build_toric_code(2)
    sq = m.lattice.square(0, 0, 1)
    # an operator that acts within the ground space violates the premise
    z_loop = np.zeros(m.n_qubits, np.uint8)
    z_loop[m.lattice.qubit_index(0, 0, 0)] = 1
    z_loop[m.lattice.qubit_index(1, 0, 0)] = 1
    op = PauliOperator(np.zeros(m.n_qubits, np.uint8), z_loop, 0)
    res = corollary_tqo3_check(m, sq, op)
    assert res.status == "precondition"
