import numpy as np
import pytest

from tqolab import dense
from tqolab.lattice import Lattice, Square
from tqolab.decompositions import DecayClass, LocalDecomposition
from tqolab.models import build_toric_code, toric_logical_pair
from tqolab.pauli import commutes
from tqolab.flow import _projector_sum_dense
from tqolab.locality import (
    ContinuationPath,
    GapClosedError,
    build_filter,
    continue_projector,
    default_filter,
    dress_operator,
    dressed_locality_profile,
    front_arrival_time,
    interaction_norm_mu,
    lr_commutator_norm,
    lr_commutator_profile,
    quasi_adiabatic_generator,
)

I2 = np.eye(2)
PX = np.array([[0.0, 1.0], [1.0, 0.0]])
PZ = np.diag([1.0, -1.0])


@pytest.fixture(scope="module")
def filt():
    return default_filter()


@pytest.fixture(scope="module")
def toric_setup():
    model = build_toric_code(2)
    n = model.lattice.n_qubits
    h0 = _projector_sum_dense(model.generators, tuple(range(n)))
    rng = np.random.default_rng(11)
    v = np.zeros_like(h0)
    for _ in range(6):
        pair = sorted(rng.choice(n, size=2, replace=False))
        v += dense.embed(dense.random_hermitian(4, rng, norm=0.02), pair, n)
    return model, h0, v


@pytest.fixture(scope="module")
def toric_cont(toric_setup, filt):
    model, h0, v = toric_setup
    path = ContinuationPath(h0, v, steps=50, scheme="midpoint")
    return model, h0, v, continue_projector(path, 0, filt)


class TestFilterFunction:
    def test_grid_exactness_beyond_mask_edge(self, filt):
        sel = np.abs(filt.freqs) >= 0.5
        dev = np.abs(filt.freq_values[sel] + 1.0 / filt.freqs[sel])
        assert dev.max() < 1e-12

    def test_reference_values(self, filt):
        assert filt.freq_transfer(1.0) == pytest.approx(-1.0, abs=1e-14)
        assert filt.freq_transfer(-2.0) == pytest.approx(0.5, abs=1e-14)
        assert filt.freq_transfer(0.0) == 0.0

    def test_oddness(self, filt):
        assert np.abs(filt.freq_values + filt.freq_values[::-1]).max() == 0.0
        assert np.abs(filt.time_values + filt.time_values[::-1]).max() == 0.0
        mid = filt.resolution
        assert filt.time_values[mid] == 0.0

    def test_mask_shape(self, filt):
        ws = np.linspace(0.0, 0.5, 64)
        ms = filt.mask(ws)
        assert ms[0] == 0.0
        assert np.all(np.diff(ms) >= 0.0)
        assert filt.mask(0.5) == 1.0
        assert filt.mask(-3.0) == 1.0

    def test_time_grid_transfer_matches_exact_response(self, filt):
        probes = np.array([-4.0, -1.0, -0.5, 0.6, 1.0, 2.5, 8.0])
        dev = np.abs(filt.time_transfer(probes) - filt.freq_transfer(probes))
        assert dev.max() < 1e-8
        assert filt.quadrature_tolerance < 1e-8

    def test_interpolated_transfer_tracks_direct(self, filt):
        probes = np.linspace(-7.0, 7.0, 113)
        dev = np.abs(filt.transfer_at(probes) - filt.time_transfer(probes))
        assert dev.max() < 1e-8

    def test_tail_below_quadrature_threshold(self, filt):
        assert abs(filt.time_values[-1]) < 1e-10

    def test_fourth_differences_stay_bounded_as_resolution_doubles(self):
        sups = []
        for res in (600, 1200):
            f = build_filter(120.0, res)
            dw = f.freqs[1] - f.freqs[0]
            sups.append(np.abs(np.diff(f.freq_values, 4)).max() / dw**4)
        assert np.isfinite(sups).all()
        assert sups[1] < 2.5 * sups[0]

    def test_tail_decays_faster_than_fourth_power(self):
        maxima = []
        for span, res in ((120.0, 2400), (240.0, 4800), (480.0, 9600)):
            f = build_filter(span, res)
            maxima.append(f.tail_max())
        assert maxima[0] / maxima[1] > 16.0
        assert maxima[1] / maxima[2] > 16.0

    def test_coarse_time_step_still_exact(self):
        # the alias-corrected trapezoid does not degrade with the step as
        # long as the spectrum fits inside the alias-free window
        f = build_filter(640.0, 1280)
        assert f.quadrature_tolerance < 1e-8
        assert f.max_frequency == pytest.approx(2 * np.pi / 0.5 - 0.5)

    def test_rejects_hopelessly_coarse_grid(self):
        with pytest.raises(ValueError, match="too coarse"):
            build_filter(40.0, 800)
        with pytest.raises(ValueError, match="positive"):
            build_filter(-3.0)

    def test_transfer_rejects_frequency_beyond_window(self, filt):
        with pytest.raises(ValueError, match="alias-free"):
            filt.time_transfer(filt.max_frequency + 1.0)


class TestQuasiAdiabaticGenerator:
    def test_zero_bump_gives_zero(self, filt):
        path = ContinuationPath(np.diag([0.0, 1.0]), np.zeros((2, 2)), steps=5)
        assert np.abs(quasi_adiabatic_generator(path, 0.4, filt)).max() == 0.0

    def test_two_level_matrix_element(self, filt):
        path = ContinuationPath(np.diag([0.0, 1.0]), PX.astype(complex), steps=5)
        gen = quasi_adiabatic_generator(path, 0.0, filt)
        tol = max(5.0 * filt.quadrature_tolerance, 1e-10)
        assert abs(gen[0, 1] - 1.0) < tol
        assert abs(gen[1, 0] + 1.0) < tol
        assert abs(gen[0, 0]) < tol and abs(gen[1, 1]) < tol

    def test_matrix_elements_on_spread_spectrum(self, filt):
        rng = np.random.default_rng(3)
        evals = np.array([0.0, 0.0, 1.0, 1.5, 3.0])
        v = dense.random_hermitian(5, rng, norm=1.0)
        path = ContinuationPath(np.diag(evals), v, steps=5)
        gen = quasi_adiabatic_generator(path, 0.0, filt)
        tol = max(5.0 * filt.quadrature_tolerance, 1e-10)
        for j in range(5):
            for i in range(5):
                gap = evals[j] - evals[i]
                if abs(gap) >= 0.5:
                    assert abs(gen[j, i] + v[j, i] / gap) < tol

    def test_anti_hermitian(self, toric_setup, filt):
        _, h0, v = toric_setup
        path = ContinuationPath(h0, v, steps=5)
        gen = quasi_adiabatic_generator(path, 0.7, filt)
        assert np.abs(gen + gen.conj().T).max() < 1e-10 * max(1.0, np.abs(gen).max())

    def test_truncated_tail_asks_for_refinement(self):
        coarse = build_filter(80.0, 1600)
        path = ContinuationPath(np.diag([0.0, 1.0]), PX.astype(complex), steps=5)
        with pytest.raises(ValueError, match="refine the filter grid"):
            quasi_adiabatic_generator(path, 0.0, coarse)

    def test_wide_spectrum_asks_for_refinement(self):
        coarse = build_filter(640.0, 1280)
        path = ContinuationPath(np.diag([0.0, 13.0]), PX.astype(complex), steps=5)
        with pytest.raises(ValueError, match="refine the filter grid"):
            quasi_adiabatic_generator(path, 0.0, coarse)


class TestContinueProjector:
    def test_zero_bump_returns_identity(self, filt):
        h0 = np.diag([0.0, 0.0, 1.0, 2.0])
        path = ContinuationPath(h0, np.zeros_like(h0), steps=12)
        res = continue_projector(path, 0, filt)
        assert res.deviation == 0.0
        assert np.abs(res.unitary - np.eye(4)).max() == 0.0
        assert list(res.band_ranks) == [2] * 13

    def test_toric_ground_band_transport(self, toric_cont):
        _, _, _, res = toric_cont
        assert res.deviation < 1e-6
        assert set(res.band_ranks) == {4}
        assert res.min_gap > 0.5
        unitary, deviation = res
        assert deviation == res.deviation
        drift = np.linalg.norm(unitary.conj().T @ unitary - np.eye(unitary.shape[0]), ord=2)
        assert drift < 1e-9

    def test_euler_deviation_halves_when_steps_double(self, toric_setup, filt):
        _, h0, v = toric_setup
        devs = []
        for steps in (50, 100):
            path = ContinuationPath(h0, v, steps=steps, scheme="euler")
            devs.append(continue_projector(path, 0, filt).deviation)
        ratio = devs[1] / devs[0]
        assert 0.4 < ratio < 0.6

    def test_midpoint_beats_euler(self, toric_setup, toric_cont, filt):
        _, h0, v = toric_setup
        path = ContinuationPath(h0, v, steps=50, scheme="euler")
        euler_dev = continue_projector(path, 0, filt).deviation
        assert toric_cont[3].deviation < 0.1 * euler_dev

    def test_callable_band_matches_cluster_selector(self, toric_setup, filt):
        _, h0, v = toric_setup
        path = ContinuationPath(h0, v, steps=8)
        res_int = continue_projector(path, 0, filt)
        res_call = continue_projector(path, lambda s, evals: np.arange(4), filt)
        assert res_call.deviation == pytest.approx(res_int.deviation, rel=1e-9, abs=1e-12)

    def test_gap_closing_path_aborts(self, toric_setup, filt):
        # drag one excited level from 2 down through the gap floor
        _, h0, _ = toric_setup
        evals, evecs = np.linalg.eigh(h0)
        assert evals[4] == pytest.approx(2.0)
        excited = evecs[:, 4]
        sink = -1.8 * np.outer(excited, excited.conj())
        path = ContinuationPath(h0, sink, steps=16)
        with pytest.raises(GapClosedError):
            continue_projector(path, 0, filt)

    def test_missing_band_aborts(self, filt):
        h0 = np.diag([0.0, 1.0])
        path = ContinuationPath(h0, np.zeros_like(h0), steps=4)
        with pytest.raises(GapClosedError, match="does not exist"):
            continue_projector(path, 5, filt)

    def test_path_validation(self):
        with pytest.raises(ValueError, match="Hermitian"):
            ContinuationPath(np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros((2, 2)))
        with pytest.raises(ValueError, match="scheme"):
            ContinuationPath(np.eye(2), np.zeros((2, 2)), scheme="rk4")
        with pytest.raises(ValueError, match="steps"):
            ContinuationPath(np.eye(2), np.zeros((2, 2)), steps=0)


class TestDressedOperators:
    def test_string_pair_relations_survive_dressing(self, toric_cont):
        model, _, _, res = toric_cont
        z_string, x_string = toric_logical_pair(model)
        for gen in model.generators:
            assert commutes(z_string, gen) and commutes(x_string, gen)
        assert not commutes(z_string, x_string)
        zd = dress_operator(dense.pauli_matrix(z_string), res.unitary)
        xd = dress_operator(dense.pauli_matrix(x_string), res.unitary)
        anti = zd @ xd + xd @ zd
        assert np.abs(anti).max() < 1e-10

    def test_dressed_loop_expectation_in_perturbed_ground_state(self, toric_cont):
        model, h0, v, res = toric_cont
        star = model.meta["stars"][(0, 0)]
        loop = dress_operator(dense.pauli_matrix(star), res.unitary)
        evals, evecs = np.linalg.eigh(h0 + v)
        psi = evecs[:, 0]
        val = float(np.real(psi.conj() @ loop @ psi))
        assert abs(val - 1.0) < max(10.0 * res.deviation, 1e-9)

    def test_dress_requires_matching_shapes(self):
        with pytest.raises(ValueError, match="dimensions"):
            dress_operator(np.eye(4), np.eye(2))


@pytest.fixture(scope="module")
def strip(filt):
    lat = Lattice(8, layout="sites")
    row = tuple(lat.qubit_index(x, 0) for x in range(8))
    n = 8
    h0 = np.zeros((1 << n, 1 << n), dtype=complex)
    for i in range(n):
        h0 += dense.embed((I2 - PZ) / 2, [i], n)
    rng = np.random.default_rng(5)
    bump = np.zeros_like(h0)
    for i in range(n - 1):
        bump += dense.embed(dense.random_hermitian(4, rng, norm=0.05), [i, i + 1], n)
    path = ContinuationPath(h0, bump, steps=24)
    res = continue_projector(path, 0, filt)
    return lat, row, res.unitary


class TestDressedLocalityProfile:
    def test_identity_dressing_is_perfectly_local(self, strip):
        lat, row, _ = strip
        center = dense.embed(PX, [4], len(row))
        prof = dressed_locality_profile(lat, [(4, 0)], center,
                                        np.eye(1 << len(row), dtype=complex),
                                        [0, 2, 4], register=row)
        assert all(err == 0.0 for _, err in prof)

    def test_profile_decays_superlinearly(self, strip):
        lat, row, unitary = strip
        center = dense.embed(PX, [4], len(row))
        prof = dressed_locality_profile(lat, [(4, 0)], center, unitary,
                                        range(5), register=row)
        errs = [err for _, err in prof]
        assert errs[4] < 1e-12
        for a, b in zip(errs[:3], errs[1:4]):
            assert b <= 0.25 * a
        assert errs[3] <= 1e-3 * errs[0]

    def test_profile_monotone(self, strip):
        lat, row, unitary = strip
        center = dense.embed(PX, [4], len(row))
        prof = dressed_locality_profile(lat, [(4, 0)], center, unitary,
                                        range(5), register=row)
        errs = [err for _, err in prof]
        assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))

    def test_square_region_and_validation(self, strip):
        lat, row, unitary = strip
        center = dense.embed(PX, [4], len(row))
        square = Square(4, 0, 2, lat.L)
        prof = dressed_locality_profile(lat, square, center, unitary,
                                        [0, 3], register=row)
        assert prof[0][1] >= prof[1][1]
        with pytest.raises(ValueError, match="empty"):
            dressed_locality_profile(lat, [], center, unitary, [0], register=row)
        with pytest.raises(ValueError, match="does not match"):
            dressed_locality_profile(lat, [(4, 0)], np.eye(4), np.eye(4),
                                     [0], register=row)


def _open_chain(n, coupling, field_x=1.1):
    dim = 1 << n
    h = np.zeros((dim, dim), dtype=complex)
    for i in range(n - 1):
        h += coupling * dense.embed(np.kron(PZ, PZ), [i, i + 1], n)
    for i in range(n):
        h += coupling * field_x * dense.embed(PX, [i], n)
    return h


class TestLightCone:
    def test_disjoint_at_time_zero(self):
        h = _open_chain(6, 1.0)
        a = dense.embed(PX, [0], 6)
        b = dense.embed(PX, [4], 6)
        assert lr_commutator_norm(h, a, b, 0.0) == 0.0

    def test_norm_bound_and_profile_consistency(self):
        h = _open_chain(6, 1.0)
        a = dense.embed(PX, [0], 6)
        b = dense.embed(PZ, [3], 6)
        times = np.linspace(0.0, 4.0, 9)
        profile = lr_commutator_profile(h, a, b, times)
        assert np.all(profile <= 2.0 + 1e-9)
        eig = np.linalg.eigh(h)
        singles = [lr_commutator_norm(h, a, b, t, eig=eig) for t in times]
        assert np.allclose(profile, singles, atol=1e-12)

    def test_front_moves_linearly_and_velocity_scales_with_strength(self):
        n = 9
        a = dense.embed(PX, [0], n)
        dists = [3, 5, 7]
        times = np.linspace(0.2, 5.0, 25)
        velocities = []
        for coupling in (1.0, 2.0):
            h = _open_chain(n, coupling)
            eig = np.linalg.eigh(h)
            arrivals = []
            for d in dists:
                b = dense.embed(PX, [d], n)
                prof = lr_commutator_profile(h, a, b, times, eig=eig)
                arr = front_arrival_time(times, prof, threshold=0.01)
                assert arr is not None
                arrivals.append(arr)
            assert arrivals[0] < arrivals[1] < arrivals[2]
            slope = np.polyfit(dists, arrivals, 1)[0]
            assert slope > 0
            velocities.append(1.0 / slope)
        ratio = velocities[1] / velocities[0]
        assert abs(ratio - 2.0) < 0.3

    def test_front_arrival_interpolation(self):
        times = np.array([0.0, 1.0, 2.0])
        norms = np.array([0.0, 0.004, 0.02])
        arr = front_arrival_time(times, norms, threshold=0.01)
        assert arr == pytest.approx(1.0 + 0.006 / 0.016)
        assert front_arrival_time(times, norms, threshold=0.5) is None


class TestInteractionNorm:
    def test_empty_is_zero(self):
        lat = Lattice(6, layout="sites")
        assert interaction_norm_mu(LocalDecomposition(lat), 0.7) == 0.0

    def test_single_term_closed_form(self):
        lat = Lattice(8, layout="sites")
        dec = LocalDecomposition(lat)
        sq = Square(1, 2, 3, lat.L)
        q = lat.region_qubits(sq)[0]
        dec.add(sq, 0.3 * np.eye(2), qubits=[q])
        mu = 0.8
        expected = 0.3 * (1.0 + 4.0) * np.exp(2.0 * mu)
        assert interaction_norm_mu(dec, mu) == pytest.approx(expected, rel=1e-12)

    def test_scaling_and_monotonicity(self):
        lat = Lattice(6, layout="sites")
        rng = np.random.default_rng(9)
        dec = LocalDecomposition(lat)
        for sq in lat.squares(2):
            if rng.random() < 0.5:
                q = lat.region_qubits(sq)[0]
                dec.add(sq, rng.uniform(0.1, 1.0) * np.eye(2), qubits=[q])
        base = interaction_norm_mu(dec, 0.5)
        assert interaction_norm_mu(dec.scaled(3.0), 0.5) == pytest.approx(3.0 * base)
        assert interaction_norm_mu(dec, 1.0) >= base

    def test_decaying_class_is_uniformly_bounded(self):
        # terms saturating (K, mu, alpha=6) on every square; the weighted
        # pair sums must stay below 4K
        strength, mu = 0.7, 0.9
        lat = Lattice(6, layout="sites")
        dec = LocalDecomposition(lat)
        for r in range(2, lat.L + 1):
            for sq in lat.squares(r):
                size = sq.r
                norm = strength * size**-6.0 * np.exp(-mu * size)
                q = lat.region_qubits(sq)[0]
                dec.add(sq, norm * np.eye(2), qubits=[q])
        dec.claimed = DecayClass(strength, mu, 6.0)
        dec.verify_class()
        assert interaction_norm_mu(dec, mu) <= 4.0 * strength
