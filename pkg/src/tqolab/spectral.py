"""Exact low-lying spectra, integer-band containment, and sector sweeps.

For a commuting-projector model the unperturbed spectrum sits on the
nonnegative integers. A weak extensive perturbation of strength J moves
each integer level k into a band

    I_k = [k(1 - c1 J) - delta, k(1 + c1 J) + delta]

up to an overall energy shift. This module computes low spectra (dense or
iterative), assigns eigenvalues to bands, verifies containment, fits the
band-growth coefficient c1 from data, computes relative bounds of
kernel-annihilating perturbations, and sweeps the field-driven sector
crossing of the paired-plaquette model without forming any state vectors.
"""

from dataclasses import dataclass, field

import numpy as np

from .dense import check_dense, dense_cap, hermitize, kernel_projector
from .lattice import Square
from .models import Model, HamiltonianOperator, hamiltonian_operator
from .dense import pauli_matrix

DEGENERACY_REL_TOL = 1e-10


# -- low spectra ---------------------------------------------------------------


def _as_operator(h):
    """Normalize to (apply, dimension, dense_or_none)."""
    if isinstance(h, np.ndarray):
        return (lambda v: h @ v), h.shape[0], h
    if isinstance(h, HamiltonianOperator):
        return h.apply, h.dimension, None
    # scipy LinearOperator or anything with matvec/shape
    return (lambda v: h @ v), h.shape[0], None


def low_spectrum(h, count: int, method: str = "auto",
                 tol: float = 0.0) -> np.ndarray:
    """The ``count`` smallest eigenvalues, ascending.

    Dense below the dense cap (or when given an ndarray), restarted Krylov
    above it. Non-convergence raises with the residual norms attached.
    """
    apply_h, dim, mat = _as_operator(h)
    if count < 1:
        raise ValueError("count must be >= 1")
    count = min(count, dim)
    if method not in ("auto", "dense", "iterative"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        method = "dense" if (mat is not None or dim <= dense_cap()) else "iterative"
    if method == "dense":
        if mat is None:
            check_dense(dim)
            mat = apply_h(np.eye(dim, dtype=complex))
        return np.linalg.eigvalsh(hermitize(mat))[:count]
    from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

    op = LinearOperator((dim, dim), matvec=apply_h, dtype=complex)
    k = min(count, dim - 1)
    try:
        vals = eigsh(op, k=k, which="SA", tol=tol,
                     return_eigenvectors=False)
    except ArpackNoConvergence as err:
        got = np.sort(err.eigenvalues)
        raise RuntimeError(
            f"Krylov solver converged only {got.size}/{k} eigenvalues; "
            f"partial values {got}") from err
    vals = np.sort(vals)
    if k < count:  # count == dim: top one comes from trace identity? just densify
        check_dense(dim)
        return np.linalg.eigvalsh(hermitize(apply_h(np.eye(dim, dtype=complex))))
    return vals


def cluster_degenerate(vals, rel_tol: float = DEGENERACY_REL_TOL):
    """Group sorted eigenvalues into degenerate clusters.

    Returns a list of (representative mean, multiplicity). The split
    threshold is relative to the overall spectral scale.
    """
    vals = np.sort(np.asarray(vals, dtype=float))
    if vals.size == 0:
        return []
    scale = max(float(np.abs(vals).max()), 1.0)
    out = []
    start = 0
    for i in range(1, vals.size + 1):
        if i == vals.size or vals[i] - vals[i - 1] > rel_tol * scale:
            chunk = vals[start:i]
            out.append((float(chunk.mean()), int(chunk.size)))
            start = i
    return out


# -- band reports ----------------------------------------------------------------


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray          # raw, ascending
    h0_levels: tuple                 # distinct unperturbed integer levels
    shift: float                     # added to raw eigenvalues before banding
    delta: float                     # half-width of the ground band
    band_assignments: list           # one level per eigenvalue
    gaps: list = field(default_factory=list)   # (k, k_next, gap)

    @property
    def shifted(self) -> np.ndarray:
        return self.eigenvalues + self.shift

    def band_members(self, k) -> np.ndarray:
        sel = [i for i, b in enumerate(self.band_assignments) if b == k]
        return self.shifted[sel]

    def occupied_levels(self):
        return sorted(set(self.band_assignments))

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "h0_levels": [int(k) for k in self.h0_levels],
            "shift": self.shift,
            "delta": self.delta,
            "band_assignments": list(self.band_assignments),
            "gaps": [(int(a), int(b), float(g)) for a, b, g in self.gaps],
        }


def make_spectral_report(h0_levels, eigenvalues) -> SpectralReport:
    """Assign eigenvalues to unperturbed levels after the canonical shift.

    The shift centers the ground band at zero: the ground band is read off
    as everything within 1/2 of the smallest eigenvalue, its half-spread
    becomes delta, and the lowest band edge maps to -delta.
    """
    vals = np.sort(np.asarray(eigenvalues, dtype=float))
    levels = tuple(sorted(int(k) for k in set(h0_levels)))
    if not levels:
        raise ValueError("need at least one unperturbed level")
    ground = vals[vals <= vals[0] + 0.5]
    delta = float(ground.max() - ground.min()) / 2
    center = float(ground.min() + delta)
    shift = levels[0] - center
    shifted = vals + shift
    arr = np.asarray(levels, dtype=float)
    assignments = [int(levels[int(np.argmin(np.abs(arr - v)))])
                   for v in shifted]
    gaps = []
    occupied = sorted(set(assignments))
    for a, b in zip(occupied, occupied[1:]):
        top = max(shifted[i] for i, k in enumerate(assignments) if k == a)
        bottom = min(shifted[i] for i, k in enumerate(assignments) if k == b)
        gaps.append((a, b, float(bottom - top)))
    return SpectralReport(vals, levels, shift, delta, assignments, gaps)


@dataclass
class BandCheck:
    per_eigenvalue: list             # bool per eigenvalue
    gap_checks: list                 # (k, k_next, gap, required, ok)
    c1: float
    J: float
    delta: float

    @property
    def all_contained(self) -> bool:
        return all(self.per_eigenvalue)

    @property
    def all_gaps_ok(self) -> bool:
        return all(ok for *_, required, ok in self.gap_checks if required)

    @property
    def verdict(self) -> bool:
        return self.all_contained and self.all_gaps_ok


def verify_bands(report: SpectralReport, J: float, c1: float,
                 delta: float = None) -> BandCheck:
    """Check every eigenvalue against its band and the inter-band gaps.

    Band k covers [k(1-c1 J) - delta, k(1+c1 J) + delta]. The gap between
    consecutive occupied bands must stay above 1/2 whenever J is below the
    level's closing threshold 1/(c1 (4k+2)).
    """
    if delta is None:
        delta = report.delta
    per = []
    for v, k in zip(report.shifted, report.band_assignments):
        lo = k * (1 - c1 * J) - delta
        hi = k * (1 + c1 * J) + delta
        per.append(bool(lo - 1e-12 <= v <= hi + 1e-12))
    gap_checks = []
    for a, b, gap in report.gaps:
        j_close = 1.0 / (c1 * (4 * a + 2)) if c1 > 0 else np.inf
        required = J < j_close
        gap_checks.append((a, b, gap, required, bool(gap >= 0.5)))
    return BandCheck(per, gap_checks, c1, J, delta)


def fit_c1(report: SpectralReport, J: float) -> float:
    """Smallest growth coefficient making every band contain its members."""
    if J <= 0:
        return 0.0
    worst = 0.0
    for v, k in zip(report.shifted, report.band_assignments):
        if k == 0:
            continue
        need = (abs(v - k) - report.delta) / (k * J)
        worst = max(worst, need)
    return worst


def max_band_displacement(report: SpectralReport) -> float:
    """Largest distance of any eigenvalue from its assigned level."""
    return max(abs(v - k) for v, k in
               zip(report.shifted, report.band_assignments))


# -- relative bounds ---------------------------------------------------------------


def relative_bound(w: np.ndarray, h0: np.ndarray, kernel_rel_tol: float = 1e-10,
                   return_vector: bool = False):
    """Smallest b with ||W psi|| <= b ||H0 psi|| for all states.

    Finite only when W annihilates the kernel of H0; otherwise returns
    infinity. Computed from the largest singular value of W H0^+ restricted
    to the complement of the kernel.
    """
    h0 = hermitize(h0)
    vals, vecs = np.linalg.eigh(h0)
    scale = max(float(np.abs(vals).max()), 1.0)
    in_kernel = np.abs(vals) <= kernel_rel_tol * scale
    wnorm = max(float(np.linalg.norm(w, ord=2)), 1e-300)
    vker = vecs[:, in_kernel]
    if vker.size and float(np.linalg.norm(w @ vker, ord=2)) > 1e-9 * wnorm:
        if return_vector:
            return np.inf, None
        return np.inf
    comp = vecs[:, ~in_kernel]
    lam = vals[~in_kernel]
    if lam.size == 0:
        return (0.0, None) if return_vector else 0.0
    t = (w @ comp) / lam  # columns W v_i / lambda_i
    m = hermitize(t.conj().T @ t)
    mw, mv = np.linalg.eigh(m)
    b = float(np.sqrt(max(mw[-1], 0.0)))
    if not return_vector:
        return b
    u = mv[:, -1]
    psi = comp @ (u / lam)
    psi = psi / np.linalg.norm(psi)
    return b, psi


@dataclass
class ContainmentResult:
    ok: bool
    skipped: bool
    b: float
    violations: list                 # (eigenvalue, distance to nearest interval)
    note: str = ""


def spectrum_containment_check(h0: np.ndarray, w: np.ndarray, b: float,
                               atol: float = 1e-9) -> ContainmentResult:
    """Every eigenvalue of H0+W must lie in some [l(1-b), l(1+b)] interval
    of an unperturbed eigenvalue l. Requires b < 1 to be meaningful."""
    if not np.isfinite(b) or b >= 1:
        return ContainmentResult(True, True, float(b), [],
                                 "bound b >= 1: containment not implied")
    base = np.linalg.eigvalsh(hermitize(h0))
    pert = np.linalg.eigvalsh(hermitize(h0 + w))
    reps = [v for v, _ in cluster_degenerate(base)]
    violations = []
    for v in pert:
        dist = min(
            max(l * (1 - b) - v, v - l * (1 + b), 0.0) if l >= 0
            else max(l * (1 + b) - v, v - l * (1 - b), 0.0)
            for l in reps)
        if dist > atol:
            violations.append((float(v), float(dist)))
    return ContainmentResult(not violations, False, float(b), violations)


# -- syndrome sectors ----------------------------------------------------------------


@dataclass(frozen=True)
class SyndromeSector:
    """A 0/1 assignment to every term square: 1 marks an excited square."""

    assignment: tuple                # sorted ((square, 0/1), ...)

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(sorted(d.items(), key=lambda kv: (kv[0].r, kv[0].x,
                                                           kv[0].y))))

    @property
    def n_defects(self) -> int:
        return sum(v for _, v in self.assignment)

    def projector(self, model: Model) -> np.ndarray:
        dim = 2 ** model.n_qubits
        check_dense(dim)
        out = np.eye(dim, dtype=complex)
        eye = np.eye(dim, dtype=complex)
        for sq, s in self.assignment:
            pa = eye.copy()
            for g in model.generators_on(sq):
                pa = pa @ (eye + pauli_matrix(g)) / 2
            out = out @ (eye - pa if s else pa)
        return out


def enumerate_sectors(model: Model):
    """All 2^m syndrome assignments over the model's term squares."""
    from itertools import product as iproduct

    squares = list(model.terms)
    for bits in iproduct((0, 1), repeat=len(squares)):
        yield SyndromeSector.from_dict(dict(zip(squares, bits)))


# -- sector sweep for the paired-plaquette model ---------------------------------------


def _uniform_energy(model: Model, sign: int, h: float) -> float:
    """Energy of the uniform all-(sign) plaquette sector with quiet stars."""
    n_pairs = sum(1 for k in model.meta["kinds"] if k[0] == "pair")
    n_stars = len(model.meta["stars"])
    n_p = len(model.meta["plaquettes"])
    return -n_pairs - n_stars - sign + h * sign * n_p


def _plaquette_config_energy(model: Model, sigma: np.ndarray, h: float) -> float:
    """Signed-convention energy of a plaquette configuration (stars quiet).

    ``sigma`` is an (L, L) array of +-1 plaquette eigenvalues.
    """
    e = 0.0
    for kind in model.meta["kinds"]:
        if kind[0] == "pair":
            (x1, y1), (x2, y2) = kind[1], kind[2]
            e -= sigma[x1, y1] * sigma[x2, y2]
        elif kind[0] == "bare":
            x, y = kind[1]
            e -= sigma[x, y]
    e -= len(model.meta["stars"])
    e += h * float(sigma.sum())
    return e


def _min_sector_brute(model: Model, h: float):
    """Exhaustive minimum over even-parity plaquette configurations."""
    L = model.lattice.L
    n = L * L
    best, best_cfg = np.inf, None
    for bits in range(1 << n):
        if bin(bits).count("1") % 2:
            continue
        sigma = 1.0 - 2.0 * np.array(
            [(bits >> i) & 1 for i in range(n)], dtype=float).reshape(L, L)
        e = _plaquette_config_energy(model, sigma, h)
        if e < best - 1e-15:
            best, best_cfg = e, sigma
    return best, best_cfg


def _min_sector_dp(model: Model, h: float):
    """Column transfer minimum over even-parity plaquette configurations.

    Valid for L >= 3 where the four neighbor bonds of each plaquette are
    distinct; the L = 2 wrap needs the exhaustive path.
    """
    L = model.lattice.L
    px, py = model.meta["pstar"]
    ns = 1 << L
    states = np.arange(ns)
    bits = ((states[:, None] >> np.arange(L)[None, :]) & 1).astype(np.int8)
    sigma = 1.0 - 2.0 * bits                       # (ns, L) of +-1
    vert = -np.einsum("sy,sy->s", sigma, np.roll(sigma, -1, axis=1))
    fsum = sigma.sum(axis=1)
    parity = bits.sum(axis=1) & 1
    # horizontal bond cost between column states s (left) and t (right)
    hcost = -(sigma @ sigma.T)                     # (ns, ns)

    def column_cost(x, st):
        c = vert[st] + h * fsum[st]
        if x == px:
            c = c - sigma[st, py]
        return c

    best, best_cfg = np.inf, None
    for c0 in range(ns):
        # dp[s, p]: min cost of columns 0..x with column x in state s and
        # minus-count parity p so far
        dp = np.full((ns, 2), np.inf)
        dp[c0, parity[c0]] = column_cost(0, c0)
        back = np.zeros((L, ns, 2), dtype=np.int32)
        for x in range(1, L):
            cand = dp[:, None, :] + hcost[:, :, None]   # (s, t, p)
            arg = np.argmin(cand, axis=0)                # (t, p)
            val = np.take_along_axis(cand, arg[None], axis=0)[0]
            new = np.full((ns, 2), np.inf)
            add = column_cost(x, states)
            for t in range(ns):
                for p in range(2):
                    q = (p + parity[t]) & 1
                    c = val[t, p] + add[t]
                    if c < new[t, q]:
                        new[t, q] = c
                        back[x, t, q] = arg[t, p]
            dp = new
        close = dp[:, 0] + hcost[:, c0]                  # want total parity 0
        s_last = int(np.argmin(close))
        total = float(close[s_last]) - len(model.meta["stars"])
        if total < best - 1e-15:
            # backtrack the winning column sequence
            cols = [0] * L
            cols[L - 1] = s_last
            p = 0
            for x in range(L - 1, 0, -1):
                prev = int(back[x, cols[x], p])
                p = (p - parity[cols[x]]) & 1
                cols[x - 1] = prev
            cfg = np.empty((L, L))
            for x, st in enumerate(cols):
                cfg[x, :] = sigma[st]
            best, best_cfg = total, cfg
    return best, best_cfg


def min_sector_energy(model: Model, h: float):
    """Exact minimum sector energy and the minimizing plaquette pattern."""
    if model.meta.get("kind") != "unstable-toric":
        raise ValueError("sector sweep is defined for the paired-plaquette "
                         "model")
    if model.lattice.L == 2:
        return _min_sector_brute(model, h)
    return _min_sector_dp(model, h)


@dataclass
class SectorSweepResult:
    h_values: list
    energies: list
    labels: list                     # "uniform+", "uniform-", or "mixed"
    crossing: float                  # exact line crossing of the two sectors
    bracket: tuple                   # (h_lo, h_hi) where the label flips

    def to_dict(self):
        return {"h_values": self.h_values, "energies": self.energies,
                "labels": self.labels, "crossing": self.crossing,
                "bracket": self.bracket}


def sector_gap_sweep(model: Model, h_values) -> SectorSweepResult:
    """Ground-sector energies across field strengths plus the crossing.

    Each sector's energy is linear in h, so the exact crossing comes from
    intersecting the two bracketing sectors' lines once the sweep finds the
    flip. No state vectors are formed; only plaquette sign patterns.
    """
    h_values = sorted(float(h) for h in h_values)
    energies, labels, configs = [], [], []
    L = model.lattice.L
    for h in h_values:
        e, cfg = min_sector_energy(model, h)
        energies.append(e)
        configs.append(cfg)
        if np.all(cfg > 0):
            labels.append("uniform+")
        elif np.all(cfg < 0):
            labels.append("uniform-")
        else:
            labels.append("mixed")
    crossing, bracket = None, None
    for i in range(1, len(h_values)):
        if labels[i] != labels[i - 1] and crossing is None:
            bracket = (h_values[i - 1], h_values[i])
            # each config's energy is A + B h with B the field coupling
            c_lo, c_hi = configs[i - 1], configs[i]
            b_lo, b_hi = float(c_lo.sum()), float(c_hi.sum())
            a_lo = _plaquette_config_energy(model, c_lo, 0.0)
            a_hi = _plaquette_config_energy(model, c_hi, 0.0)
            if abs(b_lo - b_hi) > 1e-12:
                crossing = (a_hi - a_lo) / (b_lo - b_hi)
    return SectorSweepResult(h_values, energies, labels, crossing, bracket)
