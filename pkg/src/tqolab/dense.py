"""Dense and matrix-free Hilbert-space helpers.

Basis conventions: qubit 0 is the leftmost (most significant) tensor factor,
so basis index ``i`` carries the bit of qubit ``q`` at position ``n-1-q``.
All dense operators are complex128.

Two resource guards apply throughout the package: dense matrices are refused
above ``TQO_MAX_DENSE_DIM`` (default 2**13) rows, and even matrix-free state
vectors are refused above 2**26 entries.
"""

from __future__ import annotations

import os

import numpy as np

from .pauli import PauliOperator

DENSE_CAP_ENV = "TQO_MAX_DENSE_DIM"
DEFAULT_DENSE_CAP = 2**13
MATFREE_CAP = 2**26

_I2 = np.eye(2, dtype=np.complex128)
_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
_XZ = _X @ _Z
_SINGLE = {(0, 0): _I2, (1, 0): _X, (0, 1): _Z, (1, 1): _XZ}


class ResourceCapError(RuntimeError):
    """A computation would exceed the configured Hilbert-space caps."""

    def __init__(self, message, dimension):
        super().__init__(message)
        self.dimension = dimension


def dense_cap() -> int:
    value = os.environ.get(DENSE_CAP_ENV)
    return int(value) if value else DEFAULT_DENSE_CAP


def check_dense(dim: int):
    cap = dense_cap()
    if dim > cap:
        raise ResourceCapError(
            f"dense dimension {dim} exceeds the cap {cap} "
            f"(override with {DENSE_CAP_ENV})", dim)


def check_matfree(dim: int):
    if dim > MATFREE_CAP:
        raise ResourceCapError(
            f"state dimension {dim} exceeds the matrix-free cap {MATFREE_CAP}", dim)


def bitmask(bits: np.ndarray) -> int:
    """Integer mask with the bit of qubit q at position n-1-q."""
    n = bits.shape[0]
    mask = 0
    for q in np.nonzero(bits)[0]:
        mask |= 1 << (n - 1 - int(q))
    return mask


def pauli_matrix(p: PauliOperator) -> np.ndarray:
    """Dense matrix of a Pauli operator (phase included)."""
    check_dense(1 << p.n_qubits)
    out = np.array([[p.phase]], dtype=np.complex128)
    for q in range(p.n_qubits):
        out = np.kron(out, _SINGLE[(int(p.x_bits[q]), int(p.z_bits[q]))])
    return out


def pauli_apply(p: PauliOperator, psi: np.ndarray) -> np.ndarray:
    """Apply a Pauli to a state vector (dim,) or stacked columns (dim, k)."""
    n = p.n_qubits
    dim = 1 << n
    check_matfree(dim)
    if psi.shape[0] != dim:
        raise ValueError("state dimension mismatch")
    xmask = bitmask(p.x_bits)
    zmask = bitmask(p.z_bits)
    src = np.arange(dim) ^ xmask
    signs = 1.0 - 2.0 * (np.bitwise_count(src & zmask) & 1)
    signs = signs.reshape((dim,) + (1,)* (psi.ndim - 1))
    return p.phase * signs * psi[src]


def embed(block: np.ndarray, qubits, n: int) -> np.ndarray:
    """Dense n-qubit operator acting as ``block`` on ``qubits``, identity elsewhere.

    ``block`` is a (2^m, 2^m) matrix whose tensor slot j is qubit ``qubits[j]``.
    """
    qubits = [int(q) for q in qubits]
    m = len(qubits)
    if block.shape != (1 << m, 1 << m):
        raise ValueError("block shape does not match qubit list")
    dim = 1 << n
    check_dense(dim)
    rest = [q for q in range(n) if q not in set(qubits)]
    order = qubits + rest
    full = np.kron(np.asarray(block, dtype=np.complex128), np.eye(1 << (n - m)))
    idx = np.arange(dim)
    k = np.zeros(dim, dtype=np.intp)
    for j, q in enumerate(order):
        k |= ((idx >> (n - 1 - q)) & 1) << (n - 1 - j)
    return full[np.ix_(k, k)]


def apply_block(block: np.ndarray, qubits, psi: np.ndarray) -> np.ndarray:
    """Apply a local operator matrix-free; ``psi`` is (dim,) or (dim, k)."""
    qubits = [int(q) for q in qubits]
    m = len(qubits)
    dim = psi.shape[0]
    n = dim.bit_length() - 1
    check_matfree(dim)
    batch = psi.shape[1:]
    t = psi.reshape((2,) * n + batch)
    t = np.moveaxis(t, qubits, range(m))
    head = t.shape[:m]
    tshape = t.shape
    t = block @ t.reshape(1 << m, -1)
    t = t.reshape(tshape)
    t = np.moveaxis(t, range(m), qubits)
    return t.reshape((dim,) + batch)


def partial_trace(mat: np.ndarray, keep, n: int) -> np.ndarray:
    """Trace out all qubits except ``keep`` (result slots follow keep order)."""
    keep = [int(q) for q in keep]
    k = len(keep)
    rest = [q for q in range(n) if q not in set(keep)]
    t = mat.reshape((2,) * (2 * n))
    row_perm = keep + rest
    perm = row_perm + [n + q for q in row_perm]
    t = t.transpose(perm)
    t = t.reshape(1 << k, 1 << (n - k), 1 << k, 1 << (n - k))
    return np.einsum("ajbj->ab", t)


def hermitize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.conj().T)


def kernel_projector(h: np.ndarray, rel_tol: float = 1e-10):
    """Orthogonal projector onto the zero eigenspace of a PSD Hermitian matrix.

    Returns ``(projector, kernel_dim)``. The cutoff is relative to the
    largest eigenvalue magnitude (with an absolute floor for a zero matrix).
    """
    w, v = np.linalg.eigh(hermitize(h))
    thr = rel_tol * max(float(np.abs(w).max()), 1.0)
    sel = np.abs(w) <= thr
    k = v[:, sel]
    return k @ k.conj().T, int(sel.sum())


def operator_norm(mat: np.ndarray, tol: float = 1e-8, seed: int = 7) -> float:
    """Spectral norm; exact below 2**10, power iteration above.

    Power iteration runs on M^dagger M from a seeded start until the
    Rayleigh estimate is stable to ``tol`` (relative).
    """
    mat = np.asarray(mat)
    dim = max(mat.shape)
    if dim <= 1024:
        return float(np.linalg.norm(mat, 2))
    return operator_norm_matfree(
        lambda v: mat @ v, lambda v: mat.conj().T @ v, mat.shape[1], tol=tol, seed=seed
    )


def operator_norm_matfree(apply, apply_adj, dim: int, tol: float = 1e-8,
                          seed: int = 7, max_iter: int = 500) -> float:
    """Largest singular value of a linear map given by matvec callables.

    Power iteration on M^dagger M from a seeded start; stops when the
    singular-value estimate is stable to ``tol`` relative.
    """
    rng = np.random.default_rng(seed)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        u = apply_adj(apply(v))
        lam = np.linalg.norm(u)  # ~ sigma_max^2 once v aligns
        if lam == 0.0:
            return 0.0
        v = u / lam
        sigma = float(np.sqrt(lam))
        if est > 0 and abs(sigma - est) <= tol * est:
            return sigma
        est = sigma
    return float(est)


def random_hermitian(dim: int, rng: np.random.Generator, norm: float | None = None) -> np.ndarray:
    """GUE-style random Hermitian matrix, optionally rescaled to a target norm."""
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = hermitize(a) / np.sqrt(2.0)
    if norm is not None:
        current = float(np.abs(np.linalg.eigvalsh(h)).max()) if dim <= 1024 else operator_norm(h)
        if current > 0:
            h *= norm / current
    return h


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_state(dim: int, rng: np.random.Generator, k: int | None = None) -> np.ndarray:
    shape = (dim,) if k is None else (dim, k)
    psi = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return psi / np.linalg.norm(psi, axis=0)
