"""Pauli-transfer-matrix algebra for single-qubit maps.

A channel is represented by the real 4x4 matrix with entries
``M[s, t] = Tr[sigma_s M(sigma_t)] / 2`` over the Pauli basis
(I, X, Y, Z).  Channel composition is matrix multiplication.
Trace-preserving maps have first row (1, 0, 0, 0); the lower-right
3x3 block ``E`` (unital part) describes the linear Bloch-sphere
distortion, and the lower-left 3-vector ``k`` (non-unital part) the
Bloch-sphere displacement.
"""

from __future__ import annotations

import numpy as np

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (PAULI_I, PAULI_X, PAULI_Y, PAULI_Z)

IDENTITY_PTM = np.eye(4)


def ptm_from_unitary(u: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Transfer matrix of the conjugation map rho -> U rho U^dag.

    The result has exact trace-preserving form: first row (1, 0, 0, 0),
    zero displacement and an orthogonal unital block.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise ValueError(f"expected a 2x2 unitary, got shape {u.shape}")
    defect = np.linalg.norm(u.conj().T @ u - np.eye(2))
    if defect > tol:
        raise ValueError(f"input is not unitary: ||U^dag U - I|| = {defect:.3e}")
    ud = u.conj().T
    m = np.empty((4, 4))
    for s in range(4):
        for t in range(4):
            m[s, t] = np.real(0.5 * np.trace(PAULIS[s] @ u @ PAULIS[t] @ ud))
    m[0] = (1.0, 0.0, 0.0, 0.0)
    m[1:, 0] = 0.0
    return m


def compose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Transfer matrix of applying ``b`` first, then ``a``."""
    return a @ b


def sequence_ptm(ptms) -> np.ndarray:
    """Product of transfer matrices, leftmost applied last."""
    out = IDENTITY_PTM
    for m in ptms:
        out = out @ m
    return out


def power(a: np.ndarray, n: int) -> np.ndarray:
    """n-fold repetition of a map, n >= 1, via binary powering."""
    if n < 1:
        raise ValueError(f"repetition count must be >= 1, got {n}")
    return np.linalg.matrix_power(a, n)


def unital_block(m: np.ndarray) -> np.ndarray:
    return np.array(m[1:, 1:])


def nonunital_vector(m: np.ndarray) -> np.ndarray:
    return np.array(m[1:, 0])


def block_ptm(e: np.ndarray, k: np.ndarray | None = None) -> np.ndarray:
    """Assemble a trace-preserving transfer matrix from its blocks."""
    m = np.zeros((4, 4))
    m[0, 0] = 1.0
    m[1:, 1:] = e
    if k is not None:
        m[1:, 0] = k
    return m


def sort_eigenvalues(values: np.ndarray) -> np.ndarray:
    """Deterministic order: descending real part, then descending imaginary."""
    values = np.asarray(values, dtype=complex)
    order = np.lexsort((-values.imag, -values.real))
    return values[order]


def unital_eigenvalues(e: np.ndarray) -> np.ndarray:
    """Eigenvalues of a 3x3 unital block, in deterministic order."""
    return sort_eigenvalues(np.linalg.eigvals(np.asarray(e, dtype=float)))


def cp_bound_margin(e: np.ndarray, k: np.ndarray, imag_tol: float = 1e-10) -> float:
    """Slack of the qubit complete-positivity bound on (E, k).

    Returns (1 - |l1|^2 - |l2|^2 - |l3|^2 + 2 l1 l2 l3) - ||k||^2 using the
    eigenvalues of E; non-negative (up to tolerance) for CP maps.  The
    product term is real for conjugation-closed spectra.
    """
    lam = unital_eigenvalues(e)
    prod = lam[0] * lam[1] * lam[2]
    if abs(prod.imag) > imag_tol:
        raise ValueError(f"eigenvalue product has imaginary residue {prod.imag:.3e}")
    bound = 1.0 - np.sum(np.abs(lam) ** 2) + 2.0 * prod.real
    return float(bound - np.dot(k, k))


def choi_matrix(m: np.ndarray) -> np.ndarray:
    """Choi operator of the map, J = (1/4) sum_st M[s,t] sigma_s (x) sigma_t^T."""
    j = np.zeros((4, 4), dtype=complex)
    for s in range(4):
        for t in range(4):
            if m[s, t] != 0.0:
                j += m[s, t] * np.kron(PAULIS[s], PAULIS[t].T)
    return j / 4.0


def choi_min_eigenvalue(m: np.ndarray) -> float:
    """Smallest Choi eigenvalue; >= 0 (up to tolerance) iff the map is CP."""
    return float(np.linalg.eigvalsh(choi_matrix(m)).min())


def process_fidelity(noisy: np.ndarray, ideal: np.ndarray) -> float:
    return float(np.trace(ideal.T @ noisy) / 4.0)


def average_fidelity(noisy: np.ndarray, ideal: np.ndarray) -> float:
    """Average gate fidelity F = (2 F_pro + 1) / 3 for qubit maps."""
    return (2.0 * process_fidelity(noisy, ideal) + 1.0) / 3.0


def error_rate(noisy: np.ndarray, ideal: np.ndarray) -> float:
    """Error rate p = 1 - F against the ideal (unitary) transfer matrix."""
    return 1.0 - average_fidelity(noisy, ideal)


def spectral_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Largest singular value of a - b."""
    return float(np.linalg.norm(a - b, 2))


def entry_bound_excess(m: np.ndarray) -> float:
    """How far entries stray outside [-1, 1]; <= tolerance for physical maps."""
    return float(np.max(np.abs(m)) - 1.0)


def ptm_to_flat(m: np.ndarray) -> list[float]:
    """16 reals, row-major."""
    return [float(x) for x in np.asarray(m, dtype=float).reshape(-1)]


def ptm_from_flat(values) -> np.ndarray:
    arr = np.asarray(list(values), dtype=float)
    if arr.size != 16:
        raise ValueError(f"expected 16 values, got {arr.size}")
    return arr.reshape(4, 4)


def unitary_to_flat(u: np.ndarray) -> list[float]:
    """8 reals: (re, im) interleaved, row-major."""
    u = np.asarray(u, dtype=complex).reshape(-1)
    out: list[float] = []
    for z in u:
        out.extend((float(z.real), float(z.imag)))
    return out


def unitary_from_flat(values) -> np.ndarray:
    arr = np.asarray(list(values), dtype=float)
    if arr.size != 8:
        raise ValueError(f"expected 8 values, got {arr.size}")
    re = arr[0::2].reshape(2, 2)
    im = arr[1::2].reshape(2, 2)
    return re + 1j * im
