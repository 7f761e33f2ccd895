"""Random Markovian noise: generator sampling, calibration, gauge transforms.

Noisy gates are built as ``exp(G t) @ ideal`` where ``G`` is the transfer
matrix of a randomly drawn generator (Hamiltonian part plus a dissipator
in Gram form).  Generators are normalized to unit spectral norm so that
the evolution time alone sets the error scale; the time is then found by
bisection against a target error rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .ptm import PAULIS, error_rate

MAX_BRACKET_DOUBLINGS = 20
MAX_BISECTIONS = 200


class CalibrationError(RuntimeError):
    """Raised when no evolution time reaches the requested error rate."""


@dataclass(frozen=True)
class LindbladGenerator:
    """Hamiltonian coefficients over (X, Y, Z) plus a PSD dissipator matrix."""

    hamiltonian: np.ndarray
    dissipator: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.dissipator)
        herm = np.linalg.norm(h - h.conj().T)
        if herm > 1e-12:
            raise ValueError(f"dissipator not Hermitian: residue {herm:.3e}")
        lo = float(np.linalg.eigvalsh(h).min())
        if lo < -1e-12:
            raise ValueError(f"dissipator not PSD: min eigenvalue {lo:.3e}")

    def action(self, rho: np.ndarray) -> np.ndarray:
        """Generator applied to a 2x2 operator."""
        c = self.hamiltonian
        ham = c[0] * PAULIS[1] + c[1] * PAULIS[2] + c[2] * PAULIS[3]
        out = -1j * (ham @ rho - rho @ ham)
        h = self.dissipator
        for a in range(3):
            sa = PAULIS[a + 1]
            for b in range(3):
                sb = PAULIS[b + 1]
                out = out + h[a, b] * (
                    sa @ rho @ sb - 0.5 * (sb @ sa @ rho + rho @ sb @ sa)
                )
        return out


def generator_ptm(gen: LindbladGenerator) -> np.ndarray:
    """Transfer matrix of the generator; first row identically zero."""
    g = np.empty((4, 4))
    for t in range(4):
        img = gen.action(PAULIS[t])
        for s in range(4):
            g[s, t] = np.real(0.5 * np.trace(PAULIS[s] @ img))
    g[0] = 0.0  # trace preservation, exact by construction
    return g


def random_generator(rng: np.random.Generator) -> LindbladGenerator:
    """Draw a generator and rescale it to unit spectral norm.

    Hamiltonian coefficients are standard normal; the dissipator is a
    complex Wishart matrix G G^dag.  Both parts share one scale factor so
    the normalization does not bias the mix of coherent and incoherent
    noise.
    """
    coeffs = rng.standard_normal(3)
    gram = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    diss = gram @ gram.conj().T
    raw = LindbladGenerator(coeffs, diss)
    scale = np.linalg.norm(generator_ptm(raw), 2)
    return LindbladGenerator(coeffs / scale, diss / scale)


def flow_ptm(gen: LindbladGenerator, t: float) -> np.ndarray:
    """Transfer matrix exp(G t), with the trace-preserving row pinned."""
    m = expm(generator_ptm(gen) * t)
    m[0] = (1.0, 0.0, 0.0, 0.0)
    return m


def calibrate_time(
    gen: LindbladGenerator,
    ideal: np.ndarray,
    target_p: float,
    rel_tol: float = 1e-3,
) -> tuple[float, float]:
    """Find t with error_rate(exp(G t) @ ideal, ideal) = target_p.

    Returns (t, achieved error rate).  The bracket starts at [0, 1] and
    the upper end doubles until it crosses the target.
    """
    if not 0.0 < target_p < 0.5:
        raise ValueError(f"target error rate must be in (0, 0.5), got {target_p}")

    def achieved(t: float) -> float:
        return error_rate(flow_ptm(gen, t) @ ideal, ideal)

    hi = 1.0
    for _ in range(MAX_BRACKET_DOUBLINGS):
        if achieved(hi) >= target_p:
            break
        hi *= 2.0
    else:
        raise CalibrationError(
            f"error rate stays below {target_p} up to t = {hi}; "
            f"generator hamiltonian={gen.hamiltonian.tolist()}"
        )
    lo = 0.0
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        p = achieved(mid)
        if abs(p - target_p) <= rel_tol * target_p:
            return mid, p
        if p >= target_p:
            hi = mid
        else:
            lo = mid
    raise CalibrationError(
        f"bisection did not converge to {target_p} "
        f"(bracket [{lo}, {hi}], last p = {p})"
    )


@dataclass(frozen=True)
class NoisyGateDraw:
    """A calibrated noisy gate with everything needed to regenerate it."""

    ptm: np.ndarray
    generator: LindbladGenerator
    t_star: float
    achieved_p: float


def noisy_gate(
    ideal: np.ndarray, target_p: float, rng: np.random.Generator
) -> NoisyGateDraw:
    """Random noisy version of an ideal gate at a prescribed error rate."""
    gen = random_generator(rng)
    t_star, achieved = calibrate_time(gen, ideal, target_p)
    m = flow_ptm(gen, t_star) @ ideal
    m[0] = (1.0, 0.0, 0.0, 0.0)
    return NoisyGateDraw(m, gen, t_star, achieved)


def regenerate_gate(gen: LindbladGenerator, t_star: float, ideal: np.ndarray) -> np.ndarray:
    m = flow_ptm(gen, t_star) @ ideal
    m[0] = (1.0, 0.0, 0.0, 0.0)
    return m


def random_gauge_transform(
    rng: np.random.Generator, target_p: float = 0.1
) -> np.ndarray:
    """Random invertible frame mismatch, calibrated to error rate 0.1.

    Built as the flow of a fresh random generator, so it carries the
    block form of a trace-preserving map with an invertible unital block.
    """
    draw = noisy_gate(np.eye(4), target_p, rng)
    return draw.ptm


def sample_error_rates(
    rng: np.random.Generator, low: float, high: float, size: int | None = None
):
    """Log-uniform error-rate draws over [low, high]."""
    if not 0 < low <= high:
        raise ValueError(f"invalid error-rate range [{low}, {high}]")
    return 10.0 ** rng.uniform(np.log10(low), np.log10(high), size)


def spawn_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent stream derived from a master seed and an index path."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))
