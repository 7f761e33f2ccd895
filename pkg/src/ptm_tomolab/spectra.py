"""Eigenvalue and trace estimation from repeated-gate power sums.

The three unital eigenvalues of a map are recovered from measured traces
of its n-, 2n- and 3n-fold repetitions: the traces give the power sums of
the eigenvalues raised to n, Newton's identities turn the power sums into
a cubic, and its roots are the powered eigenvalues.  Taking n-th roots
reintroduces a branch ambiguity (solutions spaced 2*pi/n in phase), which
is resolved by walking an exponentially growing schedule of n and keeping,
at each step, the root branch closest to the previous estimate.

The estimate of the map's trace is 1 plus the eigenvalue sum from the
last schedule step, where the accumulated repetition suppresses the
sampling noise the most.  Closed-form derivatives of that estimate with
respect to the measured traces give its analytic variance, including the
limits where eigenvalues coincide.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .oracle import SequenceSpec
from .ptm import sort_eigenvalues

ROOT_COLLISION_TOL = 1e-3
AMBIGUITY_REL_TOL = 0.1
CONJUGATION_TOL = 1e-6
DEGENERACY_TOL = 1e-6


class AmbiguousTrackingError(RuntimeError):
    """Two branch assignments are too close to call; the schedule grew too fast."""


class DegenerateSystemError(RuntimeError):
    """Powered eigenvalues nearly collide; the inversion is ill-conditioned here."""


@dataclass(frozen=True)
class TraceSchedule:
    """Strictly increasing repetition counts, all congruent to 1 mod period."""

    period: int
    k_max: int
    values: tuple[int, ...]


def build_schedule(period: int, p_hint: float, cap: int | None = None) -> TraceSchedule:
    """Repetition schedule m*floor(2^k/m) + 1 for k = 0 .. floor(log2(0.4/p)).

    The first value is always 1: for period m = 1 (maps with no finite
    ideal period) the k = 0 entry would be 2, so 1 is prepended.
    """
    if period < 1:
        raise ValueError(f"period must be >= 1, got {period}")
    if not 0.0 < p_hint < 0.5:
        raise ValueError(f"error-rate hint must be in (0, 0.5), got {p_hint}")
    k_max = max(0, math.floor(math.log2(0.4 / p_hint)))
    values = {period * (2**k // period) + 1 for k in range(k_max + 1)}
    values.add(1)
    if cap is not None:
        values = {n for n in values if n <= cap} or {1}
    return TraceSchedule(period, k_max, tuple(sorted(values)))


def power_sums_to_candidates(t_n: float, t_2n: float, t_3n: float) -> np.ndarray:
    """Roots of the cubic whose first three power sums are the inputs.

    Newton's identities give the elementary symmetric polynomials
    e1 = t_n, e2 = (t_n^2 - t_2n)/2, e3 = (t_n^3 - 3 t_n t_2n + 2 t_3n)/6;
    the roots of x^3 - e1 x^2 + e2 x - e3 are the powered eigenvalues.
    """
    e1 = t_n
    e2 = (t_n**2 - t_2n) / 2.0
    e3 = (t_n**3 - 3.0 * t_n * t_2n + 2.0 * t_3n) / 6.0
    return np.roots([1.0, -e1, e2, -e3])


def branch_root(mu: complex, reference: complex, n: int) -> complex:
    """The n-th root of mu on the branch closest in phase to the reference.

    Branches are spaced 2*pi/n, so the index minimizing the phase distance
    is j = round((n*arg(reference) - arg(mu)) / (2*pi)) in closed form.
    """
    if n == 1:
        return complex(mu)
    radius = abs(mu) ** (1.0 / n)
    theta = cmath.phase(mu)
    j = round((n * cmath.phase(reference) - theta) / (2.0 * math.pi))
    return radius * cmath.exp(1j * (theta + 2.0 * math.pi * j) / n)


def symmetrize_conjugate_triple(values, tol: float = CONJUGATION_TOL) -> np.ndarray:
    """Project a near-conjugation-closed triple onto an exactly closed one.

    Matches the multiset against its conjugate (best of the 6 pairings) and
    averages matched partners; raises if the residual exceeds ``tol``.
    """
    vals = np.asarray(values, dtype=complex)
    conj = vals.conj()
    best = None
    for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        dist = sum(abs(vals[i] - conj[perm[i]]) for i in range(3))
        if best is None or dist < best[0]:
            best = (dist, perm)
    residual, perm = best
    if residual > 3 * tol:
        raise AmbiguousTrackingError(
            f"eigenvalue triple is not conjugation-closed (residual {residual:.3e})"
        )
    out = 0.5 * (vals + conj[list(perm)])
    # averaging leaves conjugate partners exactly paired; kill rounding dust
    for i in range(3):
        if perm[i] == i:
            out[i] = out[i].real
    return sort_eigenvalues(out)


@dataclass(frozen=True)
class TrackStep:
    n: int
    eigenvalues: np.ndarray
    confidence_radius: float


@dataclass
class TrackState:
    eigenvalues: np.ndarray
    n: int
    history: list[TrackStep] = field(default_factory=list)


_PERMS = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))


def track_step(
    state: TrackState | None,
    candidates: np.ndarray,
    n: int,
    ambiguity_rel: float = AMBIGUITY_REL_TOL,
) -> TrackState:
    """Advance the tracked eigenvalue triple to repetition count n.

    Considers the six assignments of cubic roots to the previous triple,
    takes per-pair closest root branches, and keeps the assignment with
    the smallest total movement.  Two assignments yielding materially
    different triples at comparable distance signal that the schedule
    outran the tracking and raise :class:`AmbiguousTrackingError`.
    """
    candidates = np.asarray(candidates, dtype=complex)
    confidence = 3.0 * math.pi / n
    if state is None:
        if n != 1:
            raise ValueError("tracking must start at repetition count 1")
        triple = symmetrize_conjugate_triple(candidates)
        step = TrackStep(1, triple, confidence)
        return TrackState(triple, 1, [step])

    scored = []
    for perm in _PERMS:
        new = np.array(
            [
                branch_root(candidates[perm[i]], state.eigenvalues[i], n)
                for i in range(3)
            ]
        )
        dist = float(np.sum(np.abs(new - state.eigenvalues)))
        scored.append((dist, new))
    scored.sort(key=lambda item: item[0])
    best_dist, best = scored[0]
    for dist, other in scored[1:]:
        if np.allclose(np.sort_complex(other), np.sort_complex(best), atol=1e-12):
            continue  # same multiset, not a genuine alternative
        if (
            dist <= confidence
            and best_dist <= confidence
            and dist - best_dist < ambiguity_rel * max(best_dist, 1e-300)
        ):
            raise AmbiguousTrackingError(
                f"branch assignment ambiguous at n = {n}: "
                f"totals {best_dist:.3e} vs {dist:.3e}"
            )
        break

    triple = symmetrize_conjugate_triple(best)
    step = TrackStep(n, triple, confidence)
    return TrackState(triple, n, state.history + [step])


def predicted_root_collision(
    eigenvalues: np.ndarray, n: int, tol: float = ROOT_COLLISION_TOL
) -> bool:
    """Would distinct tracked eigenvalues collide once raised to the n-th power?

    Repetition counts where that happens make the cubic inversion singular
    and must be skipped; genuinely degenerate eigenvalues are fine.
    """
    lam = np.asarray(eigenvalues, dtype=complex)
    with np.errstate(over="ignore", invalid="ignore"):
        mu = lam**n
    for i in range(3):
        for j in range(i + 1, 3):
            if abs(lam[i] - lam[j]) >= tol and abs(mu[i] - mu[j]) < tol:
                return True
    return False


@dataclass
class TraceRunRow:
    n: int
    t_n: float
    t_2n: float
    t_3n: float
    eigenvalues: np.ndarray
    trace: float
    predicted_var: float


@dataclass
class TraceEstimate:
    trace: float
    eigenvalues: np.ndarray
    n_final: int
    schedule: TraceSchedule
    rows: list[TraceRunRow]
    skipped: list[int]


def estimate_trace(
    oracle,
    gate_ids,
    p_hint: float,
    period: int,
    sigma: float = 0.0,
    cap: int | None = None,
) -> TraceEstimate:
    """Run the full schedule of trace measurements for one gate sequence.

    ``oracle`` must provide ``measure_trace(SequenceSpec)``.  Each distinct
    repetition count is measured once per run and reused across the three
    power sums that need it.
    """
    gate_ids = tuple(gate_ids)
    schedule = build_schedule(period, p_hint, cap)
    memo: dict[int, float] = {}

    def unital_trace(length: int) -> float:
        if length not in memo:
            memo[length] = oracle.measure_trace(SequenceSpec(gate_ids, length)) - 1.0
        return memo[length]

    state: TrackState | None = None
    rows: list[TraceRunRow] = []
    skipped: list[int] = []
    var_t = sigma * sigma
    for n in schedule.values:
        if state is not None and predicted_root_collision(state.eigenvalues, n):
            skipped.append(n)
            continue
        t1, t2, t3 = unital_trace(n), unital_trace(2 * n), unital_trace(3 * n)
        candidates = power_sums_to_candidates(t1, t2, t3)
        state = track_step(state, candidates, n)
        try:
            pred = variance_of_trace(state.eigenvalues, n, var_t)
        except DegenerateSystemError:
            pred = float("nan")
        rows.append(TraceRunRow(n, t1, t2, t3, state.eigenvalues, 1.0 + float(np.sum(state.eigenvalues).real), pred))

    assert state is not None  # schedule always contains n = 1
    lam = state.eigenvalues
    trace = 1.0 + float(np.sum(lam).real)
    return TraceEstimate(trace, lam, state.n, schedule, rows, skipped)


def _gradient_general(lam: np.ndarray, n: int) -> np.ndarray:
    """Derivatives of the trace estimate w.r.t. (t_n, t_2n, t_3n), distinct case.

    From the inverse Jacobian of the power-sum map in Lagrange form:
    the i-th root contributes lam_i^{1-n} times the coefficients of its
    Lagrange basis polynomial over the powered eigenvalues.
    """
    mu = lam**n
    denom_product = abs((mu[0] - mu[1]) * (mu[0] - mu[2]) * (mu[1] - mu[2]))
    if denom_product < DEGENERACY_TOL:
        raise DegenerateSystemError(
            f"powered eigenvalue gaps nearly vanish at n = {n} "
            f"(denominator {denom_product:.3e})"
        )
    weights = lam / mu  # lam^{1-n}
    grads = np.zeros(3, dtype=complex)
    for i in range(3):
        j, k = [x for x in range(3) if x != i]
        d_i = (mu[i] - mu[j]) * (mu[i] - mu[k])
        grads += weights[i] / d_i * np.array(
            [mu[j] * mu[k], -(mu[j] + mu[k]) / 2.0, 1.0 / 3.0]
        )
    return np.real(grads) / n


def _gradient_one_pair(a: complex, c: complex, n: int) -> np.ndarray:
    """Limit of the general derivatives when two eigenvalues coincide at c."""
    big_a = a**n
    big_c = c**n
    denom = (big_a - big_c) ** 2 * n**2
    g1 = (
        big_a * c * (1 - 3 * n)
        + (a / big_a) * big_c**2 * n
        + big_a**2 * (c / big_c) * (2 * n - 1)
    ) / denom
    g2 = (
        -(big_a**2) * (c / big_c**2) * (n - 1)
        + c * (3 * n - 1)
        - 2 * (a / big_a) * big_c * n
    ) / (2 * denom)
    g3 = (
        (c / big_c) * (1 - 2 * n)
        + big_a * (c / big_c**2) * (n - 1)
        + (a / big_a) * n
    ) / (3 * denom)
    return np.real(np.array([g1, g2, g3]))


def _gradient_all_equal(a: complex, n: int) -> np.ndarray:
    """Limit of the general derivatives when all three eigenvalues coincide."""
    g1 = a ** (1 - n) * (6 * n**2 - 5 * n + 1) / (2 * n**3)
    g2 = a ** (1 - 2 * n) * (3 * n**2 - 4 * n + 1) / (2 * n**3)
    g3 = a ** (1 - 3 * n) * (n - 1) * (2 * n - 1) / (6 * n**3)
    return np.real(np.array([g1, g2, g3]))


def trace_gradient(eigenvalues, n: int) -> np.ndarray:
    """(d Lambda / d t_n, d Lambda / d t_2n, d Lambda / d t_3n).

    Switches to the coincident-eigenvalue limits when powered eigenvalues
    come within ``DEGENERACY_TOL`` of each other, which keeps the result
    finite through both degenerate limits.
    """
    lam = np.asarray(eigenvalues, dtype=complex)
    if np.any(lam == 0):
        raise ValueError("eigenvalues must be nonzero")
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        mu = lam**n
        gaps = np.array(
            [abs(mu[0] - mu[1]), abs(mu[0] - mu[2]), abs(mu[1] - mu[2])]
        )
        if np.max(gaps) < DEGENERACY_TOL:
            return _gradient_all_equal(np.mean(lam), n)
        if np.min(gaps) < DEGENERACY_TOL:
            pair_index = int(np.argmin(gaps))
            (i, j), k = [((0, 1), 2), ((0, 2), 1), ((1, 2), 0)][pair_index]
            return _gradient_one_pair(lam[k], 0.5 * (lam[i] + lam[j]), n)
        return _gradient_general(lam, n)


def variance_of_trace(eigenvalues, n: int, var_t: float) -> float:
    """Analytic variance of the trace estimate from step n, noise var_t per trace."""
    grads = trace_gradient(eigenvalues, n)
    return float(np.sum(grads**2) * var_t)


def optimal_repetitions(eigenvalues, var_t: float, schedule: TraceSchedule) -> int:
    """Repetition count minimizing the analytic variance.

    Scans the schedule first, then a dense grid of admissible counts
    (congruent to 1 mod the period) around the coarse minimizer.
    """
    m = schedule.period

    def var_at(n: int) -> float:
        # var_t is a positive common factor; the argmin does not depend on it
        try:
            v = variance_of_trace(eigenvalues, n, 1.0)
        except DegenerateSystemError:
            return float("inf")
        return v if np.isfinite(v) else float("inf")

    coarse = min(schedule.values, key=var_at)
    lo = max(1, coarse // 2)
    hi = 2 * coarse + 1
    dense = {m * (q // m) + 1 for q in range(lo, hi + 1)}
    dense.add(coarse)
    dense = sorted(n for n in dense if n >= 1)
    if len(dense) > 512:
        idx = np.unique(np.geomspace(1, len(dense), 512).astype(int) - 1)
        dense = [dense[i] for i in idx]
    return min(dense, key=var_at)
