"""Simulated tomography measurement layer and its on-disk estimate format.

A :class:`GstContext` answers trace and transfer-matrix queries for gate
sequences built from a hidden set of noisy gates.  Matrix estimates are
conjugated by a hidden frame transform and carry additive Gaussian
sampling noise; trace estimates see the same noise but no frame (the
trace is similarity invariant, so the hidden frame cancels exactly).

Estimates recorded from any oracle can be written to a line-oriented text
file and replayed through an :class:`EstimateStore`, which exposes the
same query interface, so the reconstruction pipeline also runs on
externally supplied data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ptm import ptm_from_flat, ptm_to_flat, sequence_ptm


@dataclass(frozen=True)
class SequenceSpec:
    """An ordered gate sequence repeated a number of times."""

    gate_ids: tuple[int, ...]
    repetitions: int

    def __post_init__(self):
        if not self.gate_ids:
            raise ValueError("gate sequence must be non-empty")
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.repetitions}")

    def label(self) -> str:
        ids = " ".join(str(g) for g in self.gate_ids)
        return f"[{ids}]^{self.repetitions}"


class GstContext:
    """Hidden truth behind the measurement interface.

    Parameters
    ----------
    gates : mapping of gate id to noisy 4x4 transfer matrix
    sigma : sampling-noise standard deviation (>= 0)
    rng : numpy Generator driving the noise draws
    gauge : hidden frame transform applied to matrix estimates (identity
        if omitted); never applied to trace estimates, where it cancels.
    """

    def __init__(self, gates, sigma: float, rng: np.random.Generator, gauge=None):
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        self.gates = dict(gates)
        self.sigma = float(sigma)
        self.rng = rng
        self.gauge = None if gauge is None else np.asarray(gauge, dtype=float)
        self._gauge_inv = None if gauge is None else np.linalg.inv(self.gauge)
        self._product_cache: dict[tuple[int, ...], np.ndarray] = {}

    def _sequence_product(self, gate_ids: tuple[int, ...]) -> np.ndarray:
        cached = self._product_cache.get(gate_ids)
        if cached is None:
            cached = sequence_ptm(self.gates[g] for g in gate_ids)
            self._product_cache[gate_ids] = cached
        return cached

    def true_sequence_ptm(self, spec: SequenceSpec) -> np.ndarray:
        return np.linalg.matrix_power(
            self._sequence_product(spec.gate_ids), spec.repetitions
        )

    def measure_trace(self, spec: SequenceSpec) -> float:
        """Trace of the repeated sequence plus one Gaussian noise draw."""
        value = float(np.trace(self.true_sequence_ptm(spec)))
        return value + self.sigma * self.rng.standard_normal()

    def measure_ptm(self, spec: SequenceSpec) -> np.ndarray:
        """Frame-conjugated transfer matrix with noise on rows 1..3.

        Row 0 stays (1, 0, 0, 0): estimates of trace-preserving maps are
        constrained to that form, and the pipeline reads only rows 1..3.
        """
        m = self.true_sequence_ptm(spec)
        if self.gauge is not None:
            m = self.gauge @ m @ self._gauge_inv
        m = np.array(m)
        m[0] = (1.0, 0.0, 0.0, 0.0)
        m[1:, :] += self.sigma * self.rng.standard_normal((3, 4))
        return m


@dataclass(frozen=True)
class EstimateRecord:
    kind: str  # "TRACE" or "PTM"
    gate_ids: tuple[int, ...]
    repetitions: int
    value: object  # float for TRACE, 4x4 array for PTM


class RecordingOracle:
    """Wraps an oracle and logs every answered query for later export."""

    def __init__(self, inner):
        self.inner = inner
        self.records: list[EstimateRecord] = []

    def measure_trace(self, spec: SequenceSpec) -> float:
        value = self.inner.measure_trace(spec)
        self.records.append(
            EstimateRecord("TRACE", spec.gate_ids, spec.repetitions, value)
        )
        return value

    def measure_ptm(self, spec: SequenceSpec) -> np.ndarray:
        value = self.inner.measure_ptm(spec)
        self.records.append(
            EstimateRecord("PTM", spec.gate_ids, spec.repetitions, value)
        )
        return value


class EstimateFileError(ValueError):
    pass


class MissingEstimateError(KeyError):
    """A required sequence is absent from the supplied estimates."""

    def __init__(self, kind: str, missing: list[SequenceSpec]):
        self.kind = kind
        self.missing = list(missing)
        labels = ", ".join(s.label() for s in self.missing)
        super().__init__(f"missing {kind} estimates for: {labels}")

    def __str__(self) -> str:  # KeyError would repr-quote the message
        return self.args[0]


def write_estimates(path, records) -> None:
    with open(path, "w") as fh:
        fh.write("# kind gate_ids... repetitions value(s)\n")
        for rec in records:
            ids = " ".join(str(g) for g in rec.gate_ids)
            if rec.kind == "TRACE":
                fh.write(f"TRACE {ids} {rec.repetitions} {rec.value!r}\n")
            elif rec.kind == "PTM":
                flat = " ".join(repr(v) for v in ptm_to_flat(rec.value))
                fh.write(f"PTM {ids} {rec.repetitions} {flat}\n")
            else:
                raise ValueError(f"unknown record kind {rec.kind!r}")


def read_estimates(path) -> list[EstimateRecord]:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            kind = tokens[0]
            try:
                if kind == "TRACE":
                    if len(tokens) < 4:
                        raise ValueError("too few fields")
                    ids = tuple(int(t) for t in tokens[1:-2])
                    reps = int(tokens[-2])
                    value = float(tokens[-1])
                elif kind == "PTM":
                    if len(tokens) < 19:
                        raise ValueError("too few fields")
                    ids = tuple(int(t) for t in tokens[1:-17])
                    reps = int(tokens[-17])
                    value = ptm_from_flat(float(t) for t in tokens[-16:])
                else:
                    raise ValueError(f"unknown record kind {kind!r}")
            except ValueError as exc:
                raise EstimateFileError(f"{path}: line {lineno}: {exc}") from exc
            records.append(EstimateRecord(kind, ids, reps, value))
    return records


class EstimateStore:
    """Replays recorded estimates through the oracle interface.

    Each (sequence, repetitions) key answers any number of queries with
    the stored value; duplicate records in a file override earlier ones.
    """

    def __init__(self, records):
        self.traces: dict[tuple[tuple[int, ...], int], float] = {}
        self.ptms: dict[tuple[tuple[int, ...], int], np.ndarray] = {}
        for rec in records:
            key = (rec.gate_ids, rec.repetitions)
            if rec.kind == "TRACE":
                self.traces[key] = rec.value
            else:
                self.ptms[key] = rec.value

    @classmethod
    def from_file(cls, path) -> "EstimateStore":
        return cls(read_estimates(path))

    def missing_traces(self, specs) -> list[SequenceSpec]:
        return [s for s in specs if (s.gate_ids, s.repetitions) not in self.traces]

    def measure_trace(self, spec: SequenceSpec) -> float:
        try:
            return self.traces[(spec.gate_ids, spec.repetitions)]
        except KeyError:
            raise MissingEstimateError("TRACE", [spec]) from None

    def measure_ptm(self, spec: SequenceSpec) -> np.ndarray:
        try:
            return self.ptms[(spec.gate_ids, spec.repetitions)]
        except KeyError:
            raise MissingEstimateError("PTM", [spec]) from None
