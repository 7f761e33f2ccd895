"""The seven-gate working set, gate records, and the gate-set file format.

The set contains one pi/3 z-rotation together with +-2pi/3 rotations about
three cube diagonals; products of its elements span the unital-map space,
which is what the reconstruction stages rely on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .lindblad import LindbladGenerator, noisy_gate, regenerate_gate
from .ptm import (
    IDENTITY_PTM,
    PAULIS,
    ptm_from_unitary,
    ptm_to_flat,
    ptm_from_flat,
    unitary_to_flat,
    unitary_from_flat,
)

GATE_IDS = tuple(range(1, 8))

GATESET_FORMAT = "ptm-tomolab-gateset-v1"

_S3 = 1.0 / np.sqrt(3.0)

# (axis, angle) with the unitary defined as exp(i * angle * axis . sigma)
_GATE_TABLE = {
    1: ((0.0, 0.0, 1.0), np.pi / 6),
    2: ((_S3, _S3, -_S3), -np.pi / 3),
    3: ((_S3, _S3, -_S3), -2 * np.pi / 3),
    4: ((_S3, _S3, _S3), -np.pi / 3),
    5: ((_S3, _S3, _S3), -2 * np.pi / 3),
    6: ((_S3, -_S3, _S3), -np.pi / 3),
    7: ((_S3, -_S3, _S3), -2 * np.pi / 3),
}


def _axis_exponential(axis, angle: float) -> np.ndarray:
    """exp(i * angle * axis . sigma) in closed form for a unit axis."""
    n_dot_sigma = axis[0] * PAULIS[1] + axis[1] * PAULIS[2] + axis[2] * PAULIS[3]
    return np.cos(angle) * np.eye(2) + 1j * np.sin(angle) * n_dot_sigma


def ideal_unitary(gate_id: int) -> np.ndarray:
    axis, angle = _GATE_TABLE[gate_id]
    return _axis_exponential(axis, angle)


def ideal_ptm(gate_id: int) -> np.ndarray:
    return ptm_from_unitary(ideal_unitary(gate_id))


def ptm_period(m: np.ndarray, max_period: int = 64, tol: float = 1e-9) -> int | None:
    """Smallest n >= 1 with m^n = identity, or None if none up to max_period."""
    acc = IDENTITY_PTM
    for n in range(1, max_period + 1):
        acc = acc @ m
        if np.max(np.abs(acc - IDENTITY_PTM)) < tol:
            return n
    return None


@dataclass(frozen=True)
class GateRecord:
    gate_id: int
    ideal_unitary: np.ndarray
    ideal_ptm: np.ndarray
    noisy_ptm: np.ndarray
    error_rate: float
    period: int
    generator: LindbladGenerator
    t_star: float


def build_gateset(rng: np.random.Generator, target_p: float) -> list[GateRecord]:
    """Draw one noisy version of each gate, all at the same target error rate."""
    records = []
    for gate_id in GATE_IDS:
        u = ideal_unitary(gate_id)
        m_ideal = ptm_from_unitary(u)
        period = ptm_period(m_ideal)
        assert period is not None
        try:
            draw = noisy_gate(m_ideal, target_p, rng)
        except Exception as exc:
            raise RuntimeError(f"noise calibration failed for gate {gate_id}") from exc
        records.append(
            GateRecord(
                gate_id=gate_id,
                ideal_unitary=u,
                ideal_ptm=m_ideal,
                noisy_ptm=draw.ptm,
                error_rate=draw.achieved_p,
                period=period,
                generator=draw.generator,
                t_star=draw.t_star,
            )
        )
    return records


def _complex_matrix_to_flat(h: np.ndarray) -> list[float]:
    out: list[float] = []
    for z in np.asarray(h, dtype=complex).reshape(-1):
        out.extend((float(z.real), float(z.imag)))
    return out


def _complex_matrix_from_flat(values, shape=(3, 3)) -> np.ndarray:
    arr = np.asarray(list(values), dtype=float)
    re = arr[0::2].reshape(shape)
    im = arr[1::2].reshape(shape)
    return re + 1j * im


def save_gateset(path, records: list[GateRecord], seed: int, target_p: float) -> None:
    payload = {
        "format": GATESET_FORMAT,
        "seed": seed,
        "target_error_rate": target_p,
        "gates": [
            {
                "id": r.gate_id,
                "unitary": unitary_to_flat(r.ideal_unitary),
                "hamiltonian": [float(c) for c in r.generator.hamiltonian],
                "dissipator": _complex_matrix_to_flat(r.generator.dissipator),
                "t_star": r.t_star,
                "error_rate": r.error_rate,
                "period": r.period,
                "noisy_ptm": ptm_to_flat(r.noisy_ptm),
            }
            for r in records
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


class GatesetFileError(ValueError):
    pass


def load_gateset(path) -> tuple[list[GateRecord], dict]:
    """Load a gate-set file, regenerating each noisy map from its parameters.

    The regenerated transfer matrix must agree bit-for-bit with the stored
    one; a mismatch means the file was edited or produced elsewhere.
    """
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != GATESET_FORMAT:
        raise GatesetFileError(f"unrecognized gate-set format in {path}")
    records = []
    for entry in payload["gates"]:
        u = unitary_from_flat(entry["unitary"])
        m_ideal = ptm_from_unitary(u)
        gen = LindbladGenerator(
            np.asarray(entry["hamiltonian"], dtype=float),
            _complex_matrix_from_flat(entry["dissipator"]),
        )
        regenerated = regenerate_gate(gen, entry["t_star"], m_ideal)
        stored = ptm_from_flat(entry["noisy_ptm"])
        if not np.array_equal(regenerated, stored):
            raise GatesetFileError(
                f"gate {entry['id']}: stored map does not regenerate from its "
                "parameters (file edited or produced by a different build?)"
            )
        records.append(
            GateRecord(
                gate_id=int(entry["id"]),
                ideal_unitary=u,
                ideal_ptm=m_ideal,
                noisy_ptm=stored,
                error_rate=float(entry["error_rate"]),
                period=int(entry["period"]),
                generator=gen,
                t_star=float(entry["t_star"]),
            )
        )
    meta = {k: payload[k] for k in ("seed", "target_error_rate")}
    return records, meta
