"""Dense statevector simulation: gate set, circuits, Born sampling and Haar-random objects.

Conventions:
    - qubit 0 is the least significant bit of the amplitude index, so the bitstring of an
      outcome prints qubit n-1 first;
    - every gate angle is in pi units (half-turns), e.g. ZZ(theta) = exp(-i (pi/2) theta Z x Z).
"""

import functools
import json
from dataclasses import dataclass, field
from enum import StrEnum, auto
from pathlib import Path
from typing import Any, Self

import flax
import jax
import jax.numpy as jnp
import numpy as np
from jax import random
from jaxtyping import Array, Complex, Float, PRNGKeyArray

from dxhoglib.exceptions import (
    DimensionError,
    NormalizationError,
    QubitIndexError,
    SizeGuardError,
)

MAX_QUBITS = 20
MAX_DENSE_QUBITS = 6
NORM_TOL = 1e-8

_SQRT_HALF = 1.0 / np.sqrt(2.0)


@flax.struct.dataclass
class StateVector:
    amps: Complex[Array, "dim"]
    n: int = flax.struct.field(pytree_node=False)

    @classmethod
    def from_amplitudes(cls, amps: Any) -> Self:
        amps = jnp.asarray(amps, dtype=jnp.complex128).reshape(-1)
        n = int(amps.shape[0]).bit_length() - 1
        if n < 1 or amps.shape[0] != 1 << n:
            raise DimensionError(f"Amplitude count {amps.shape[0]} is not 2^n for n >= 1.")
        return cls(amps=amps, n=n)

    @property
    def dim(self) -> int:
        return 1 << self.n

    def norm(self) -> float:
        return float(jnp.linalg.norm(self.amps))

    def normalized(self) -> "StateVector":
        norm = self.norm()
        if norm == 0.0:
            raise NormalizationError("Cannot normalise the zero vector.")
        return self.replace(amps=self.amps / norm)


def _check_qubits(n: int) -> None:
    if not 1 <= n <= MAX_QUBITS:
        raise DimensionError(f"Qubit count must be in [1, {MAX_QUBITS}], got {n}.")


def zero_state(n: int) -> StateVector:
    return basis_state(n, 0)


def basis_state(n: int, index: int) -> StateVector:
    _check_qubits(n)
    if not 0 <= index < 1 << n:
        raise QubitIndexError(f"Basis index {index} out of range for {n} qubits.")
    return StateVector(amps=jnp.zeros(1 << n, dtype=jnp.complex128).at[index].set(1.0), n=n)


def bitstring(index: int, n: int) -> str:
    return format(index, f"0{n}b")


def bit_index(z: str) -> int:
    return int(z, 2)


class GateKind(StrEnum):
    U3 = auto()
    ZZ = auto()
    H = auto()
    S = auto()
    SDG = auto()
    X = auto()
    Z = auto()
    CZ = auto()
    CNOT = auto()


_ARITY = {
    GateKind.U3: 1,
    GateKind.ZZ: 2,
    GateKind.H: 1,
    GateKind.S: 1,
    GateKind.SDG: 1,
    GateKind.X: 1,
    GateKind.Z: 1,
    GateKind.CZ: 2,
    GateKind.CNOT: 2,
}
_N_ANGLES = {GateKind.U3: 3, GateKind.ZZ: 1}

_FIXED_MATRICES = {
    GateKind.H: np.array([[1, 1], [1, -1]], dtype=np.complex128) * _SQRT_HALF,
    GateKind.S: np.diag([1, 1j]).astype(np.complex128),
    GateKind.SDG: np.diag([1, -1j]).astype(np.complex128),
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=np.complex128),
    GateKind.Z: np.diag([1, -1]).astype(np.complex128),
    GateKind.CZ: np.diag([1, 1, 1, -1]).astype(np.complex128),
    # control is the first target; row index is 2 * bit(first) + bit(second)
    GateKind.CNOT: np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
    ),
}

_SELF_INVERSE = {GateKind.H, GateKind.X, GateKind.Z, GateKind.CZ, GateKind.CNOT}


def u3_matrix(theta: Any, phi: Any, lam: Any) -> Complex[Array, "2 2"]:
    """Standard SU(2) parameterisation with angles in pi units."""
    c = jnp.cos(jnp.pi * theta / 2)
    s = jnp.sin(jnp.pi * theta / 2)
    return jnp.array(
        [
            [c + 0j, -jnp.exp(1j * jnp.pi * lam) * s],
            [jnp.exp(1j * jnp.pi * phi) * s, jnp.exp(1j * jnp.pi * (phi + lam)) * c],
        ]
    )


def zz_phases(theta: Any) -> Complex[Array, "4"]:
    """Diagonal of ZZ(theta) in the |q_a q_b> basis."""
    minus = jnp.exp(-0.5j * jnp.pi * theta)
    plus = jnp.exp(0.5j * jnp.pi * theta)
    return jnp.stack([minus, plus, plus, minus])


@dataclass(frozen=True, kw_only=True)
class Gate:
    kind: GateKind
    targets: tuple[int, ...]
    angles: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", GateKind(self.kind))
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        if len(self.targets) != _ARITY[self.kind]:
            raise QubitIndexError(
                f"Gate {self.kind} acts on {_ARITY[self.kind]} qubit(s), got {self.targets}."
            )
        if len(set(self.targets)) != len(self.targets):
            raise QubitIndexError(f"Duplicate targets {self.targets} for gate {self.kind}.")
        if len(self.angles) != _N_ANGLES.get(self.kind, 0):
            raise ValueError(f"Gate {self.kind} takes {_N_ANGLES.get(self.kind, 0)} angle(s).")

    def matrix(self) -> Complex[Array, "d d"]:
        if self.kind == GateKind.U3:
            return u3_matrix(*self.angles)
        if self.kind == GateKind.ZZ:
            return jnp.diag(zz_phases(self.angles[0]))
        return jnp.asarray(_FIXED_MATRICES[self.kind])

    def inverse(self) -> "Gate":
        match self.kind:
            case GateKind.U3:
                theta, phi, lam = self.angles
                return Gate(kind=GateKind.U3, targets=self.targets, angles=(-theta, -lam, -phi))
            case GateKind.ZZ:
                return Gate(kind=GateKind.ZZ, targets=self.targets, angles=(-self.angles[0],))
            case GateKind.S:
                return Gate(kind=GateKind.SDG, targets=self.targets)
            case GateKind.SDG:
                return Gate(kind=GateKind.S, targets=self.targets)
        assert self.kind in _SELF_INVERSE
        return self

    def to_dict(self) -> dict[str, Any]:
        return {"kind": str(self.kind), "targets": list(self.targets), "angles": list(self.angles)}


@dataclass(kw_only=True)
class Circuit:
    n: int
    ops: list[Gate] = field(default_factory=list)

    def __post_init__(self) -> None:
        _check_qubits(self.n)
        for gate in self.ops:
            self._check_gate(gate)

    def _check_gate(self, gate: Gate) -> None:
        if any(not 0 <= t < self.n for t in gate.targets):
            raise QubitIndexError(f"Gate {gate.kind} targets {gate.targets} outside [0, {self.n}).")

    def append(self, gate: Gate) -> None:
        self._check_gate(gate)
        self.ops.append(gate)

    def extend(self, gates: list[Gate]) -> None:
        for gate in gates:
            self.append(gate)

    def __len__(self) -> int:
        return len(self.ops)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "ops": [g.to_dict() for g in self.ops]})

    @classmethod
    def from_json(cls, text: str) -> Self:
        raw = json.loads(text)
        ops = [
            Gate(kind=op["kind"], targets=tuple(op["targets"]), angles=tuple(op.get("angles", ())))
            for op in raw["ops"]
        ]
        return cls(n=int(raw["n"]), ops=ops)


def inverse_circuit(circuit: Circuit) -> Circuit:
    return Circuit(n=circuit.n, ops=[g.inverse() for g in reversed(circuit.ops)])


@functools.partial(jax.jit, static_argnames=("n", "target"))
def _apply_1q(amps: Array, u: Array, *, n: int, target: int) -> Array:
    psi = amps.reshape(1 << (n - 1 - target), 2, 1 << target)
    return jnp.einsum("ab,ibj->iaj", u, psi).reshape(-1)


@functools.partial(jax.jit, static_argnames=("n", "targets"))
def _apply_2q(amps: Array, u: Array, *, n: int, targets: tuple[int, int]) -> Array:
    axes = (n - 1 - targets[0], n - 1 - targets[1])
    psi = amps.reshape((2,) * n)
    out = jnp.tensordot(u.reshape(2, 2, 2, 2), psi, axes=((2, 3), axes))
    return jnp.moveaxis(out, (0, 1), axes).reshape(-1)


def apply_matrix(amps: Array, u: Array, targets: tuple[int, ...], n: int) -> Array:
    """Apply a 2x2 or 4x4 unitary to raw amplitudes."""
    if len(targets) == 1:
        return _apply_1q(amps, u, n=n, target=targets[0])
    return _apply_2q(amps, u, n=n, targets=(targets[0], targets[1]))


def _apply_ops(amps: Array, ops: list[Gate], n: int) -> Array:
    for gate in ops:
        amps = apply_matrix(amps, gate.matrix(), gate.targets, n)
    return amps


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    if any(not 0 <= t < state.n for t in gate.targets):
        raise QubitIndexError(f"Gate {gate.kind} targets {gate.targets} outside [0, {state.n}).")
    return state.replace(amps=apply_matrix(state.amps, gate.matrix(), gate.targets, state.n))


def apply_circuit(state: StateVector, circuit: Circuit) -> StateVector:
    if circuit.n != state.n:
        raise DimensionError(f"Circuit on {circuit.n} qubits applied to a {state.n}-qubit state.")
    return state.replace(amps=_apply_ops(state.amps, circuit.ops, state.n))


def circuit_unitary(circuit: Circuit) -> Complex[Array, "dim dim"]:
    """Dense unitary of a small circuit, column j being the image of |j>."""
    if circuit.n > MAX_DENSE_QUBITS:
        raise SizeGuardError(f"Dense unitaries limited to {MAX_DENSE_QUBITS} qubits.")
    eye = jnp.eye(1 << circuit.n, dtype=jnp.complex128)
    images = jax.vmap(lambda col: _apply_ops(col, circuit.ops, circuit.n))(eye)
    return images.T


def inner_product(a: StateVector, b: StateVector) -> complex:
    """<a|b>, conjugate-linear in `a`."""
    if a.n != b.n:
        raise DimensionError(f"Inner product of {a.n}- and {b.n}-qubit states.")
    return complex(jnp.vdot(a.amps, b.amps))


def probabilities(state: StateVector) -> Float[Array, "dim"]:
    return jnp.abs(state.amps) ** 2


@jax.jit
def born_index(probs: Array, rng: PRNGKeyArray) -> Array:
    """Inverse-CDF draw of an outcome index from (possibly slightly unnormalised) probabilities."""
    cdf = jnp.cumsum(probs)
    u = random.uniform(rng, dtype=jnp.float64) * cdf[-1]
    return jnp.minimum(jnp.searchsorted(cdf, u, side="right"), probs.shape[0] - 1)


def born_sample(state: StateVector, rng: PRNGKeyArray) -> str:
    probs = probabilities(state)
    total = float(jnp.sum(probs))
    if abs(total - 1.0) > NORM_TOL:
        raise NormalizationError(f"Born sampling needs a normalised state, norm^2 = {total}.")
    return bitstring(int(born_index(probs, rng)), state.n)


@functools.partial(jax.jit, static_argnames=("n",))
def _gaussian_amps(rng: PRNGKeyArray, n: int) -> Array:
    parts = random.normal(rng, (2, 1 << n), dtype=jnp.float64) * jnp.sqrt(0.5 ** (n + 1))
    return parts[0] + 1j * parts[1]


def sample_gaussian_state(n: int, rng: PRNGKeyArray) -> StateVector:
    """Unnormalised state with i.i.d. complex Gaussian amplitudes and E||psi||^2 = 1."""
    _check_qubits(n)
    return StateVector(amps=_gaussian_amps(rng, n), n=n)


def sample_haar_state(n: int, rng: PRNGKeyArray) -> StateVector:
    return sample_gaussian_state(n, rng).normalized()


@functools.partial(jax.jit, static_argnames=("n",))
def _haar_unitary(rng: PRNGKeyArray, n: int) -> Array:
    dim = 1 << n
    parts = random.normal(rng, (2, dim, dim), dtype=jnp.float64)
    ginibre = (parts[0] + 1j * parts[1]) * _SQRT_HALF
    q, r = jnp.linalg.qr(ginibre)
    diag = jnp.diagonal(r)
    return q * (diag / jnp.abs(diag))[None, :]


def sample_haar_unitary(n: int, rng: PRNGKeyArray) -> Complex[Array, "dim dim"]:
    """Haar unitary from a QR decomposition of a Ginibre matrix with R's phases divided out."""
    _check_qubits(n)
    if n > MAX_DENSE_QUBITS:
        raise SizeGuardError(f"Dense unitaries limited to {MAX_DENSE_QUBITS} qubits.")
    return _haar_unitary(rng, n)


def sample_haar_su2_angles(rng: PRNGKeyArray, shape: tuple[int, ...] = ()) -> Float[Array, "... 3"]:
    """U3 angles (pi units) of Haar-random single-qubit unitaries, up to global phase.

    Args:
        rng (PRNGKeyArray): Random stream.
        shape (tuple[int, ...]): Batch shape.

    Returns:
        Float[Array, "... 3"]: (theta, phi, lambda) along the last axis.
    """
    u = random.uniform(rng, (*shape, 3), dtype=jnp.float64)
    theta = jnp.arccos(1.0 - 2.0 * u[..., 0]) / jnp.pi
    return jnp.stack([theta, 2.0 * u[..., 1], 2.0 * u[..., 2]], axis=-1)


def canonical_phase(state: StateVector, atol: float = 1e-12) -> StateVector:
    """Rotate the global phase so the lowest-index nonzero amplitude is real and positive."""
    amps = np.asarray(state.amps)
    nonzero = np.flatnonzero(np.abs(amps) > atol)
    if nonzero.size == 0:
        raise NormalizationError("Canonical phase undefined for the zero vector.")
    lead = amps[nonzero[0]]
    return state.replace(amps=jnp.asarray(amps * (np.abs(lead) / lead)))


def state_to_bytes(state: StateVector) -> bytes:
    header = np.asarray([state.n], dtype="<u8").tobytes()
    return header + np.asarray(state.amps, dtype="<c16").tobytes()


def state_from_bytes(payload: bytes) -> StateVector:
    n = int(np.frombuffer(payload[:8], dtype="<u8")[0])
    _check_qubits(n)
    amps = np.frombuffer(payload[8:], dtype="<c16")
    if amps.shape[0] != 1 << n:
        raise DimensionError(f"Header says {n} qubits but payload holds {amps.shape[0]} amps.")
    return StateVector(amps=jnp.asarray(amps), n=n)


def save_state(state: StateVector, path: str | Path) -> None:
    Path(path).write_bytes(state_to_bytes(state))


def load_state(path: str | Path) -> StateVector:
    return state_from_bytes(Path(path).read_bytes())
