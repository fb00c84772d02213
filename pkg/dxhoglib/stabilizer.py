"""Random stabilizer states and the Clifford measurement template.

A uniformly random stabilizer state is drawn as a layered circuit
H(T) -> CNOT -> X -> S -> Z -> CZ, where T are the pivot columns of a random subspace in reduced
row echelon form. The circuit is then rewritten into the fixed-layer form
X -> H(all) -> S -> CZ -> H(complement of T), whose inverse rotates a state into the measurement
basis.
"""

import functools
import itertools
import json
import math
from collections.abc import Iterable
from dataclasses import dataclass
from typing import Any, Self

import jax
import jax.numpy as jnp
import numpy as np
from jax import random
from jaxtyping import Array, Float, PRNGKeyArray, UInt8

from dxhoglib.exceptions import DimensionError, SizeGuardError
from dxhoglib.gf2 import gaussian_binomial_2, gf2_rref, row_space
from dxhoglib.quantum import (
    Circuit,
    Gate,
    GateKind,
    StateVector,
    canonical_phase,
)

MAX_COUNT_QUBITS = 10
MAX_ENUMERATION_QUBITS = 3
KEY_GRID = 1e-6

Edge = tuple[int, int]


@dataclass(frozen=True, kw_only=True)
class RrefMatrix:
    n: int
    bits: UInt8[np.ndarray, "k n"]
    pivots: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.pivots)


@dataclass(frozen=True, kw_only=True)
class RawStabilizerCircuit:
    """Layers H(pivots) -> CNOT -> X -> S -> Z -> CZ preparing a stabilizer state from |0^n>."""

    n: int
    pivots: tuple[int, ...]
    cnot_edges: tuple[Edge, ...]
    x_mask: tuple[int, ...]
    s_mask: tuple[int, ...]
    z_mask: tuple[int, ...]
    cz_edges: tuple[Edge, ...]

    @property
    def complement(self) -> tuple[int, ...]:
        return tuple(q for q in range(self.n) if q not in self.pivots)


@dataclass(frozen=True, kw_only=True)
class MeasurementTemplate:
    n: int
    pivots: tuple[int, ...]
    x_mask: tuple[int, ...]
    s_mask: tuple[int, ...]
    cz_edges: tuple[Edge, ...]
    final_h: tuple[int, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "pivots": list(self.pivots),
            "x_mask": list(self.x_mask),
            "s_mask": list(self.s_mask),
            "cz_edges": [list(e) for e in self.cz_edges],
            "final_h": list(self.final_h),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> Self:
        return cls(
            n=int(raw["n"]),
            pivots=tuple(raw["pivots"]),
            x_mask=tuple(raw["x_mask"]),
            s_mask=tuple(raw["s_mask"]),
            cz_edges=tuple((int(a), int(b)) for a, b in raw["cz_edges"]),
            final_h=tuple(raw["final_h"]),
        )

    @classmethod
    def from_json(cls, text: str) -> Self:
        return cls.from_dict(json.loads(text))

    @classmethod
    def identity(cls, n: int) -> Self:
        """Template measuring in the computational basis (every qubit outside the pivots)."""
        return cls(n=n, pivots=(), x_mask=(), s_mask=(), cz_edges=(), final_h=tuple(range(n)))


@dataclass(frozen=True, kw_only=True)
class SupportDimWeights:
    n: int
    weights: tuple[float, ...]

    @property
    def total(self) -> float:
        return math.fsum(self.weights)

    def dimension_probabilities(self) -> Float[np.ndarray, "n_plus_1"]:
        """P(support dimension = k) for k = 0..n; the weights index the codimension."""
        return np.asarray(self.weights[::-1]) / self.total


def eta(n: int, d: int) -> float:
    """Unnormalised probability weight of support codimension d."""
    if not 0 <= d <= n:
        raise ValueError(f"Codimension {d} out of range [0, {n}].")
    value = 2.0 ** (-d * (d + 1) / 2)
    for a in range(1, d + 1):
        value *= (1.0 - 2.0 ** (d - n - a)) / (1.0 - 2.0 ** (-a))
    return value


def support_dim_weights(n: int) -> SupportDimWeights:
    return SupportDimWeights(n=n, weights=tuple(eta(n, d) for d in range(n + 1)))


def stabilizer_count(n: int) -> int:
    """Number of n-qubit stabilizer states, summed over support dimension k.

    Each k-dimensional support is one of gauss(n, k) * 2^(n-k) affine subspaces and carries
    2^(2k + k(k-1)/2) phase patterns.
    """
    if not 1 <= n <= MAX_COUNT_QUBITS:
        raise SizeGuardError(f"Stabilizer counts supported for 1 <= n <= {MAX_COUNT_QUBITS}.")
    return sum(
        gaussian_binomial_2(n, k) * (1 << (n - k)) * (1 << (2 * k + k * (k - 1) // 2))
        for k in range(n + 1)
    )


def sample_support_dim(n: int, rng: PRNGKeyArray) -> int:
    probs = support_dim_weights(n).dimension_probabilities()
    return int(random.choice(rng, n + 1, p=jnp.asarray(probs)))


def sample_rref_subspace(n: int, k: int, rng: PRNGKeyArray) -> RrefMatrix:
    """Uniform k-dimensional subspace of GF(2)^n by rejection on full-rank random generators."""
    if not 0 <= k <= n:
        raise ValueError(f"Subspace dimension {k} out of range [0, {n}].")
    if k == 0:
        return RrefMatrix(n=n, bits=np.zeros((0, n), dtype=np.uint8), pivots=())

    while True:
        rng, draw_rng = random.split(rng)
        generators = np.asarray(random.bernoulli(draw_rng, 0.5, (k, n)), dtype=np.uint8)
        reduced, pivots = gf2_rref(generators)
        if len(pivots) == k:
            return RrefMatrix(n=n, bits=reduced, pivots=tuple(pivots))


def _pairs(n: int) -> list[Edge]:
    return list(itertools.combinations(range(n), 2))


def sample_stabilizer_preparation(n: int, rng: PRNGKeyArray) -> RawStabilizerCircuit:
    dim_rng, sub_rng, coin_rng = random.split(rng, 3)
    k = sample_support_dim(n, dim_rng)
    rref = sample_rref_subspace(n, k, sub_rng)

    pivots = rref.pivots
    complement = [q for q in range(n) if q not in pivots]
    cnot_edges = tuple(
        (p, j) for r, p in enumerate(pivots) for j in complement if rref.bits[r, j]
    )

    # one coin per (layer, qubit) and per qubit pair, used only where the layer allows it
    pairs = _pairs(n)
    coins = np.asarray(random.bernoulli(coin_rng, 0.5, (3 * n + len(pairs),)))
    pivot_set = set(pivots)
    return RawStabilizerCircuit(
        n=n,
        pivots=pivots,
        cnot_edges=cnot_edges,
        x_mask=tuple(q for q in complement if coins[q]),
        s_mask=tuple(q for q in pivots if coins[n + q]),
        z_mask=tuple(q for q in pivots if coins[2 * n + q]),
        cz_edges=tuple(
            e for i, e in enumerate(pairs) if coins[3 * n + i] and pivot_set.issuperset(e)
        ),
    )


def _layer(kind: GateKind, qubits: Iterable[int]) -> list[Gate]:
    return [Gate(kind=kind, targets=(q,)) for q in qubits]


def _edge_layer(kind: GateKind, edges: tuple[Edge, ...]) -> list[Gate]:
    return [Gate(kind=kind, targets=e) for e in edges]


def raw_circuit(raw: RawStabilizerCircuit) -> Circuit:
    circuit = Circuit(n=raw.n)
    circuit.extend(_layer(GateKind.H, raw.pivots))
    circuit.extend(_edge_layer(GateKind.CNOT, raw.cnot_edges))
    circuit.extend(_layer(GateKind.X, raw.x_mask))
    circuit.extend(_layer(GateKind.S, raw.s_mask))
    circuit.extend(_layer(GateKind.Z, raw.z_mask))
    circuit.extend(_edge_layer(GateKind.CZ, raw.cz_edges))
    return circuit


def to_measurement_template(raw: RawStabilizerCircuit) -> MeasurementTemplate:
    """Rewrite a raw preparation circuit into X -> H(all) -> S -> CZ -> H(complement).

    Z on a pivot becomes X in front of the full H layer, each CNOT (pivot -> j) becomes a CZ
    conjugated by the final H on j, and the raw X layer already acts on non-pivots only.
    """
    return MeasurementTemplate(
        n=raw.n,
        pivots=raw.pivots,
        x_mask=tuple(sorted(set(raw.x_mask) | set(raw.z_mask))),
        s_mask=raw.s_mask,
        cz_edges=tuple(sorted(set(raw.cz_edges) | set(raw.cnot_edges))),
        final_h=raw.complement,
    )


def template_circuit(tpl: MeasurementTemplate) -> Circuit:
    circuit = Circuit(n=tpl.n)
    circuit.extend(_layer(GateKind.X, tpl.x_mask))
    circuit.extend(_layer(GateKind.H, range(tpl.n)))
    circuit.extend(_layer(GateKind.S, tpl.s_mask))
    circuit.extend(_edge_layer(GateKind.CZ, tpl.cz_edges))
    circuit.extend(_layer(GateKind.H, tpl.final_h))
    return circuit


def inverse_measurement_circuit(tpl: MeasurementTemplate) -> Circuit:
    circuit = Circuit(n=tpl.n)
    circuit.extend(_layer(GateKind.H, tpl.final_h))
    circuit.extend(_edge_layer(GateKind.CZ, tpl.cz_edges))
    circuit.extend(_layer(GateKind.SDG, tpl.s_mask))
    circuit.extend(_layer(GateKind.H, range(tpl.n)))
    circuit.extend(_layer(GateKind.X, tpl.x_mask))
    return circuit


_QUARTER_TURNS = np.array([1.0, 1.0j, -1.0, -1.0j], dtype=np.complex128)


def _hadamard(psi: Array, n: int, q: int) -> Array:
    psi = psi.reshape(1 << (n - 1 - q), 2, 1 << q)
    a, b = psi[:, 0, :], psi[:, 1, :]
    return (jnp.stack([a + b, a - b], axis=1) / jnp.sqrt(2.0)).reshape(-1)


@functools.partial(jax.jit, static_argnames=("n",))
def _rotate(
    amps: Array, final_h: Array, adjacency: Array, s_mask: Array, x_index: Array, *, n: int
) -> Array:
    psi = amps
    for q in range(n):
        psi = jnp.where(final_h[q], _hadamard(psi, n, q), psi)

    index = jnp.arange(1 << n)
    bits = (index[:, None] >> jnp.arange(n)[None, :]) & 1
    cz_count = jnp.sum((bits @ adjacency) * bits, axis=1)
    s_count = bits @ s_mask
    # CZ contributes two quarter turns per edge, S^dagger three per set bit
    psi = psi * jnp.asarray(_QUARTER_TURNS)[(2 * cz_count + 3 * s_count) % 4]

    for q in range(n):
        psi = _hadamard(psi, n, q)
    return psi[index ^ x_index]


def template_arrays(tpl: MeasurementTemplate) -> tuple[np.ndarray, ...]:
    final_h = np.zeros(tpl.n, dtype=bool)
    final_h[list(tpl.final_h)] = True
    adjacency = np.zeros((tpl.n, tpl.n), dtype=np.int32)
    for a, b in tpl.cz_edges:
        adjacency[min(a, b), max(a, b)] = 1
    s_mask = np.zeros(tpl.n, dtype=np.int32)
    s_mask[list(tpl.s_mask)] = 1
    x_index = np.asarray(sum(1 << q for q in tpl.x_mask), dtype=np.int64)
    return final_h, adjacency, s_mask, x_index


def rotate_to_template_basis(state: StateVector, tpl: MeasurementTemplate) -> StateVector:
    """Apply the inverse measurement circuit without materialising its gates."""
    if state.n != tpl.n:
        raise DimensionError(f"Template on {tpl.n} qubits, state on {state.n}.")
    return state.replace(amps=_rotate(state.amps, *template_arrays(tpl), n=state.n))


def measurement_probabilities(state: StateVector, tpl: MeasurementTemplate) -> Float[Array, "dim"]:
    return jnp.abs(rotate_to_template_basis(state, tpl).amps) ** 2


def state_key(state: StateVector) -> bytes:
    """Hashable key of a state up to global phase (amplitudes rounded to a 1e-6 grid)."""
    amps = np.asarray(canonical_phase(state).amps)
    grid = np.round(np.stack([amps.real, amps.imag]) / KEY_GRID).astype(np.int64)
    return grid.tobytes()


def _all_rref_subspaces(n: int, k: int) -> list[RrefMatrix]:
    seen: dict[bytes, RrefMatrix] = {}
    for flat in itertools.product((0, 1), repeat=k * n):
        reduced, pivots = gf2_rref(np.asarray(flat, dtype=np.uint8).reshape(k, n))
        if len(pivots) == k:
            seen.setdefault(reduced.tobytes(), RrefMatrix(n=n, bits=reduced, pivots=tuple(pivots)))
    return list(seen.values())


def enumerate_stabilizer_states(n: int) -> list[StateVector]:
    """All n-qubit stabilizer states in canonical phase, from supports and phase polynomials.

    Each state is 2^(-k/2) * sum over c in GF(2)^k of i^(l.c) (-1)^(q(c)) |y + cV>, for a
    subspace V in RREF, a coset offset y supported off the pivots, l in Z_4^k and a set q of
    coefficient pairs.
    """
    if not 1 <= n <= MAX_ENUMERATION_QUBITS:
        raise SizeGuardError(f"Enumeration supported for 1 <= n <= {MAX_ENUMERATION_QUBITS}.")

    weights = 1 << np.arange(n)
    states: dict[bytes, StateVector] = {}
    for k in range(n + 1):
        coeffs = (np.arange(1 << k)[:, None] >> np.arange(k)[None, :]) & 1
        pair_list = list(itertools.combinations(range(k), 2))
        pair_products = np.stack(
            [coeffs[:, a] * coeffs[:, b] for a, b in pair_list] or [np.zeros(1 << k, int)], axis=1
        )
        for rref in _all_rref_subspaces(n, k):
            span = row_space(rref.bits)
            complement = [q for q in range(n) if q not in rref.pivots]
            for offset_bits in itertools.product((0, 1), repeat=len(complement)):
                offset = np.zeros(n, dtype=np.uint8)
                offset[complement] = offset_bits
                support = ((span ^ offset) @ weights).astype(np.int64)
                for linear in itertools.product(range(4), repeat=k):
                    quarter = (coeffs @ np.asarray(linear, dtype=np.int64)) if k else 0
                    for quad in itertools.product((0, 1), repeat=len(pair_list)):
                        sign = pair_products @ np.asarray(quad or (0,), dtype=np.int64)
                        turns = (quarter + 2 * sign) % 4
                        amps = np.zeros(1 << n, dtype=np.complex128)
                        amps[support] = _QUARTER_TURNS[turns] / np.sqrt(1 << k)
                        state = canonical_phase(StateVector.from_amplitudes(amps))
                        states.setdefault(state_key(state), state)
    return list(states.values())
