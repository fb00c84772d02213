"""Codebook spoofer for the Haar-measurement variant of DXHOG.

Alice holds the target state and an m-bit message budget; Bob holds the measurement unitary and a
shared codebook of 2^m Haar states. Alice sends the index of the codeword with the largest overlap
with her state, and Bob outputs the most likely outcome of that codeword under his unitary. With a
shared Haar rerandomization V both parties work with V psi and U V^dagger, which leaves every
product U psi unchanged.
"""

import functools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import jax
import jax.numpy as jnp
from jax import random
from jaxtyping import Array, Complex, PRNGKeyArray
from tqdm.auto import tqdm

from dxhoglib.exceptions import DimensionError, SizeGuardError
from dxhoglib.protocol import TrialRecord, XebSummary, summarize, write_records
from dxhoglib.quantum import (
    MAX_DENSE_QUBITS,
    StateVector,
    bit_index,
    bitstring,
    sample_haar_state,
    sample_haar_unitary,
)
from dxhoglib.util.logger import get_logger
from dxhoglib.util.random import CODEBOOK_OFFSET, SHARED_OFFSET, child_seed, stream

logger = get_logger("spoof")

MAX_CODEBOOK_BITS = 20
SPOOF_MODE_PREFIX = "spoof"


def _check_size(n: int, m: int) -> None:
    if n > MAX_DENSE_QUBITS:
        raise SizeGuardError(f"Spoofing limited to {MAX_DENSE_QUBITS} qubits, got {n}.")
    if not 0 <= m <= MAX_CODEBOOK_BITS:
        raise SizeGuardError(f"Codebook bits must be in [0, {MAX_CODEBOOK_BITS}], got {m}.")


@functools.partial(jax.jit, static_argnames=("n", "size"))
def _codebook(rng: PRNGKeyArray, n: int, size: int) -> Array:
    parts = random.normal(rng, (size, 2, 1 << n), dtype=jnp.float64)
    amps = parts[:, 0] + 1j * parts[:, 1]
    return amps / jnp.linalg.norm(amps, axis=1, keepdims=True)


def build_codebook(n: int, m: int, rng: PRNGKeyArray) -> Complex[Array, "M dim"]:
    """2^m independent Haar states of n qubits, one per row."""
    _check_size(n, m)
    return _codebook(rng, n, 1 << m)


@dataclass(frozen=True, kw_only=True)
class SpoofInstance:
    id: int
    n: int
    state_seed: int
    meas_seed: int
    state: StateVector
    unitary: Complex[Array, "dim dim"]


def materialize_spoof_instance(
    n: int, index: int, state_seed: int, meas_seed: int
) -> SpoofInstance:
    return SpoofInstance(
        id=index,
        n=n,
        state_seed=state_seed,
        meas_seed=meas_seed,
        state=sample_haar_state(n, stream(state_seed)),
        unitary=sample_haar_unitary(n, stream(meas_seed)),
    )


def make_spoof_instance(n: int, master_seed: int, index: int) -> SpoofInstance:
    return materialize_spoof_instance(
        n,
        index,
        state_seed=child_seed(master_seed, 2 * index),
        meas_seed=child_seed(master_seed, 2 * index + 1),
    )


@jax.jit
def _outcome(codebook: Array, psi: Array, unitary: Array) -> Array:
    message = jnp.argmax(jnp.abs(codebook.conj() @ psi) ** 2)
    return jnp.argmax(jnp.abs(unitary @ codebook[message]) ** 2)


def spoof_score(state: StateVector, unitary: Array, z: str) -> float:
    """2^n |<z|U|psi>|^2 - 1."""
    if len(z) != state.n:
        raise DimensionError(f"Outcome {z!r} does not have {state.n} bits.")
    amp = unitary[bit_index(z)] @ state.amps
    return float(state.dim * jnp.abs(amp) ** 2 - 1.0)


def _mode_label(m: int, rerandomize: bool) -> str:
    label = f"{SPOOF_MODE_PREFIX}:{m}"
    return f"{label}:rerandomized" if rerandomize else label


def spoof_trial(
    codebook: Array, instance: SpoofInstance, shared_seed: int | None = None
) -> TrialRecord:
    """One spoofed trial; a shared seed turns on rerandomization by V = Haar(stream(seed)).

    Args:
        codebook (Array): Codewords as rows, shape (2^m, 2^n).
        instance (SpoofInstance): Target state and measurement unitary.
        shared_seed (int | None): Seed of the shared Haar rerandomization, if any.

    Returns:
        TrialRecord: Outcome scored against the exact target.
    """
    if codebook.ndim != 2 or codebook.shape[1] != instance.state.dim:
        raise DimensionError(
            f"Codebook shape {codebook.shape} does not match {instance.n}-qubit states."
        )
    psi, unitary = instance.state.amps, instance.unitary
    if shared_seed is not None:
        v = sample_haar_unitary(instance.n, stream(shared_seed))
        psi, unitary = v @ psi, unitary @ v.conj().T

    m = max(codebook.shape[0] - 1, 0).bit_length()
    z = bitstring(int(_outcome(codebook, psi, unitary)), instance.n)
    return TrialRecord(
        id=instance.id,
        n=instance.n,
        mode=_mode_label(m, shared_seed is not None),
        z=z,
        score=spoof_score(instance.state, instance.unitary, z),
        state_seed=instance.state_seed,
        meas_seed=instance.meas_seed,
        noise_seed=shared_seed if shared_seed is not None else 0,
    )


def spoof_score_from_seeds(record: TrialRecord) -> float:
    instance = materialize_spoof_instance(
        record.n, record.id, state_seed=record.state_seed, meas_seed=record.meas_seed
    )
    return spoof_score(instance.state, instance.unitary, record.z)


def run_spoof(
    n: int,
    m: int,
    trials: int,
    master_seed: int,
    rerandomize: bool = False,
    out: str | Path | None = None,
    threads: int | None = None,
    progress: bool = False,
) -> tuple[XebSummary, list[TrialRecord]]:
    """Spoof `trials` instances with one shared codebook drawn from the master seed."""
    _check_size(n, m)
    codebook = build_codebook(n, m, stream(child_seed(master_seed, CODEBOOK_OFFSET)))

    def one(index: int) -> TrialRecord:
        instance = make_spoof_instance(n, master_seed, index)
        shared = child_seed(master_seed, SHARED_OFFSET + index) if rerandomize else None
        return spoof_trial(codebook, instance, shared_seed=shared)

    workers = threads or os.cpu_count() or 1
    logger.info("Spoofing %d trials at n=%d with a %d-bit codebook", trials, n, m)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        records = list(
            tqdm(pool.map(one, range(trials)), total=trials, disable=not progress, desc="spoof")
        )

    if out is not None:
        write_records(records, out)
    summary = summarize(records)
    logger.info("spoofed XEB %.10g +- %.10g", summary.mean, summary.stderr)
    return summary, records
