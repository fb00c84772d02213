import math

import jax.numpy as jnp
import numpy as np
import pytest
from jax import random
from scipy import stats

from dxhoglib.exceptions import DimensionError, SizeGuardError
from dxhoglib.gf2 import gf2_rank
from dxhoglib.quantum import (
    StateVector,
    apply_circuit,
    circuit_unitary,
    inner_product,
    sample_haar_state,
    zero_state,
)
from dxhoglib.stabilizer import (
    MeasurementTemplate,
    enumerate_stabilizer_states,
    eta,
    inverse_measurement_circuit,
    measurement_probabilities,
    raw_circuit,
    rotate_to_template_basis,
    sample_rref_subspace,
    sample_stabilizer_preparation,
    sample_support_dim,
    stabilizer_count,
    state_key,
    support_dim_weights,
    template_circuit,
    to_measurement_template,
)


def _prepared(raw) -> StateVector:
    return apply_circuit(zero_state(raw.n), raw_circuit(raw))


def _same_up_to_phase(a: StateVector, b: StateVector) -> bool:
    return abs(abs(inner_product(a, b)) - 1.0) < 1e-9


@pytest.mark.parametrize(("n", "count"), [(1, 6), (2, 60), (3, 1080), (4, 36720)])
def test_stabilizer_count(n, count):
    assert stabilizer_count(n) == count


def test_stabilizer_count_guard():
    with pytest.raises(SizeGuardError):
        stabilizer_count(11)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_enumeration_matches_count(n):
    assert len(enumerate_stabilizer_states(n)) == stabilizer_count(n)


def test_eta_full_support_weight():
    assert eta(3, 0) == pytest.approx(1.0)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_support_weights_match_counts(n):
    weights = support_dim_weights(n).dimension_probabilities()
    assert weights.sum() == pytest.approx(1.0)
    if n <= 3:
        states = enumerate_stabilizer_states(n)
        support_sizes = [int(np.sum(np.abs(np.asarray(s.amps)) > 1e-9)) for s in states]
        counts = np.bincount([int(math.log2(s)) for s in support_sizes], minlength=n + 1)
        np.testing.assert_allclose(weights, counts / counts.sum(), atol=1e-12)


def test_support_dim_sampler_frequencies():
    n = 3
    keys = random.split(random.key(11), 6000)
    draws = np.bincount([sample_support_dim(n, k) for k in keys], minlength=n + 1)
    expected = support_dim_weights(n).dimension_probabilities() * draws.sum()
    assert stats.chisquare(draws, expected).pvalue > 1e-3


def test_rref_subspace_has_requested_dimension(key):
    for k in range(5):
        rref = sample_rref_subspace(4, k, random.fold_in(key, k))
        assert rref.k == k
        assert gf2_rank(rref.bits) == k
    with pytest.raises(ValueError):
        sample_rref_subspace(3, 4, key)


def test_preparation_layers_respect_pivots(key):
    for i in range(50):
        raw = sample_stabilizer_preparation(5, random.fold_in(key, i))
        pivots = set(raw.pivots)
        assert set(raw.x_mask).isdisjoint(pivots)
        assert set(raw.s_mask) <= pivots and set(raw.z_mask) <= pivots
        assert all(set(e) <= pivots for e in raw.cz_edges)
        assert all(a in pivots and b not in pivots for a, b in raw.cnot_edges)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_template_prepares_same_state(n):
    keys = random.split(random.key(100 + n), 200)
    for key in keys:
        raw = sample_stabilizer_preparation(n, key)
        rewritten = apply_circuit(zero_state(n), template_circuit(to_measurement_template(raw)))
        assert _same_up_to_phase(_prepared(raw), rewritten)


def test_inverse_measurement_circuit_undoes_template(key):
    tpl = to_measurement_template(sample_stabilizer_preparation(4, key))
    forward = np.asarray(circuit_unitary(template_circuit(tpl)))
    backward = np.asarray(circuit_unitary(inverse_measurement_circuit(tpl)))
    np.testing.assert_allclose(backward @ forward, np.eye(16), atol=1e-12)


@pytest.mark.parametrize("n", [1, 3, 5])
def test_fast_rotation_matches_gates(n):
    keys = random.split(random.key(200 + n), 20)
    for key in keys:
        psi_key, meas_key = random.split(key)
        psi = sample_haar_state(n, psi_key)
        tpl = to_measurement_template(sample_stabilizer_preparation(n, meas_key))
        slow = apply_circuit(psi, inverse_measurement_circuit(tpl)).amps
        fast = rotate_to_template_basis(psi, tpl).amps
        np.testing.assert_allclose(np.asarray(fast), np.asarray(slow), atol=1e-12)


def test_measurement_probabilities_are_normalised(key):
    psi_key, meas_key = random.split(key)
    psi = sample_haar_state(6, psi_key)
    tpl = to_measurement_template(sample_stabilizer_preparation(6, meas_key))
    assert float(jnp.sum(measurement_probabilities(psi, tpl))) == pytest.approx(1.0)
    with pytest.raises(DimensionError):
        measurement_probabilities(sample_haar_state(5, psi_key), tpl)


def test_identity_template_measures_computational_basis(key):
    psi = sample_haar_state(3, key)
    probs = measurement_probabilities(psi, MeasurementTemplate.identity(3))
    np.testing.assert_allclose(np.asarray(probs), np.abs(np.asarray(psi.amps)) ** 2, atol=1e-12)


def test_template_json(key):
    tpl = to_measurement_template(sample_stabilizer_preparation(5, key))
    assert MeasurementTemplate.from_json(tpl.to_json()) == tpl


@pytest.mark.parametrize(("n", "draws_per_state"), [(1, 1000)])
def test_sampler_is_uniform(n, draws_per_state):
    index = {state_key(s): i for i, s in enumerate(enumerate_stabilizer_states(n))}
    counts = np.zeros(len(index), dtype=np.int64)
    for key in random.split(random.key(5), draws_per_state * len(index)):
        counts[index[state_key(_prepared(sample_stabilizer_preparation(n, key)))]] += 1
    assert stats.chisquare(counts).pvalue > 1e-3


@pytest.mark.slow
def test_sampler_is_uniform_two_qubits():
    test_sampler_is_uniform(2, 1000)


@pytest.mark.slow
@pytest.mark.parametrize("n", [2, 4, 6])
def test_second_moment_matches_two_design(n):
    # E sum_z |<z|s>|^4 = 2 / (2^n + 1) for a uniformly random stabilizer state
    draws = 20000
    values = np.array(
        [
            float(jnp.sum(jnp.abs(_prepared(sample_stabilizer_preparation(n, k)).amps) ** 4))
            for k in random.split(random.key(6), draws)
        ]
    )
    stderr = values.std(ddof=1) / math.sqrt(draws)
    assert abs(values.mean() - 2 / (2**n + 1)) <= 3 * stderr


@pytest.mark.parametrize("k", [1, 2])
def test_rref_subspace_is_uniform(k):
    # GF(2)^3 has seven subspaces of dimension 1 and seven of dimension 2
    n, draws = 3, 3500
    keys = random.split(random.key(40 + k), draws)
    seen: dict[bytes, int] = {}
    for key in keys:
        bits = sample_rref_subspace(n, k, key).bits.tobytes()
        seen[bits] = seen.get(bits, 0) + 1
    assert len(seen) == 7
    assert stats.chisquare(list(seen.values())).pvalue > 1e-3


@pytest.mark.parametrize("n", [2, 3, 5])
def test_support_size_is_two_to_the_pivot_count(n, key):
    for i in range(40):
        raw = sample_stabilizer_preparation(n, random.fold_in(key, i))
        amps = np.abs(np.asarray(_prepared(raw).amps))
        support = amps > 1e-9
        assert support.sum() == 2 ** len(raw.pivots)
        np.testing.assert_allclose(amps[support], 2 ** (-len(raw.pivots) / 2), atol=1e-12)


@pytest.mark.slow
def test_overlap_fourth_moment_with_fixed_haar_state():
    # E_s |<psi|s>|^4 = 2 / (2^n (2^n + 1)) for any fixed psi
    n, draws = 3, 20000
    psi = sample_haar_state(n, random.key(8))
    values = np.array(
        [
            abs(inner_product(psi, _prepared(sample_stabilizer_preparation(n, k)))) ** 4
            for k in random.split(random.key(9), draws)
        ]
    )
    stderr = values.std(ddof=1) / math.sqrt(draws)
    dim = 1 << n
    assert abs(values.mean() - 2 / (dim * (dim + 1))) <= 3 * stderr
