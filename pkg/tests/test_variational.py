import json

import jax.numpy as jnp
import numpy as np
import pytest
from jax import random

from dxhoglib.exceptions import DimensionError, NormalizationError, ParamsFileError
from dxhoglib.quantum import (
    StateVector,
    apply_circuit,
    inner_product,
    sample_haar_state,
    zero_state,
)
from dxhoglib.variational import (
    NoiseConstants,
    OptimizerOptions,
    ansatz_state,
    build_layout,
    load_params,
    noise_product,
    objective_grad,
    optimize_ansatz,
    params_record,
    wrap_zz,
    write_params,
)


def _random_params(layout, key, scale=1.0):
    return np.asarray(random.uniform(key, (layout.n_params,), minval=-scale, maxval=scale))


def test_layout_sizes():
    layout = build_layout(4, 3)
    assert layout.n_u3_params == 3 * 4 * 4
    assert layout.n_zz_params == 2 * 3
    assert layout.n_params == 54
    assert layout.zz_pairs(0) == [(0, 1), (2, 3)]
    assert layout.zz_pairs(1) == [(1, 2), (3, 0)]


def test_layout_validation():
    with pytest.raises(DimensionError):
        build_layout(3, 2)
    with pytest.raises(ValueError):
        build_layout(4, 0)
    with pytest.raises(DimensionError):
        ansatz_state(build_layout(2, 1), np.zeros(3))


@pytest.mark.parametrize(("n", "depth"), [(2, 1), (4, 3), (6, 2)])
def test_ansatz_matches_gate_expansion(n, depth, key):
    layout = build_layout(n, depth)
    params = _random_params(layout, key, scale=2.0)
    fast = ansatz_state(layout, params)
    slow = apply_circuit(zero_state(n), layout.circuit(params))
    np.testing.assert_allclose(np.asarray(fast.amps), np.asarray(slow.amps), atol=1e-12)


def test_ansatz_state_is_normalised(key):
    layout = build_layout(4, 5)
    assert ansatz_state(layout, _random_params(layout, key)).norm() == pytest.approx(1.0)


def test_zero_noise_constants_give_unit_factor(key):
    layout = build_layout(4, 2)
    assert noise_product(_random_params(layout, key), layout, NoiseConstants.zero()) == 1.0


def test_noise_product_formula():
    layout = build_layout(2, 2)
    params = np.zeros(layout.n_params)
    params[layout.n_u3_params :] = [0.25, 1.75]
    constants = NoiseConstants()
    per_gate = [
        1 - 1.25 * (constants.c_slope * w + constants.c_offset) - 3 * constants.eps_mem
        for w in (0.25, 0.25)
    ]
    assert noise_product(params, layout, constants) == pytest.approx(np.prod(per_gate), rel=1e-14)


def test_wrap_zz():
    np.testing.assert_allclose(
        np.asarray(wrap_zz(jnp.array([0.2, 0.7, -0.6, 2.1]))), [0.2, -0.3, 0.4, 0.1], atol=1e-15
    )


def test_objective_invariant_under_zz_period(key):
    layout = build_layout(4, 2)
    params_key, target_key = random.split(key)
    params = _random_params(layout, params_key)
    target = sample_haar_state(4, target_key)
    shifted = params.copy()
    shifted[layout.n_u3_params] += 2.0
    value, _ = objective_grad(layout, params, target, NoiseConstants())
    value_shifted, _ = objective_grad(layout, shifted, target, NoiseConstants())
    assert value_shifted == pytest.approx(value, rel=1e-10)


def test_objective_is_overlap_times_noise(key):
    layout = build_layout(2, 2)
    params_key, target_key = random.split(key)
    params = _random_params(layout, params_key)
    target = sample_haar_state(2, target_key)
    value, _ = objective_grad(layout, params, target, NoiseConstants())
    overlap = abs(inner_product(target, ansatz_state(layout, params))) ** 2
    assert value == pytest.approx(overlap * noise_product(params, layout, NoiseConstants()))


def _check_gradient(n, depth, key, points):
    layout = build_layout(n, depth)
    constants = NoiseConstants()
    for i in range(points):
        params_key, target_key = random.split(random.fold_in(key, i))
        params = _random_params(layout, params_key)
        target = sample_haar_state(n, target_key)
        _, grad = objective_grad(layout, params, target, constants)

        h = 1e-6
        fd = np.empty_like(grad)
        for j in range(layout.n_params):
            step = np.zeros_like(params)
            step[j] = h
            up, _ = objective_grad(layout, params + step, target, constants)
            down, _ = objective_grad(layout, params - step, target, constants)
            fd[j] = (up - down) / (2 * h)
        scale = max(np.max(np.abs(fd)), 1e-3)
        assert np.max(np.abs(grad - fd)) / scale < 1e-5


@pytest.mark.parametrize(("n", "depth"), [(2, 2), (4, 2)])
def test_adjoint_gradient_matches_finite_differences(n, depth, key):
    _check_gradient(n, depth, key, points=2)


@pytest.mark.slow
@pytest.mark.parametrize("n", [2, 4, 6])
def test_adjoint_gradient_many_points(n, key):
    _check_gradient(n, 3, key, points=20)


def test_objective_grad_validation(key):
    layout = build_layout(2, 1)
    params = np.zeros(layout.n_params)
    with pytest.raises(DimensionError):
        objective_grad(layout, params, sample_haar_state(3, key), NoiseConstants())
    unnormalised = StateVector.from_amplitudes(np.ones(4))
    with pytest.raises(NormalizationError):
        objective_grad(layout, params, unnormalised, NoiseConstants())


def test_optimizer_fits_two_qubit_target(key):
    layout = build_layout(2, 2)
    target_key, init_key = random.split(key)
    target = sample_haar_state(2, target_key)
    opts = OptimizerOptions(max_iter=500)
    result = optimize_ansatz(layout, target, NoiseConstants.zero(), opts, init_key)

    assert result.overlap > 0.999
    assert result.noise_factor == 1.0
    assert result.predicted_fidelity == pytest.approx(result.overlap)
    assert np.all(np.diff(result.history) >= 0)
    prepared = ansatz_state(layout, result.params)
    assert abs(inner_product(target, prepared)) ** 2 == pytest.approx(result.overlap)


def test_optimizer_with_noise_reports_product(key):
    layout = build_layout(2, 2)
    target_key, init_key = random.split(key)
    result = optimize_ansatz(
        layout,
        sample_haar_state(2, target_key),
        NoiseConstants(),
        OptimizerOptions(max_iter=200),
        init_key,
    )
    assert result.noise_factor < 1.0
    assert result.predicted_fidelity == pytest.approx(result.overlap * result.noise_factor)


def test_params_file_round_trip(tmp_path, key):
    layout = build_layout(2, 1)
    target_key, init_key = random.split(key)
    result = optimize_ansatz(
        layout,
        sample_haar_state(2, target_key),
        NoiseConstants(),
        OptimizerOptions(max_iter=50),
        init_key,
    )
    path = tmp_path / "params.jsonl"
    write_params([params_record(layout, result, seed=7, index=3)], path)

    raw = json.loads(path.read_text().splitlines()[0])
    assert raw["index"] == 3 and raw["seed"] == 7
    assert len(raw["zz_angles_wrapped"]) == layout.n_zz_params

    entries = load_params(path)
    assert set(entries) == {3}
    np.testing.assert_array_equal(entries[3].params, result.params)
    assert entries[3].noise_factor == result.noise_factor


def test_params_file_errors(tmp_path):
    with pytest.raises(ParamsFileError):
        load_params(tmp_path / "missing.jsonl")
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"n": 2, "depth": 1, "seed": 0, "params": [0.0]}) + "\n")
    with pytest.raises(ParamsFileError):
        load_params(bad)


@pytest.mark.slow
def test_expressivity_at_six_qubits():
    layout = build_layout(6, 24)
    hits = 0
    for i in range(10):
        target_key, init_key = random.split(random.key(900 + i))
        result = optimize_ansatz(
            layout,
            sample_haar_state(6, target_key),
            NoiseConstants.zero(),
            OptimizerOptions(max_iter=3000),
            init_key,
        )
        hits += result.overlap >= 0.99
    assert hits >= 8


def test_twelve_qubit_layout_and_idle_noise():
    layout = build_layout(12, 86)
    assert layout.n_zz_params == 516
    assert layout.n_u3_params == 3132
    assert noise_product(np.zeros(layout.n_params), layout, NoiseConstants()) == pytest.approx(
        0.74225, abs=1e-4
    )


@pytest.mark.slow
def test_predicted_fidelity_at_twelve_qubits():
    layout = build_layout(12, 86)
    target_key, init_key = random.split(random.key(1212))
    result = optimize_ansatz(
        layout,
        sample_haar_state(12, target_key),
        NoiseConstants(),
        OptimizerOptions(max_iter=10000),
        init_key,
    )
    assert result.predicted_fidelity == pytest.approx(result.overlap * result.noise_factor)
    assert 0.40 <= result.predicted_fidelity <= 0.52
