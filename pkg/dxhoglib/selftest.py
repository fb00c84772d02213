"""Named consistency checks run by `dxhog selftest quick|full`.

Quick checks are deterministic and finish in seconds. Full checks add Monte-Carlo comparisons
against closed-form expectations, judged at three standard errors.
"""

import math
import time
from collections.abc import Callable
from dataclasses import dataclass
from enum import StrEnum, auto

import jax.numpy as jnp
import numpy as np
from jax import random
from scipy import stats

from dxhoglib.bounds import (
    EnsembleName,
    get_ensemble,
    harmonic,
    lb_eps,
    lb_eps_opt,
    lb_min_m,
    norm_bounds,
    ub_eps,
    ub_eps_exact,
    ub_min_m,
)
from dxhoglib.exceptions import DxhogError, VerificationError
from dxhoglib.protocol import TrialModeName, get_trial_mode, run_batch, verify_records
from dxhoglib.quantum import (
    Circuit,
    Gate,
    GateKind,
    StateVector,
    apply_circuit,
    circuit_unitary,
    inner_product,
    sample_haar_state,
    zero_state,
)
from dxhoglib.spoof import run_spoof
from dxhoglib.stabilizer import (
    enumerate_stabilizer_states,
    inverse_measurement_circuit,
    measurement_probabilities,
    raw_circuit,
    sample_stabilizer_preparation,
    stabilizer_count,
    state_key,
    template_circuit,
    to_measurement_template,
)
from dxhoglib.util.logger import get_logger
from dxhoglib.variational import NoiseConstants, build_layout, objective_grad

logger = get_logger("selftest")

SELFTEST_SEED = 20240509


class CheckLevel(StrEnum):
    QUICK = auto()
    FULL = auto()


__CHECK__: dict[str, tuple[CheckLevel, Callable[[], None]]] = {}


def register_check(name: str, level: CheckLevel = CheckLevel.QUICK):
    def wrapper(fn):
        if __CHECK__.get(name):
            raise NameError(f"Name {name} is already registered!")
        __CHECK__[name] = (level, fn)
        return fn

    return wrapper


def get_check(name: str) -> Callable[[], None]:
    if __CHECK__.get(name) is None:
        raise NameError(f"Name {name} is not defined!")
    return __CHECK__[name][1]


def _expect(condition: bool, message: str) -> None:
    if not condition:
        raise VerificationError(message)


def _within_sigma(values: np.ndarray, expected: float, name: str, k: float = 3.0) -> None:
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(values.size))
    _expect(
        abs(mean - expected) <= k * stderr,
        f"{name}: mean {mean:.6g} +- {stderr:.2g} is not within {k} sigma of {expected:.6g}",
    )


def _same_up_to_phase(a: StateVector, b: StateVector, atol: float = 1e-9) -> bool:
    return abs(abs(inner_product(a, b)) - 1.0) < atol


# Quick

@register_check("bounds_headline")
def _bounds_headline() -> None:
    clifford = get_ensemble(EnsembleName.CLIFFORD)
    for eps, m in ((0.427, 78), (0.362, 62)):
        got = lb_min_m(12, clifford, eps)
        _expect(got == m, f"lb_min_m(12, clifford, {eps}) = {got}, expected {m}")
    for eps, m in ((0.427, 330), (0.493, 382)):
        got = ub_min_m(12, eps)
        _expect(got == m, f"ub_min_m(12, {eps}) = {got}, expected {m}")


@register_check("bounds_spot_values")
def _bounds_spot_values() -> None:
    bounds = norm_bounds(get_ensemble(EnsembleName.CLIFFORD), 12)
    _expect(math.isclose(bounds.A, 2.2094e-2, rel_tol=5e-4), f"A = {bounds.A}")
    _expect(math.isclose(bounds.B, 3.9452e-3, rel_tol=5e-4), f"B = {bounds.B}")
    _expect(bounds.t_opt == 5, f"t_opt = {bounds.t_opt}")
    _expect(lb_eps(12, 61, 1.53, bounds) < 0.360, "eps(61, 1.53) >= 0.360")
    _expect(lb_eps(12, 77, 1.47, bounds) < 0.426, "eps(77, 1.47) >= 0.426")


@register_check("gate_unitarity")
def _gate_unitarity() -> None:
    rng = np.random.default_rng(SELFTEST_SEED)
    gates = [
        Gate(kind=GateKind.U3, targets=(0,), angles=tuple(rng.uniform(-2, 2, 3))),
        Gate(kind=GateKind.ZZ, targets=(0, 1), angles=(float(rng.uniform(-2, 2)),)),
    ]
    gates += [Gate(kind=k, targets=(0,)) for k in (GateKind.H, GateKind.S, GateKind.X)]
    gates += [Gate(kind=k, targets=(0, 1)) for k in (GateKind.CZ, GateKind.CNOT)]
    for gate in gates:
        u = np.asarray(circuit_unitary(Circuit(n=2, ops=[gate])))
        _expect(np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12), f"{gate.kind} not unitary")


@register_check("stabilizer_counts")
def _stabilizer_counts() -> None:
    for n, count in ((1, 6), (2, 60), (3, 1080)):
        _expect(stabilizer_count(n) == count, f"stabilizer_count({n}) != {count}")
    for n in (1, 2):
        enumerated = len(enumerate_stabilizer_states(n))
        _expect(enumerated == stabilizer_count(n), f"enumerated {enumerated} states at n={n}")


@register_check("template_soundness")
def _template_soundness() -> None:
    keys = random.split(random.key(SELFTEST_SEED), 60)
    for i, key in enumerate(keys):
        n = 2 + i % 3
        raw = sample_stabilizer_preparation(n, key)
        tpl = to_measurement_template(raw)
        prepared = apply_circuit(zero_state(n), raw_circuit(raw))
        rewritten = apply_circuit(zero_state(n), template_circuit(tpl))
        _expect(_same_up_to_phase(prepared, rewritten), f"template differs at sample {i}, n={n}")


@register_check("fast_rotation")
def _fast_rotation() -> None:
    keys = random.split(random.key(SELFTEST_SEED + 1), 20)
    for key in keys:
        psi_key, meas_key = random.split(key)
        psi = sample_haar_state(4, psi_key)
        tpl = to_measurement_template(sample_stabilizer_preparation(4, meas_key))
        slow = jnp.abs(apply_circuit(psi, inverse_measurement_circuit(tpl)).amps) ** 2
        fast = measurement_probabilities(psi, tpl)
        _expect(bool(jnp.allclose(slow, fast, atol=1e-12)), "fast rotation disagrees with gates")


@register_check("trial_replay")
def _trial_replay() -> None:
    mode = get_trial_mode(TrialModeName.IDEAL)
    _, first = run_batch(4, 16, mode, SELFTEST_SEED, threads=1)
    _, second = run_batch(4, 16, mode, SELFTEST_SEED, threads=4)
    _expect(first == second, "trial records depend on the thread count")
    _expect(not verify_records(first), "recomputed scores differ from logged scores")


@register_check("adjoint_gradient")
def _adjoint_gradient() -> None:
    layout = build_layout(2, 2)
    key_params, key_target = random.split(random.key(SELFTEST_SEED + 2))
    params = np.asarray(random.uniform(key_params, (layout.n_params,), minval=-1.0, maxval=1.0))
    target = sample_haar_state(2, key_target)
    constants = NoiseConstants()

    _, grad = objective_grad(layout, params, target, constants)
    h = 1e-6
    for j in range(layout.n_params):
        step = np.zeros_like(params)
        step[j] = h
        up, _ = objective_grad(layout, params + step, target, constants)
        down, _ = objective_grad(layout, params - step, target, constants)
        fd = (up - down) / (2 * h)
        _expect(abs(fd - grad[j]) <= 1e-5 * max(abs(fd), 1e-3), f"gradient mismatch at {j}")


# Full

@register_check("ideal_mean", level=CheckLevel.FULL)
def _ideal_mean() -> None:
    n = 8
    _, records = run_batch(n, 2000, get_trial_mode(TrialModeName.IDEAL), SELFTEST_SEED)
    dim = 1 << n
    _within_sigma(np.array([r.score for r in records]), (dim - 1) / (dim + 1), "ideal XEB")


@register_check("depolarizing_mean", level=CheckLevel.FULL)
def _depolarizing_mean() -> None:
    n, fidelity = 8, 0.427
    mode = get_trial_mode(TrialModeName.DEPOLARIZING, fidelity=fidelity)
    _, records = run_batch(n, 2000, mode, SELFTEST_SEED)
    dim = 1 << n
    expected = fidelity * (dim - 1) / (dim + 1)
    _within_sigma(np.array([r.score for r in records]), expected, "depolarized XEB")


@register_check("stabilizer_uniformity", level=CheckLevel.FULL)
def _stabilizer_uniformity() -> None:
    for n, draws_per_state in ((1, 1000), (2, 200)):
        index = {state_key(s): i for i, s in enumerate(enumerate_stabilizer_states(n))}
        counts = np.zeros(len(index), dtype=np.int64)
        keys = random.split(random.key(SELFTEST_SEED + n), draws_per_state * len(index))
        for key in keys:
            state = apply_circuit(zero_state(n), raw_circuit(sample_stabilizer_preparation(n, key)))
            counts[index[state_key(state)]] += 1
        p_value = stats.chisquare(counts).pvalue
        _expect(p_value > 1e-3, f"stabilizer sampler not uniform at n={n} (p={p_value:.3g})")


@register_check("haar_max_statistic", level=CheckLevel.FULL)
def _haar_max_statistic() -> None:
    n, samples = 4, 20000
    keys = random.split(random.key(SELFTEST_SEED + 3), samples)
    maxima = np.array([float(jnp.max(jnp.abs(sample_haar_state(n, k).amps) ** 2)) for k in keys])
    _within_sigma(maxima, harmonic(1 << n) / (1 << n), "max Born probability")


@register_check("spoof_vs_theory", level=CheckLevel.FULL)
def _spoof_vs_theory() -> None:
    n, m = 3, 6
    _, records = run_spoof(n, m, 4000, SELFTEST_SEED)
    _within_sigma(np.array([r.score for r in records]), ub_eps_exact(n, m), "spoofed XEB")


@register_check("cross_bound_consistency", level=CheckLevel.FULL)
def _cross_bound_consistency() -> None:
    for name in (EnsembleName.CLIFFORD, EnsembleName.HAAR):
        bounds = norm_bounds(get_ensemble(name), 12)
        for m in range(20, 801, 20):
            lower, _ = lb_eps_opt(12, m, bounds)
            _expect(ub_eps(12, m) <= lower, f"ub_eps(12, {m}) exceeds the {name} lower bound")


@dataclass(frozen=True, kw_only=True)
class CheckResult:
    name: str
    passed: bool
    seconds: float
    detail: str = ""


def run_selftest(level: CheckLevel) -> list[CheckResult]:
    """Run every quick check, plus the full checks when `level` is FULL."""
    results = []
    for name, (check_level, fn) in __CHECK__.items():
        if check_level == CheckLevel.FULL and level != CheckLevel.FULL:
            continue
        start = time.perf_counter()
        try:
            fn()
        except Exception as err:
            # failed expectations carry their own message; anything else is a broken check
            detail = str(err) if isinstance(err, DxhogError) else f"{type(err).__name__}: {err}"
            results.append(
                CheckResult(
                    name=name, passed=False, seconds=time.perf_counter() - start, detail=detail
                )
            )
            logger.warning("%s failed: %s", name, detail)
            continue
        results.append(CheckResult(name=name, passed=True, seconds=time.perf_counter() - start))
        logger.info("%s passed", name)
    return results
