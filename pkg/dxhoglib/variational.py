"""Brickwork ansatz, noise-weighted fidelity objective and its L-BFGS optimisation.

The ansatz alternates full layers of U3 gates with brickwork ZZ layers on a ring: even layers
pair (0, 1), (2, 3), ..., odd layers pair (1, 2), ..., (n-1, 0). U3 layers bracket every ZZ
layer, so depth d has d + 1 U3 layers. The flat parameter vector holds the U3 block
(d + 1, n, 3) followed by the ZZ block (d, n / 2), all in pi units.

The objective is F = |<psi|C(theta)|0^n>|^2 * prod_i (1 - 5/4 eps_2q(theta_i) - 3 eps_mem) with
eps_2q(theta) = c_slope |theta| + c_offset evaluated on ZZ angles wrapped to [-1/2, 1/2].
"""

import functools
import json
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jax
import jax.numpy as jnp
import numpy as np
import optax
from jax import lax, random
from jaxtyping import Array, Float, PRNGKeyArray
from tqdm.auto import tqdm

from dxhoglib.exceptions import DimensionError, NormalizationError, ParamsFileError
from dxhoglib.quantum import (
    NORM_TOL,
    Circuit,
    Gate,
    GateKind,
    StateVector,
    apply_matrix,
    sample_haar_su2_angles,
    u3_matrix,
)
from dxhoglib.util.logger import get_logger

logger = get_logger("variational")

Edge = tuple[int, int]


@dataclass(frozen=True, kw_only=True)
class NoiseConstants:
    c_slope: float = 14.8e-4
    c_offset: float = 2.7e-4
    eps_mem: float = 8e-5

    def __post_init__(self) -> None:
        if min(self.c_slope, self.c_offset, self.eps_mem) < 0:
            raise ValueError(f"Noise constants must be non-negative, got {self}.")

    @classmethod
    def zero(cls) -> "NoiseConstants":
        return cls(c_slope=0.0, c_offset=0.0, eps_mem=0.0)


@dataclass(frozen=True, kw_only=True)
class AnsatzLayout:
    n: int
    depth: int

    @property
    def dim(self) -> int:
        return 1 << self.n

    @property
    def n_pairs(self) -> int:
        return self.n // 2

    @property
    def n_u3_params(self) -> int:
        return 3 * self.n * (self.depth + 1)

    @property
    def n_zz_params(self) -> int:
        return self.n_pairs * self.depth

    @property
    def n_params(self) -> int:
        return self.n_u3_params + self.n_zz_params

    def zz_pairs(self, layer: int) -> list[Edge]:
        offset = layer % 2
        return [(2 * i + offset, (2 * i + offset + 1) % self.n) for i in range(self.n_pairs)]

    def unpack(self, params: Array) -> tuple[Float[Array, "d1 n 3"], Float[Array, "d p"]]:
        u3 = params[: self.n_u3_params].reshape(self.depth + 1, self.n, 3)
        zz = params[self.n_u3_params :].reshape(self.depth, self.n_pairs)
        return u3, zz

    def pack(self, u3: Array, zz: Array) -> Float[Array, "p"]:
        return jnp.concatenate([u3.reshape(-1), zz.reshape(-1)])

    def parity_signs(self) -> Float[np.ndarray, "2 dim pairs"]:
        """Eigenvalue of Z_a Z_b on every basis state, for each pair of both layer parities."""
        index = np.arange(self.dim)
        signs = np.empty((2, self.dim, self.n_pairs))
        for parity in range(2):
            for i, (a, b) in enumerate(self.zz_pairs(parity)):
                signs[parity, :, i] = 1.0 - 2.0 * (((index >> a) ^ (index >> b)) & 1)
        return signs

    def circuit(self, params: Array) -> Circuit:
        """Gate-by-gate expansion, for cross-checking against the quantum core."""
        u3, zz = (np.asarray(x) for x in self.unpack(jnp.asarray(params)))
        circuit = Circuit(n=self.n)
        for layer in range(self.depth + 1):
            if layer > 0:
                for i, pair in enumerate(self.zz_pairs(layer - 1)):
                    angle = float(zz[layer - 1, i])
                    circuit.append(Gate(kind=GateKind.ZZ, targets=pair, angles=(angle,)))
            for q in range(self.n):
                angles = tuple(float(x) for x in u3[layer, q])
                circuit.append(Gate(kind=GateKind.U3, targets=(q,), angles=angles))
        return circuit


def build_layout(n: int, depth: int) -> AnsatzLayout:
    if n < 2 or n % 2:
        raise DimensionError(f"Periodic brickwork needs an even qubit count >= 2, got {n}.")
    if depth < 1:
        raise ValueError(f"Depth must be >= 1, got {depth}.")
    return AnsatzLayout(n=n, depth=depth)


def _check_params(layout: AnsatzLayout, params: Any) -> Array:
    params = jnp.asarray(params, dtype=jnp.float64)
    if params.shape != (layout.n_params,):
        raise DimensionError(f"Expected {layout.n_params} parameters, got shape {params.shape}.")
    return params


def _u3_layer(amps: Array, angles: Array, n: int) -> Array:
    mats = jax.vmap(lambda a: u3_matrix(a[0], a[1], a[2]))(angles)
    for q in range(n):
        amps = apply_matrix(amps, mats[q], (q,), n)
    return amps


def _u3_layer_inverse(amps: Array, angles: Array, n: int) -> Array:
    mats = jax.vmap(lambda a: u3_matrix(a[0], a[1], a[2]).conj().T)(angles)
    for q in reversed(range(n)):
        amps = apply_matrix(amps, mats[q], (q,), n)
    return amps


def _zz_phase(zz: Array, signs: Array) -> Array:
    return jnp.exp(-0.5j * jnp.pi * (signs @ zz))


@dataclass(frozen=True)
class _Kernels:
    forward: Any
    overlap: Any


@functools.lru_cache(maxsize=32)
def _kernels(layout: AnsatzLayout) -> _Kernels:
    """Forward simulation and the overlap |<target|C(params)|0>|^2 with an adjoint-method VJP.

    The backward pass walks the blocks (ZZ layer then U3 layer) in reverse, un-computing the
    forward state and back-propagating the target, so memory stays at a few statevectors and the
    cost is a constant number of passes over the gate list.
    """
    # numpy constants: this may first run while an outer function is being traced
    n = layout.n
    signs = layout.parity_signs()
    parities = np.arange(layout.depth) % 2
    zero = np.zeros(layout.dim, dtype=np.complex128)
    zero[0] = 1.0

    def phase(zz_j: Array, parity: Array) -> Array:
        return _zz_phase(zz_j, jnp.take(signs, parity, axis=0))

    def block(amps: Array, zz_j: Array, u3_j: Array, parity: Array) -> Array:
        return _u3_layer(amps * phase(zz_j, parity), u3_j, n)

    def block_inverse(amps: Array, zz_j: Array, u3_j: Array, parity: Array) -> Array:
        return _u3_layer_inverse(amps, u3_j, n) * jnp.conj(phase(zz_j, parity))

    def forward(params: Array) -> Array:
        u3, zz = layout.unpack(params)

        def step(amps: Array, xs: tuple[Array, Array, Array]) -> tuple[Array, None]:
            return block(amps, *xs), None

        amps, _ = lax.scan(step, _u3_layer(zero, u3[0], n), (zz, u3[1:], parities))
        return amps

    @jax.custom_vjp
    def overlap(params: Array, target: Array) -> Array:
        return jnp.abs(jnp.vdot(target, forward(params))) ** 2

    def overlap_fwd(params: Array, target: Array) -> tuple[Array, tuple[Array, ...]]:
        final = forward(params)
        amp = jnp.vdot(target, final)
        return jnp.abs(amp) ** 2, (params, target, final, amp)

    def overlap_bwd(res: tuple[Array, ...], g: Array) -> tuple[Array, Array]:
        params, target, final, amp = res
        u3, zz = layout.unpack(params)
        weight = 2.0 * jnp.conj(amp)

        def local(zz_j: Array, u3_j: Array, before: Array, costate: Array, parity: Array) -> Array:
            return jnp.real(weight * jnp.vdot(costate, block(before, zz_j, u3_j, parity)))

        local_grad = jax.grad(local, argnums=(0, 1))

        def step(
            carry: tuple[Array, Array], xs: tuple[Array, Array, Array]
        ) -> tuple[tuple[Array, Array], tuple[Array, Array]]:
            after, costate = carry
            zz_j, u3_j, parity = xs
            before = block_inverse(after, zz_j, u3_j, parity)
            grads = local_grad(zz_j, u3_j, before, costate, parity)
            return (before, block_inverse(costate, zz_j, u3_j, parity)), grads

        (_, costate), (g_zz, g_u3_rest) = lax.scan(
            step, (final, target), (zz, u3[1:], parities), reverse=True
        )
        g_u3_first = jax.grad(
            lambda angles: jnp.real(weight * jnp.vdot(costate, _u3_layer(zero, angles, n)))
        )(u3[0])
        grad = layout.pack(jnp.concatenate([g_u3_first[None], g_u3_rest]), g_zz)
        return g * grad, jnp.zeros_like(target)

    overlap.defvjp(overlap_fwd, overlap_bwd)
    return _Kernels(forward=jax.jit(forward), overlap=overlap)


def ansatz_state(layout: AnsatzLayout, params: Any) -> StateVector:
    params = _check_params(layout, params)
    return StateVector(amps=_kernels(layout).forward(params), n=layout.n)


def wrap_zz(theta: Array) -> Array:
    """ZZ angles wrapped to [-1/2, 1/2] (pi units)."""
    return theta - jnp.round(theta)


def _noise_product(params: Array, layout: AnsatzLayout, constants: NoiseConstants) -> Array:
    _, zz = layout.unpack(params)
    wrapped = wrap_zz(zz)
    # w * sign(w) keeps the subgradient at exactly zero on the kink
    magnitude = wrapped * jnp.sign(wrapped)
    eps_2q = constants.c_slope * magnitude + constants.c_offset
    return jnp.prod(1.0 - 1.25 * eps_2q - 3.0 * constants.eps_mem)


def noise_product(params: Any, layout: AnsatzLayout, constants: NoiseConstants) -> float:
    return float(_noise_product(_check_params(layout, params), layout, constants))


def _objective(
    params: Array, target: Array, layout: AnsatzLayout, constants: NoiseConstants
) -> Array:
    overlap = _kernels(layout).overlap(params, target)
    return overlap * _noise_product(params, layout, constants)


@functools.lru_cache(maxsize=32)
def _value_and_grad(layout: AnsatzLayout, constants: NoiseConstants) -> Any:
    return jax.jit(
        jax.value_and_grad(functools.partial(_objective, layout=layout, constants=constants))
    )


def _check_target(layout: AnsatzLayout, target: StateVector) -> None:
    if target.n != layout.n:
        raise DimensionError(f"Target on {target.n} qubits, ansatz on {layout.n}.")
    if abs(target.norm() - 1.0) > NORM_TOL:
        raise NormalizationError("Optimisation target must be normalised.")


def objective_grad(
    layout: AnsatzLayout, params: Any, target: StateVector, constants: NoiseConstants
) -> tuple[float, Float[np.ndarray, "p"]]:
    """F(params) and its gradient; the target is treated as constant data."""
    params = _check_params(layout, params)
    _check_target(layout, target)
    value, grad = _value_and_grad(layout, constants)(params, target.amps)
    return float(value), np.asarray(grad)


@dataclass(frozen=True, kw_only=True)
class OptimizerOptions:
    max_iter: int = 10000
    grad_tol: float = 1e-8
    rel_tol: float = 1e-12
    memory_size: int = 10
    max_linesearch_steps: int = 30
    zz_perturbation: float = 1e-3
    progress: bool = False


@dataclass(frozen=True, kw_only=True)
class OptResult:
    params: Float[np.ndarray, "p"]
    overlap: float
    noise_factor: float
    predicted_fidelity: float
    iterations: int
    converged: bool
    history: tuple[float, ...] = field(default=(), repr=False)


@functools.lru_cache(maxsize=32)
def _lbfgs_step(
    layout: AnsatzLayout, constants: NoiseConstants, memory_size: int, max_linesearch_steps: int
) -> tuple[optax.GradientTransformationExtraArgs, Any]:
    solver = optax.lbfgs(
        memory_size=memory_size,
        linesearch=optax.scale_by_zoom_linesearch(max_linesearch_steps=max_linesearch_steps),
    )

    @jax.jit
    def step(params: Array, state: Any, target: Array) -> tuple[Array, Any, Array, Array]:
        def loss(p: Array) -> Array:
            return -_objective(p, target, layout, constants)

        value, grad = optax.value_and_grad_from_state(loss)(params, state=state)
        updates, state = solver.update(grad, state, params, value=value, grad=grad, value_fn=loss)
        return optax.apply_updates(params, updates), state, value, grad

    return solver, step


def optimize_ansatz(
    layout: AnsatzLayout,
    target: StateVector,
    constants: NoiseConstants,
    opts: OptimizerOptions,
    rng: PRNGKeyArray,
) -> OptResult:
    """Maximise F from Haar-random U3 angles and zero ZZ angles; returns the best point seen.

    Stops when the gradient infinity-norm drops below `grad_tol`, when F changes by less than
    `rel_tol` relative, or after `max_iter` iterations. Non-convergence is reported, not raised.
    """
    _check_target(layout, target)
    init_rng, perturb_rng = random.split(rng)
    u3 = sample_haar_su2_angles(init_rng, (layout.depth + 1, layout.n))
    params = layout.pack(u3, jnp.zeros((layout.depth, layout.n_pairs)))

    solver, step = _lbfgs_step(layout, constants, opts.memory_size, opts.max_linesearch_steps)
    state = solver.init(params)
    target_amps = target.amps

    best_f, best_params = -np.inf, params
    history: list[float] = []
    prev_f: float | None = None
    converged = False
    iterations = 0

    pbar = tqdm(range(1, opts.max_iter + 1), disable=not opts.progress, desc="L-BFGS")
    for iterations in pbar:
        new_params, state, value, grad = step(params, state, target_amps)
        f = -float(value)
        if f > best_f:
            best_f, best_params = f, params
        history.append(best_f)
        pbar.set_postfix(F=f"{best_f:.6f}")

        if float(jnp.max(jnp.abs(grad))) < opts.grad_tol:
            converged = True
            break
        if prev_f is not None and abs(f - prev_f) <= opts.rel_tol * max(abs(prev_f), 1e-300):
            converged = True
            break
        prev_f = f

        _, zz = layout.unpack(new_params)
        if iterations == 1 and not bool(jnp.any(zz != 0.0)):
            # line search left every ZZ angle on the |theta| kink
            signs = random.rademacher(perturb_rng, zz.shape, dtype=jnp.float64)
            u3_new, _ = layout.unpack(new_params)
            new_params = layout.pack(u3_new, opts.zz_perturbation * signs)
            state = solver.init(new_params)
            logger.debug("Perturbed ZZ angles off zero after the first iteration.")
        params = new_params
    pbar.close()

    if not converged:
        final_f, _ = _value_and_grad(layout, constants)(params, target_amps)
        if float(final_f) > best_f:
            best_f, best_params = float(final_f), params
            history.append(best_f)

    overlap = float(_kernels(layout).overlap(best_params, target_amps))
    noise = float(_noise_product(best_params, layout, constants))
    logger.info(
        "n=%d depth=%d: F=%.6f (overlap %.6f, noise %.6f) after %d iterations, converged=%s",
        layout.n,
        layout.depth,
        overlap * noise,
        overlap,
        noise,
        iterations,
        converged,
    )
    return OptResult(
        params=np.asarray(best_params),
        overlap=overlap,
        noise_factor=noise,
        predicted_fidelity=overlap * noise,
        iterations=iterations,
        converged=converged,
        history=tuple(history),
    )


def params_record(
    layout: AnsatzLayout, result: OptResult, seed: int, index: int
) -> dict[str, Any]:
    _, zz = layout.unpack(jnp.asarray(result.params))
    return {
        "n": layout.n,
        "depth": layout.depth,
        "index": index,
        "seed": seed,
        "params": [float(x) for x in result.params],
        "zz_angles_wrapped": [float(x) for x in np.asarray(wrap_zz(zz)).reshape(-1)],
        "predicted_fidelity": result.predicted_fidelity,
        "overlap": result.overlap,
        "noise_factor": result.noise_factor,
        "iterations": result.iterations,
        "converged": result.converged,
    }


def write_params(records: Iterable[dict[str, Any]], path: str | Path) -> None:
    with Path(path).open("w") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")


@dataclass(frozen=True, kw_only=True)
class ParamsEntry:
    layout: AnsatzLayout
    params: Float[np.ndarray, "p"]
    seed: int
    index: int
    noise_factor: float


def load_params(path: str | Path) -> dict[int, ParamsEntry]:
    """Read a params file (one JSON object per line) keyed by instance index."""
    path = Path(path)
    if not path.is_file():
        raise ParamsFileError(f"Params file {path} not found.")

    entries: dict[int, ParamsEntry] = {}
    with path.open() as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                layout = build_layout(int(raw["n"]), int(raw["depth"]))
                params = np.asarray(_check_params(layout, raw["params"]))
                entry = ParamsEntry(
                    layout=layout,
                    params=params,
                    seed=int(raw["seed"]),
                    index=int(raw.get("index", 0)),
                    noise_factor=float(raw["noise_factor"]),
                )
            except (KeyError, TypeError, ValueError) as err:
                msg = f"{path}:{line_no}: malformed params record ({err})."
                raise ParamsFileError(msg) from err
            entries[entry.index] = entry
    return entries
