"""DXHOG trials: instances, trial modes, XEB scoring, batch runs and certification.

Instance i of a run with master seed s draws its Haar state from child 2i of s and its Clifford
measurement from child 2i + 1. Outcome sampling (and the depolarizing coin) uses child 2^32 + i,
so changing the trial mode never changes which instance is played.
"""

import json
import math
import os
from abc import ABC, abstractmethod
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import StrEnum, auto
from pathlib import Path
from typing import Any, Self

import jax.numpy as jnp
import numpy as np
from jax import random
from jaxtyping import PRNGKeyArray
from tqdm.auto import tqdm

from dxhoglib.exceptions import DimensionError, ParamsFileError
from dxhoglib.quantum import (
    StateVector,
    bit_index,
    bitstring,
    born_index,
    sample_haar_state,
)
from dxhoglib.stabilizer import (
    MeasurementTemplate,
    measurement_probabilities,
    sample_stabilizer_preparation,
    to_measurement_template,
)
from dxhoglib.util.logger import get_logger
from dxhoglib.util.random import NOISE_OFFSET, child_seed, stream
from dxhoglib.variational import ParamsEntry, ansatz_state, load_params

logger = get_logger("protocol")

__TRIAL_MODE__: dict["TrialModeName", type["TrialMode"]] = {}


@dataclass(frozen=True, kw_only=True)
class Instance:
    id: int
    n: int
    master_seed: int
    state_seed: int
    meas_seed: int
    state: StateVector
    template: MeasurementTemplate


def materialize_instance(
    n: int, index: int, state_seed: int, meas_seed: int, master_seed: int = -1
) -> Instance:
    raw = sample_stabilizer_preparation(n, stream(meas_seed))
    return Instance(
        id=index,
        n=n,
        master_seed=master_seed,
        state_seed=state_seed,
        meas_seed=meas_seed,
        state=sample_haar_state(n, stream(state_seed)),
        template=to_measurement_template(raw),
    )


def make_instance(n: int, master_seed: int, index: int) -> Instance:
    return materialize_instance(
        n,
        index,
        state_seed=child_seed(master_seed, 2 * index),
        meas_seed=child_seed(master_seed, 2 * index + 1),
        master_seed=master_seed,
    )


def xeb_score(target: StateVector, tpl: MeasurementTemplate, z: str) -> float:
    """2^n |<z|U|psi>|^2 - 1 with U the inverse measurement circuit of the template."""
    if len(z) != target.n:
        raise DimensionError(f"Outcome {z!r} does not have {target.n} bits.")
    probs = measurement_probabilities(target, tpl)
    return float(target.dim * probs[bit_index(z)] - 1.0)


class TrialModeName(StrEnum):
    IDEAL = auto()
    DEPOLARIZING = auto()
    ANSATZ = auto()
    NOISY_ANSATZ = auto()


def register_trial_mode(name: TrialModeName):
    def wrapper(cls):
        if __TRIAL_MODE__.get(name):
            raise NameError(f"Name {name} is already registered!")
        __TRIAL_MODE__[name] = cls
        return cls

    return wrapper


def get_trial_mode(name: TrialModeName, **kwargs) -> "TrialMode":
    if __TRIAL_MODE__.get(name) is None:
        raise NameError(f"Name {name} is not defined!")
    return __TRIAL_MODE__[name](**kwargs)


def parse_trial_mode(label: str) -> "TrialMode":
    """Parse `ideal`, `depolarizing:F`, `ansatz:PATH` or `noisy_ansatz:PATH`."""
    name, _, arg = label.partition(":")
    match name:
        case TrialModeName.IDEAL:
            return get_trial_mode(TrialModeName.IDEAL)
        case TrialModeName.DEPOLARIZING:
            return get_trial_mode(TrialModeName.DEPOLARIZING, fidelity=float(arg))
        case TrialModeName.ANSATZ | TrialModeName.NOISY_ANSATZ:
            if not arg:
                raise ParamsFileError(f"Mode {name} needs a params file, e.g. {name}:params.jsonl.")
            return get_trial_mode(TrialModeName(name), params_path=arg)
    raise NameError(f"Name {name} is not defined!")


def _uniform_index(rng: PRNGKeyArray, dim: int) -> int:
    return int(random.randint(rng, (), 0, dim))


def _coin(rng: PRNGKeyArray, probability: float) -> bool:
    return bool(random.uniform(rng, dtype=jnp.float64) < probability)


class TrialMode(ABC):
    name: TrialModeName

    @property
    def label(self) -> str:
        return str(self.name)

    @abstractmethod
    def sample_index(self, instance: Instance, rng: PRNGKeyArray) -> int:
        """Outcome index for one trial, drawn from the trial's noise stream."""
        raise NotImplementedError


def _ideal_index(instance: Instance, rng: PRNGKeyArray) -> int:
    born_rng, _, _ = random.split(rng, 3)
    return int(born_index(measurement_probabilities(instance.state, instance.template), born_rng))


@register_trial_mode(name=TrialModeName.IDEAL)
@dataclass(frozen=True, kw_only=True)
class IdealMode(TrialMode):
    name = TrialModeName.IDEAL

    def sample_index(self, instance: Instance, rng: PRNGKeyArray) -> int:
        return _ideal_index(instance, rng)


@register_trial_mode(name=TrialModeName.DEPOLARIZING)
@dataclass(frozen=True, kw_only=True)
class DepolarizingMode(TrialMode):
    """Ideal outcome with probability `fidelity`, uniformly random outcome otherwise."""

    name = TrialModeName.DEPOLARIZING
    fidelity: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.fidelity <= 1.0:
            raise ValueError(f"Depolarizing fidelity must be in [0, 1], got {self.fidelity}.")

    @property
    def label(self) -> str:
        return f"{self.name}:{self.fidelity!r}"

    def sample_index(self, instance: Instance, rng: PRNGKeyArray) -> int:
        _, coin_rng, uniform_rng = random.split(rng, 3)
        if _coin(coin_rng, self.fidelity):
            return _ideal_index(instance, rng)
        return _uniform_index(uniform_rng, instance.state.dim)


@dataclass(frozen=True, kw_only=True)
class _ParamsMode(TrialMode):
    params_path: str
    entries: dict[int, ParamsEntry] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", load_params(self.params_path))

    @property
    def label(self) -> str:
        return f"{self.name}:{self.params_path}"

    def entry(self, instance: Instance) -> ParamsEntry:
        entry = self.entries.get(instance.id)
        if entry is None:
            msg = f"No parameters for instance {instance.id} in {self.params_path}."
            raise ParamsFileError(msg)
        if entry.layout.n != instance.n or entry.seed != instance.master_seed:
            raise ParamsFileError(
                f"Parameters for instance {instance.id} were trained for n={entry.layout.n}, "
                f"seed={entry.seed}; the run uses n={instance.n}, seed={instance.master_seed}."
            )
        return entry

    def _ansatz_index(self, instance: Instance, rng: PRNGKeyArray) -> int:
        entry = self.entry(instance)
        prepared = ansatz_state(entry.layout, entry.params)
        born_rng, _, _ = random.split(rng, 3)
        return int(born_index(measurement_probabilities(prepared, instance.template), born_rng))


@register_trial_mode(name=TrialModeName.ANSATZ)
@dataclass(frozen=True, kw_only=True)
class AnsatzMode(_ParamsMode):
    """Outcomes sampled from the trained ansatz state, scored against the exact target."""

    name = TrialModeName.ANSATZ

    def sample_index(self, instance: Instance, rng: PRNGKeyArray) -> int:
        return self._ansatz_index(instance, rng)


@register_trial_mode(name=TrialModeName.NOISY_ANSATZ)
@dataclass(frozen=True, kw_only=True)
class NoisyAnsatzMode(_ParamsMode):
    """Ansatz outcomes kept with the ansatz's predicted noise factor, uniform otherwise."""

    name = TrialModeName.NOISY_ANSATZ

    def sample_index(self, instance: Instance, rng: PRNGKeyArray) -> int:
        _, coin_rng, uniform_rng = random.split(rng, 3)
        if _coin(coin_rng, self.entry(instance).noise_factor):
            return self._ansatz_index(instance, rng)
        return _uniform_index(uniform_rng, instance.state.dim)


@dataclass(frozen=True, kw_only=True)
class TrialRecord:
    id: int
    n: int
    mode: str
    z: str
    score: float
    state_seed: int
    meas_seed: int
    noise_seed: int

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> Self:
        return cls(
            id=int(raw["id"]),
            n=int(raw["n"]),
            mode=str(raw["mode"]),
            z=str(raw["z"]),
            score=float(raw["score"]),
            state_seed=int(raw["state_seed"]),
            meas_seed=int(raw["meas_seed"]),
            noise_seed=int(raw["noise_seed"]),
        )


def run_trial(instance: Instance, mode: TrialMode, noise_seed: int) -> TrialRecord:
    """Play one trial; the noise stream is `stream(noise_seed)`."""
    z = bitstring(mode.sample_index(instance, stream(noise_seed)), instance.n)
    return TrialRecord(
        id=instance.id,
        n=instance.n,
        mode=mode.label,
        z=z,
        score=xeb_score(instance.state, instance.template, z),
        state_seed=instance.state_seed,
        meas_seed=instance.meas_seed,
        noise_seed=noise_seed,
    )


def write_records(records: Iterable[TrialRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for record in records:
            f.write(record.to_json() + "\n")


def read_records(path: str | Path) -> list[TrialRecord]:
    with Path(path).open() as f:
        return [TrialRecord.from_dict(json.loads(line)) for line in f if line.strip()]


@dataclass(frozen=True, kw_only=True)
class XebSummary:
    k: int
    mean: float
    stderr: float
    per_mode: dict[str, "XebSummary"] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"k": self.k, "mean": self.mean, "stderr": self.stderr}
        if self.per_mode:
            out["per_mode"] = {mode: s.to_dict() for mode, s in self.per_mode.items()}
        return out


def _summary(scores: Sequence[float]) -> XebSummary:
    values = np.asarray(scores, dtype=np.float64)
    if values.size < 2:
        raise ValueError(f"Need at least 2 trials for a standard error, got {values.size}.")
    return XebSummary(
        k=int(values.size),
        mean=float(values.mean()),
        stderr=float(values.std(ddof=1) / math.sqrt(values.size)),
    )


def summarize(records: Sequence[TrialRecord]) -> XebSummary:
    summary = _summary([r.score for r in records])
    modes = sorted({r.mode for r in records})
    if len(modes) < 2:
        return summary

    per_mode = {}
    for mode in modes:
        scores = [r.score for r in records if r.mode == mode]
        if len(scores) >= 2:
            per_mode[mode] = _summary(scores)
    return XebSummary(k=summary.k, mean=summary.mean, stderr=summary.stderr, per_mode=per_mode)


@dataclass(frozen=True, kw_only=True)
class Certification:
    passed: bool
    margin: float


# rounding slack so that a margin of exactly zero passes
CERTIFY_SLACK = 1e-12


def certify(summary: XebSummary, target_eps: float, k_sigma: float) -> Certification:
    """Pass iff mean - k_sigma * stderr >= target_eps."""
    if k_sigma <= 0:
        raise ValueError(f"k_sigma must be positive, got {k_sigma}.")
    margin = summary.mean - k_sigma * summary.stderr - target_eps
    return Certification(passed=margin >= -CERTIFY_SLACK, margin=margin)


def run_batch(
    n: int,
    trials: int,
    mode: TrialMode,
    master_seed: int,
    out: str | Path | None = None,
    threads: int | None = None,
    progress: bool = False,
) -> tuple[XebSummary, list[TrialRecord]]:
    """Run trials 0..trials-1 in a thread pool; records are returned and written in index order."""

    def one(index: int) -> TrialRecord:
        instance = make_instance(n, master_seed, index)
        return run_trial(instance, mode, child_seed(master_seed, NOISE_OFFSET + index))

    workers = threads or os.cpu_count() or 1
    logger.info("Running %d %s trials at n=%d on %d threads", trials, mode.label, n, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        records = list(
            tqdm(pool.map(one, range(trials)), total=trials, disable=not progress, desc="trials")
        )

    if out is not None:
        write_records(records, out)
    summary = summarize(records)
    logger.info("mean XEB %.10g +- %.10g over %d trials", summary.mean, summary.stderr, summary.k)
    return summary, records


@dataclass(frozen=True, kw_only=True)
class Mismatch:
    line: int
    logged: float
    recomputed: float
    logged_z: str
    replayed_z: str


def _replay_instance(record: TrialRecord, mode: TrialMode) -> Instance:
    master_seed = -1
    if isinstance(mode, _ParamsMode):
        # params entries are bound to a master seed; accept the entry only if it owns this state
        entry = mode.entries.get(record.id)
        if entry is not None and child_seed(entry.seed, 2 * record.id) == record.state_seed:
            master_seed = entry.seed
    return materialize_instance(
        record.n,
        record.id,
        state_seed=record.state_seed,
        meas_seed=record.meas_seed,
        master_seed=master_seed,
    )


def verify_records(records: Sequence[TrialRecord], atol: float = 0.0) -> list[Mismatch]:
    """Replay every record from its logged seeds.

    The outcome is redrawn from `noise_seed` under the logged mode and must equal the logged z,
    and the score of the logged z must match the logged score within `atol` (with atol = 0 any
    bitwise difference counts). Spoof records depend on the run's codebook, which the record does
    not carry, so only their scores are recomputed.

    Raises:
        ParamsFileError: An ansatz record whose params file is missing or belongs to another run.
        NameError: A record with an unknown mode.
    """
    from dxhoglib.spoof import SPOOF_MODE_PREFIX, spoof_score_from_seeds

    modes: dict[str, TrialMode] = {}
    mismatches = []
    for line, record in enumerate(records, start=1):
        if record.mode.startswith(SPOOF_MODE_PREFIX):
            score, z = spoof_score_from_seeds(record), record.z
        else:
            if record.mode not in modes:
                modes[record.mode] = parse_trial_mode(record.mode)
            mode = modes[record.mode]
            instance = _replay_instance(record, mode)
            z = bitstring(mode.sample_index(instance, stream(record.noise_seed)), record.n)
            score = xeb_score(instance.state, instance.template, record.z)
        if z != record.z or not abs(score - record.score) <= atol:
            mismatches.append(
                Mismatch(
                    line=line,
                    logged=record.score,
                    recomputed=score,
                    logged_z=record.z,
                    replayed_z=z,
                )
            )
    return mismatches
