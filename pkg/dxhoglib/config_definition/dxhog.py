from importlib.resources import files
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field

import config
from dxhoglib.exceptions import UsageError
from dxhoglib.variational import NoiseConstants, OptimizerOptions


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class _NoiseConfig(_Section):
    c_slope: float = Field(ge=0)
    c_offset: float = Field(ge=0)
    eps_mem: float = Field(ge=0)

    def constants(self) -> NoiseConstants:
        return NoiseConstants(c_slope=self.c_slope, c_offset=self.c_offset, eps_mem=self.eps_mem)


class _OptimizerConfig(_Section):
    max_iter: int = Field(ge=1)
    grad_tol: float = Field(ge=0)
    rel_tol: float = Field(ge=0)
    memory_size: int = Field(ge=1)
    max_linesearch_steps: int = Field(ge=1)
    zz_perturbation: float = Field(ge=0)

    def options(self, progress: bool = False) -> OptimizerOptions:
        return OptimizerOptions(**self.model_dump(), progress=progress)


class _TrialConfig(_Section):
    threads: int | None = Field(default=None, ge=1)
    k_sigma: float = Field(gt=0)
    out_dir: str


class _ToleranceConfig(_Section):
    # 0 means logged scores must match bitwise
    verify_atol: float = Field(ge=0)


class DxhogConfig(_Section):
    seed: int | None = Field(default=None, ge=0)
    noise: _NoiseConfig
    optimizer: _OptimizerConfig
    trial: _TrialConfig
    tolerance: _ToleranceConfig

    @classmethod
    def load(cls, path: str | Path | None = None) -> "DxhogConfig":
        """Packaged defaults, overlaid with a user YAML when one is given."""
        with (files(config) / "dxhog.yaml").open() as f:
            conf_raw: dict[str, Any] = yaml.safe_load(f)

        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise UsageError(f"Config file {path} not found.")
            with path.open() as f:
                user_raw = yaml.safe_load(f) or {}
            if not isinstance(user_raw, dict):
                raise UsageError(f"Config file {path} must hold a mapping.")
            conf_raw = _deep_merge(conf_raw, user_raw)

        return cls(**conf_raw)


def _deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged
