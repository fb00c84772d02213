import pydantic
import pytest

from dxhoglib.config_definition.dxhog import DxhogConfig
from dxhoglib.exceptions import UsageError
from dxhoglib.variational import NoiseConstants, OptimizerOptions


def test_packaged_defaults():
    config = DxhogConfig.load()
    assert config.seed is None
    assert config.noise.constants() == NoiseConstants()
    assert config.optimizer.options() == OptimizerOptions()
    assert config.trial.k_sigma == 5.0
    assert config.tolerance.verify_atol == 0.0


def test_user_file_is_merged(tmp_path):
    path = tmp_path / "user.yaml"
    path.write_text("seed: 9\nnoise:\n  eps_mem: 0.0\ntrial:\n  threads: 2\n")
    config = DxhogConfig.load(path)
    assert config.seed == 9
    assert config.noise.eps_mem == 0.0
    assert config.noise.c_slope == pytest.approx(14.8e-4)
    assert config.trial.threads == 2
    assert config.trial.out_dir == "runs"


@pytest.mark.parametrize(
    "text",
    ["noise:\n  c_slope: -1.0\n", "trial:\n  k_sigma: 0\n", "noise:\n  unknown: 1\n"],
)
def test_invalid_values_are_rejected(tmp_path, text):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    with pytest.raises(pydantic.ValidationError):
        DxhogConfig.load(path)


def test_missing_or_malformed_file(tmp_path):
    with pytest.raises(UsageError):
        DxhogConfig.load(tmp_path / "missing.yaml")
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(UsageError):
        DxhogConfig.load(path)
