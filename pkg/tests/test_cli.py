import json

import pytest

from dxhoglib.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main


def _run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_bounds_lower(capsys):
    argv = ["bounds", "lower", "--n", "12", "--ensemble", "clifford", "--eps", "0.362"]
    assert _run(capsys, *argv) == (EXIT_OK, "62\n")


def test_bounds_lower_at_fixed_m(capsys):
    code, out = _run(capsys, "bounds", "lower", "--n", "12", "--m", "78")
    eps, a_star = (float(x) for x in out.split())
    assert code == EXIT_OK
    assert eps >= 0.427 and a_star > 1.0


def test_bounds_upper(capsys):
    assert _run(capsys, "bounds", "upper", "--n", "12", "--eps", "0.427") == (EXIT_OK, "330\n")
    code, out = _run(capsys, "bounds", "upper", "--n", "12", "--m", "330")
    assert code == EXIT_OK and float(out) > 0.428


def test_bounds_hm(capsys):
    assert _run(capsys, "bounds", "hm", "--n", "8", "--eps", "1") == (EXIT_OK, "6.5\n")


def test_bounds_sweep_csv(capsys, tmp_path):
    out_path = tmp_path / "table.csv"
    code, _ = _run(
        capsys, "bounds", "sweep", "--n", "10", "12", "--ensemble", "clifford", "haar",
        "--eps", "0.427", "--out", str(out_path),
    )
    lines = out_path.read_text().splitlines()
    assert code == EXIT_OK
    assert lines[0] == "n,ensemble,m,eps_lb_opt,a_star,eps_ub,hm_bits"
    assert len(lines) == 5
    assert "12,clifford,78," in lines[3]


def test_unreachable_bound_exits_two(capsys):
    code, _ = _run(capsys, "bounds", "upper", "--n", "12", "--eps", "50")
    assert code == EXIT_FAILURE


@pytest.mark.parametrize(
    "argv",
    [
        ["bounds", "lower", "--n", "12", "--eps", "0.4", "--bogus"],
        ["bounds"],
        ["trial", "run", "--n", "4", "--trials", "4"],
        ["trial", "run", "--n", "4", "--trials", "4", "--seed", "abc"],
        ["trial", "run", "--n", "4", "--trials", "4", "--seed", "1", "--mode", "nope"],
        ["selftest", "medium"],
    ],
)
def test_usage_errors_exit_one(capsys, argv):
    assert main(argv) == EXIT_USAGE


def test_trial_run_is_replayable(capsys, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    base = ["trial", "run", "--n", "4", "--trials", "50", "--seed", "42", "--quiet"]
    assert main([*base, "--out", str(a), "--threads", "1"]) == EXIT_OK
    assert main([*base, "--out", str(b), "--threads", "3"]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()

    lines = a.read_text().splitlines()
    assert len(lines) == 50
    assert json.loads(lines[0])["mode"] == "ideal"
    out = capsys.readouterr().out
    assert "mean" in out and "stderr" in out


def test_trial_run_certify(capsys, tmp_path):
    base = ["trial", "run", "--n", "4", "--trials", "200", "--seed", "1", "--quiet"]
    out = ["--out", str(tmp_path / "c.jsonl")]
    assert main([*base, *out, "--certify", "0.2", "--k-sigma", "3"]) == EXIT_OK
    assert main([*base, *out, "--certify", "0.99", "--k-sigma", "3"]) == EXIT_FAILURE
    assert "FAIL" in capsys.readouterr().out


def test_seed_from_config(capsys, tmp_path):
    config = tmp_path / "dxhog.yaml"
    config.write_text(f"seed: 5\ntrial:\n  out_dir: {tmp_path / 'runs'}\n")
    argv = ["trial", "run", "--n", "3", "--trials", "4", "--config", str(config), "--quiet"]
    assert main(argv) == EXIT_OK
    assert (tmp_path / "runs" / "trials-n3-seed5.jsonl").is_file()


def test_verify_records(capsys, tmp_path):
    path = tmp_path / "r.jsonl"
    assert main(["trial", "run", "--n", "3", "--trials", "8", "--seed", "3", "--out",
                 str(path), "--quiet"]) == EXIT_OK
    assert main(["verify", "records", str(path)]) == EXIT_OK
    assert "8 records verified" in capsys.readouterr().out

    lines = path.read_text().splitlines()
    record = json.loads(lines[2])
    record["score"] += 0.5
    lines[2] = json.dumps(record)
    path.write_text("\n".join(lines) + "\n")
    assert main(["verify", "records", str(path)]) == EXIT_FAILURE
    assert "line 3" in capsys.readouterr().out

    record["score"] -= 0.5
    logged_z = record["z"]
    record["z"] = "".join("1" if bit == "0" else "0" for bit in logged_z)
    lines[2] = json.dumps(record)
    path.write_text("\n".join(lines) + "\n")
    assert main(["verify", "records", str(path)]) == EXIT_FAILURE
    assert f"outcome {record['z']} replays as {logged_z}" in capsys.readouterr().out

    assert main(["verify", "records", str(tmp_path / "missing.jsonl")]) == EXIT_USAGE


def test_spoof_run(capsys, tmp_path):
    path = tmp_path / "s.jsonl"
    argv = ["spoof", "run", "--n", "2", "--m", "2", "--trials", "6", "--seed", "4",
            "--rerandomize", "--out", str(path), "--quiet"]
    assert main(argv) == EXIT_OK
    assert json.loads(path.read_text().splitlines()[0])["mode"] == "spoof:2:rerandomized"
    assert main(["verify", "records", str(path)]) == EXIT_OK


def test_spoof_size_guard(capsys):
    argv = ["spoof", "run", "--n", "12", "--m", "4", "--trials", "2", "--seed", "1"]
    assert main(argv) == EXIT_USAGE


def test_optimize_then_ansatz_trials(capsys, tmp_path):
    params = tmp_path / "params.jsonl"
    argv = ["optimize", "--n", "2", "--depth", "2", "--instances", "3", "--seed", "6",
            "--max-iter", "100", "--out", str(params), "--quiet"]
    assert main(argv) == EXIT_OK
    assert len(params.read_text().splitlines()) == 3

    records = tmp_path / "ansatz.jsonl"
    argv = ["trial", "run", "--n", "2", "--trials", "3", "--seed", "6", "--mode",
            f"ansatz:{params}", "--out", str(records), "--quiet"]
    assert main(argv) == EXIT_OK
    assert main(["verify", "records", str(records)]) == EXIT_OK

    argv[argv.index("--seed") + 1] = "7"
    assert main(argv) == EXIT_USAGE


def test_selftest_quick(capsys):
    assert main(["selftest", "quick", "--quiet"]) == EXIT_OK
    assert "checks passed" in capsys.readouterr().out
