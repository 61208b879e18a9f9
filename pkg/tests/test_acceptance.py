"""Acceptance criteria. Each test prints one ``criterion N: PASS/FAIL`` line."""

import filecmp
import os
import subprocess
import sys

import pytest

from sphereflow.scenarios import (run_example_2_4, run_example_2_6, run_main_thm_sweep,
                                  run_perturbation_suite, run_pointwise_sweep, run_thm_2_2,
                                  run_thm_3_6, run_variation_oracles, run_w2_oracle)

REGIME = "regime: epsilon_phi (closed form)"


@pytest.fixture
def verdict(capsys):
    def emit(label, checks):
        failed = [c for c in checks if not c["passed"]]
        summary = "; ".join(f"{c['name']}={c['value']:.4g} (threshold {c['threshold']:.4g})"
                            for c in (failed or checks)[:4])
        with capsys.disabled():
            print(f"\ncriterion {label}: {'FAIL' if failed else 'PASS'} {summary}")
        assert not failed, failed
    return emit


@pytest.fixture(scope="module")
def thm_3_6():
    return run_thm_3_6()


def test_criterion_1_three_atom_example(verdict):
    verdict("1", run_example_2_4()["checks"])


def test_criterion_2_large_beta_circle_density(verdict):
    verdict("2", run_example_2_6()["checks"])


def test_criterion_3_pl_suite(verdict):
    verdict("3", run_thm_2_2()["checks"])


def test_criterion_4_regime_precondition(verdict, thm_3_6):
    verdict("4 (regime precondition)", [c for c in thm_3_6["checks"] if c["name"] == REGIME])


def test_criterion_4_entropy_production_monitor(verdict, thm_3_6):
    verdict("4 (monitor)", [c for c in thm_3_6["checks"] if c["name"] != REGIME])


def test_criterion_5_rate_fit(verdict):
    verdict("5", run_main_thm_sweep(betas=(0.02,))["checks"])


def test_criterion_6_variation_oracles(verdict):
    verdict("6", run_variation_oracles(trials=50)["checks"])


def test_criterion_7_pointwise_sweep(verdict):
    verdict("7", run_pointwise_sweep(samples=100_000)["checks"])


def test_criterion_8_perturbation_sandwich(verdict):
    verdict("8", run_perturbation_suite()["checks"])


def _cli(args, env=None):
    return subprocess.run([sys.executable, "-m", "sphereflow.cli", *args], capture_output=True,
                          env={**os.environ, **(env or {})}, check=False)


def test_criterion_9_determinism(verdict, tmp_path):
    a, b = _cli(["check", "all", "--seed", "42"]), _cli(["check", "all", "--seed", "42"])
    same_report = a.returncode == 0 and a.stdout == b.stdout and len(a.stdout) > 0
    outs = {}
    for threads in ("1", "4"):
        out = tmp_path / f"threads{threads}"
        res = _cli(["simulate", "kuramoto-cap.toml", "--out", str(out)],
                   env={"SPHEREFLOW_THREADS": threads})
        outs[threads] = (res.returncode, out)
    names = sorted(os.listdir(outs["1"][1]))
    match, mismatch, errors = filecmp.cmpfiles(outs["1"][1], outs["4"][1], names, shallow=False)
    same_sim = outs["1"][0] == outs["4"][0] == 0 and not mismatch and not errors and names
    verdict("9", [
        {"name": "check all --seed 42 byte-identical", "value": float(same_report),
         "threshold": 1.0, "passed": bool(same_report)},
        {"name": "simulate identical for 1 and 4 threads", "value": float(len(match)),
         "threshold": float(len(names)), "passed": bool(same_sim)},
    ])


def test_criterion_10_circle_w2_oracle(verdict):
    verdict("10", run_w2_oracle(trials=1000)["checks"])
