"""
Command-line entry point.

``sphereflow simulate <cfg>``, ``sphereflow reproduce <name>`` and
``sphereflow check <suite>``. Exit codes: 0 success, 1 acceptance failure,
2 config error, 3 runtime error.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import re
import sys
from importlib import resources

import numpy as np

from . import __version__, _backend
from .analysis import entropy_production_check, perturbation_monitors, pl_inequality_check
from .checks import SUITES, dumps, run_suite
from .dynamics import FlowState, IntegratorConfig, evolve
from .ensemble import (ParticleEnsemble, example_2_4_limit, make_example_2_1, make_example_2_4,
                       random_cap_ensemble, sample_tilted)
from .errors import ConfigError, SphereflowError, SupportError
from .kernel import kernel_from_config
from .observables import mean_and_order, w2_circle, w2_to_dirac
from .scenarios import REPRODUCTIONS, collect_states, fit_decay, pl_angle
from .sphere import normalize, sample_uniform

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

TOP_KEYS = {"schema", "name", "seed"}
TABLES = {
    "kernel": {"kind", "beta", "A", "phi_prime", "param"},
    "init": {"kind", "d", "n", "xi", "eps", "tilt", "axis", "center", "angle", "points",
             "weights", "dirichlet"},
    "integrator": {"method", "dt", "t_end", "adaptive", "tol", "renormalize_each_stage",
                   "gradient"},
    "observe": {"every", "alpha", "reference", "fit", "fit_floor"},
    "monitors": {"entropy_production", "perturbation", "pl"},
    "output": {"dir"},
    "expect": {"w2_max", "rate_min", "r2_min", "max_violations"},
}
RANDOM_INITS = {"uniform", "tilted", "cap"}
INIT_REQUIRED = {
    "example-2.4": {"xi"},
    "example-2.1": {"eps"},
    "uniform": {"d", "n"},
    "tilted": {"d", "n", "tilt"},
    "cap": {"center", "angle", "n"},
    "points": {"points"},
}


# --------------------------------------------------------------------------- config

def _key_line(text, table, key):
    """1-based line of ``key`` inside ``[table]`` (``table=None`` for the top level)."""
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        head = re.match(r"^\[\s*([^\]]+?)\s*\]$", stripped)
        if head:
            current = head.group(1)
            if table is not None and current == table and key is None:
                return no
            continue
        m = re.match(r"^([A-Za-z0-9_\-]+)\s*=", stripped)
        if m and m.group(1) == key and current == table:
            return no
    return None


def parse_config(text):
    """Parse and validate a scenario config. Raises ``ConfigError`` with a line number."""
    try:
        cfg = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax: {exc}", int(m.group(1)) if m else None) from None
    for key, value in cfg.items():
        if isinstance(value, dict):
            if key not in TABLES:
                raise ConfigError(f"unknown table [{key}]", _key_line(text, key, None))
            for sub in value:
                if sub not in TABLES[key]:
                    raise ConfigError(f"unknown key {sub!r} in [{key}]", _key_line(text, key, sub))
        elif key not in TOP_KEYS:
            raise ConfigError(f"unknown key {key!r}", _key_line(text, None, key))
    if cfg.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"'schema' must be {SCHEMA_VERSION}", _key_line(text, None, "schema"))
    for table in ("kernel", "init", "integrator"):
        if table not in cfg:
            raise ConfigError(f"missing required table [{table}]")
    init = cfg["init"]
    kind = init.get("kind")
    if kind not in INIT_REQUIRED:
        raise ConfigError(f"unknown init kind {kind!r}; choose from {sorted(INIT_REQUIRED)}",
                          _key_line(text, "init", "kind"))
    for field in sorted(INIT_REQUIRED[kind] - set(init)):
        raise ConfigError(f"missing required field 'init.{field}' for init kind {kind!r}",
                          _key_line(text, "init", None))
    if kind in RANDOM_INITS and "seed" not in cfg:
        raise ConfigError(f"missing required field 'seed' (init kind {kind!r} is randomized)")
    if "seed" in cfg and not isinstance(cfg["seed"], int):
        raise ConfigError("'seed' must be an integer", _key_line(text, None, "seed"))
    return cfg


def _bundled(name):
    root = resources.files("sphereflow") / "configs"
    path = root / name
    return path.read_text() if path.is_file() else None


def load_config(path):
    """Read a config file, falling back to the bundled configs by file name."""
    if os.path.exists(path):
        with open(path, "rb") as fh:
            raw = fh.read()
    else:
        text = _bundled(os.path.basename(path))
        if text is None:
            raise ConfigError(f"config file not found: {path}")
        raw = text.encode()
    return parse_config(raw.decode()), hashlib.sha256(raw).hexdigest()


def bundled_configs():
    root = resources.files("sphereflow") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".toml"))


def build_initial(init, seed):
    kind = init["kind"]
    if kind == "example-2.4":
        return make_example_2_4(float(init["xi"]))
    if kind == "example-2.1":
        return make_example_2_1(float(init["eps"]))
    if kind == "uniform":
        return ParticleEnsemble(sample_uniform(int(init["d"]), int(init["n"]), seed))
    if kind == "tilted":
        axis = init.get("axis")
        return sample_tilted(int(init["d"]), int(init["n"]), float(init["tilt"]), seed,
                             None if axis is None else normalize(np.asarray(axis, dtype=float)))
    if kind == "cap":
        center = normalize(np.asarray(init["center"], dtype=float))
        rng = np.random.default_rng(seed)
        return random_cap_ensemble(center.shape[0], int(init["n"]), center, float(init["angle"]),
                                   rng, bool(init.get("dirichlet", False)))
    pts = normalize(np.asarray(init["points"], dtype=float))
    w = init.get("weights")
    return ParticleEnsemble(pts, None if w is None else np.asarray(w, dtype=float))


# --------------------------------------------------------------------------- simulate

def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def simulate(cfg, digest, out_dir):
    """Run a validated config and write trajectory.csv, verdicts.jsonl and summary.json."""
    seed = cfg.get("seed")
    name = cfg.get("name", "unnamed")
    try:
        mu0 = build_initial(cfg["init"], seed)
        spec = kernel_from_config(cfg["kernel"], mu0.d)
        icfg = IntegratorConfig(**cfg["integrator"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid scenario {name!r}: {exc}") from None
    obs = cfg.get("observe", {})
    every = obs.get("every")
    alpha = float(obs.get("alpha", np.pi / 20))
    reference = obs.get("reference", "final-mean")
    meta = {"name": name, "seed": seed, "config_sha256": digest, "version": __version__}

    states = []
    rec = evolve(FlowState(0.0, mu0), spec, icfg, observers=[collect_states(states)],
                 every=every, alpha=alpha, metadata=meta)

    # W2 column against the requested reference, filled in once the run is complete
    if reference == "final-mean":
        ref = normalize(mean_and_order(rec.final_state.ensemble)[0])
        w2_of = lambda ens: w2_to_dirac(ens, ref)  # noqa: E731
    elif reference == "example-2.4-limit":
        lim = example_2_4_limit()
        w2_of = lambda ens: w2_circle(ens, lim)  # noqa: E731
    else:
        ref = normalize(np.asarray(reference, dtype=float))
        w2_of = lambda ens: w2_to_dirac(ens, ref)  # noqa: E731
    for snap, (_, ens) in zip(rec.snapshots, states):
        snap.W2 = w2_of(ens)

    verdicts = []
    mon = cfg.get("monitors", {})
    if mon.get("entropy_production"):
        verdicts += entropy_production_check(states, spec, alpha)
    if mon.get("perturbation"):
        verdicts += perturbation_monitors([s[0] for s in states], [s[1] for s in states], spec,
                                          pairs="consecutive")
    if mon.get("pl"):
        if spec.kind != "simple":
            raise ConfigError("monitor 'pl' needs kernel kind 'simple'")
        a = pl_angle(spec.beta)
        for t, ens in states:
            _, _, U = mean_and_order(ens)
            try:
                v = pl_inequality_check(ens, spec.beta, U, a)
            except SupportError:
                continue
            verdicts.append(dataclasses.replace(v, t=t))

    monitors = {}
    for v in verdicts:
        m = monitors.setdefault(v.name, {"count": 0, "violations": 0, "regime_ok": True})
        m["count"] += 1
        m["violations"] += int(not v.holds)
        m["regime_ok"] = m["regime_ok"] and bool(v.regime_ok)

    final = rec.snapshots[-1]
    summary = {
        **meta,
        "backend": _backend.NAME,
        "final": {"t": final.t, "E": final.E, "R": final.R, "I": final.I, "W2": final.W2},
        "reference": reference if isinstance(reference, str) else list(map(float, reference)),
        "monitors": monitors,
    }
    if obs.get("fit"):
        fit = fit_decay(states, float(obs.get("fit_floor", 1e-9)))
        summary["fit"] = {k: fit[k] for k in ("rate", "r2", "burn_in", "points")}

    checks = []
    exp = cfg.get("expect", {})
    if "w2_max" in exp:
        checks.append({"name": "final W2", "value": final.W2, "threshold": exp["w2_max"],
                       "passed": bool(final.W2 < exp["w2_max"])})
    if "rate_min" in exp or "r2_min" in exp:
        fit = summary.get("fit") or {"rate": float("nan"), "r2": float("nan")}
        if "rate_min" in exp:
            checks.append({"name": "fitted rate", "value": fit["rate"], "threshold": exp["rate_min"],
                           "passed": bool(fit["rate"] > exp["rate_min"])})
        if "r2_min" in exp:
            checks.append({"name": "fit r^2", "value": fit["r2"], "threshold": exp["r2_min"],
                           "passed": bool(fit["r2"] > exp["r2_min"])})
    if "max_violations" in exp:
        total = sum(m["violations"] for m in monitors.values())
        checks.append({"name": "monitor violations", "value": total,
                       "threshold": exp["max_violations"],
                       "passed": bool(total <= exp["max_violations"])})
    summary["expect"] = checks
    summary["passed"] = all(c["passed"] for c in checks)

    os.makedirs(out_dir, exist_ok=True)
    rec.to_csv(os.path.join(out_dir, "trajectory.csv"))
    lines = [json.dumps({"metadata": meta}, sort_keys=True)]
    lines += [json.dumps(v.to_dict(), sort_keys=True) for v in verdicts]
    _write(os.path.join(out_dir, "verdicts.jsonl"), "\n".join(lines) + "\n")
    _write(os.path.join(out_dir, "summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


# --------------------------------------------------------------------------- commands

def _jsonable(report):
    return {k: v for k, v in report.items() if k != "record"}


def cmd_simulate(args):
    cfg, digest = load_config(args.config)
    out = args.out or cfg.get("output", {}).get("dir") or os.path.join(
        "sphereflow-out", cfg.get("name", "unnamed"))
    try:
        summary = simulate(cfg, digest, out)
    except ConfigError:
        raise
    except (SphereflowError, ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"error: scenario {cfg.get('name', 'unnamed')!r}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for c in summary["expect"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']!r} "
              f"(threshold {c['threshold']!r})")
    print(f"outputs written to {out}")
    return EXIT_OK if summary["passed"] else EXIT_FAIL


def cmd_reproduce(args):
    if args.name not in REPRODUCTIONS:
        raise ConfigError(f"unknown reproduction {args.name!r}; choose from {sorted(REPRODUCTIONS)}")
    try:
        report = REPRODUCTIONS[args.name]()
    except (SphereflowError, ValueError, RuntimeError) as exc:
        print(f"error: reproduction {args.name!r}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']!r} "
              f"(threshold {c['threshold']!r})")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        payload = {**_jsonable(report), "version": __version__, "backend": _backend.NAME}
        _write(os.path.join(args.out, "report.json"),
               json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
        if "record" in report:
            report["record"].metadata.update({"name": args.name, "version": __version__})
            report["record"].to_csv(os.path.join(args.out, "trajectory.csv"))
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_check(args):
    report = run_suite(args.suite, args.seed)
    text = dumps(report)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="sphereflow", description=__doc__.strip().splitlines()[0])
    p.add_argument("--version", action="version", version=f"sphereflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", help="run a TOML scenario config")
    s.add_argument("config", help="config path, or the file name of a bundled config")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_simulate)
    r = sub.add_parser("reproduce", help="run a canonical reproduction")
    r.add_argument("name", choices=sorted(REPRODUCTIONS))
    r.add_argument("--out", help="directory for report.json")
    r.set_defaults(func=cmd_reproduce)
    c = sub.add_parser("check", help="run property suites and print a JSON report")
    c.add_argument("suite", choices=sorted(SUITES) + ["all"])
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", help="write the report here instead of stdout")
    c.set_defaults(func=cmd_check)
    sub.add_parser("list-configs", help="list bundled configs").set_defaults(
        func=lambda a: print("\n".join(bundled_configs())) or EXIT_OK)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SphereflowError, RuntimeError, FloatingPointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
