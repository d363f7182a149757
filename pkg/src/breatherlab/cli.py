"""Batch command-line front end.

    breatherlab <command> [--config FILE] [--key value ...]

Commands: construct, verify, evolve, quantize, trajectory, scan.  A config
file holds flat ``key = value`` lines with ``#`` comments; flags override
file values and unknown keys are rejected.  Every run writes CSV tables
(and optional BRTH dumps) plus ``manifest.json`` into the output directory.

Exit codes: 0 success, 1 usage or input error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import breathers as br
from . import characteristics as ch
from . import evolution as ev
from . import quantization as qz
from . import residuals as rv
from .core import PhysicalParams, Potentials, build_grid, resolve_threads, sample
from .formats import sha256_file, write_brth, write_csv, write_manifest
from .special import ModeIndex

COMMANDS = ("construct", "verify", "evolve", "quantize", "trajectory", "scan")
EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2
ORDER_TARGET, ORDER_TOLERANCE = 2.0, 0.2


class ConfigError(ValueError):
    pass


# -- value parsers ---------------------------------------------------------------

def _float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


def _int(text: str) -> int:
    return int(text)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(_float(p) for p in text.split(",") if p.strip())


def _vector(text: str) -> tuple[float, float, float]:
    vals = _floats(text)
    if len(vals) != 3:
        raise ValueError("expected three comma-separated numbers")
    return vals


def _mode(text: str) -> tuple[int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError("expected l,n")
    ModeIndex(*parts)
    return tuple(parts)


def _int_range(text: str) -> tuple[int, ...]:
    if ".." in text:
        lo, hi = text.split("..")
        values = tuple(range(int(lo), int(hi) + 1))
    else:
        values = tuple(int(p) for p in text.split(","))
    if not values:
        raise ValueError("empty range")
    return values


def _axes(text: str) -> tuple[tuple[str, float, float, int], ...]:
    axes = []
    for part in text.split(";"):
        name, lo, hi, count = part.strip().split(":")
        axes.append((name.strip(), _float(lo), _float(hi), int(count)))
    build_grid(axes)
    return tuple(axes)


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _text(text: str) -> str:
    return text


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else _float(text)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], object]
    defaults: dict
    help: str = ""


_ALL = COMMANDS
_SOLUTIONS = ("rest-breather", "boosted", "spinning", "train")
_PATCH_CENTER = "0.3,0.7,0.5,0.3"


def _every(value):
    return {c: value for c in _ALL}


SCHEMA: dict[str, Key] = {
    "out": Key(_text, _every("brth_out"), "output directory"),
    "seed": Key(_int, _every(0), "random seed"),
    "m": Key(_float, _every(1.0), "particle mass"),
    "c": Key(_float, _every(1.0), "speed of light"),
    "hbar": Key(_float, _every(1.0), "reduced Planck constant"),
    "e_charge": Key(_float, _every(1.0), "charge"),
    "dump": Key(_bool, {"construct": True, "evolve": False}, "write BRTH field dumps"),
    "solution": Key(_choice(*_SOLUTIONS), {"construct": "rest-breather", "verify": "rest-breather"}),
    "alpha": Key(_float, {"construct": 0.5, "verify": 0.5, "evolve": 0.5}),
    "velocity": Key(_vector, {"construct": (0.0, 0.0, 0.0), "verify": (0.6, 0.0, 0.0)}, "vx,vy,vz"),
    "mode": Key(_mode, {"construct": (0, 0), "verify": (1, 0)}, "l,n of a spinning mode"),
    "train_d": Key(_float, {"construct": 20.0}, "breather train period"),
    "train_K": Key(_int, {"construct": 64}, "breather train truncation"),
    "omega": Key(_optional_float, {"construct": None, "verify": None, "evolve": None},
                 "override of the breather-term frequency"),
    "axes": Key(_axes, {"construct": (("t", 0.0, 6.0, 16), ("r", 0.0, 20.0, 401))}, "name:min:max:count;..."),
    "quantity": Key(_choice("psi", "action"), {"construct": "psi"}),
    "spacings": Key(_floats, {"verify": (0.1, 0.05, 0.025)}),
    "checks": Key(_text, {"verify": "auto"}, "comma list of kg, qhj (auto: both for rest-breather)"),
    "patch_center": Key(_floats, {"verify": _floats(_PATCH_CENTER)}, "t,x,y,z"),
    "patch_half_width": Key(_float, {"verify": 0.2}),
    "tolerance": Key(_float, {"verify": ORDER_TOLERANCE}, "allowed |order - 2|"),
    "spacing": Key(_float, {"evolve": 0.05}),
    "dt": Key(_float, {"evolve": 0.02, "trajectory": 0.01}),
    "half_width": Key(_float, {"evolve": 40.0}),
    "periods": Key(_int, {"evolve": 10}),
    "probe_r": Key(_float, {"evolve": 2.0}),
    "perturbation": Key(_float, {"evolve": 0.0}),
    "mass_term": Key(_choice(*ev.MASS_TERMS), {"evolve": "clock_exact"}),
    "max_deviation": Key(_float, {"evolve": 1e-3}),
    "well": Key(_choice("harmonic", "quartic", "ring"), {"quantize": "harmonic"}),
    "omega0": Key(_float, {"quantize": 1.0}),
    "coefficient": Key(_float, {"quantize": 0.25}),
    "n": Key(_int_range, {"quantize": tuple(range(10, 21))}, "a..b or comma list"),
    "d": Key(_float, {"quantize": 2 * math.pi, "scan": None}),
    "wall_separation": Key(_float, {"scan": None}),
    "p_max": Key(_float, {"scan": 3.5}),
    "samples": Key(_int, {"scan": 1000}),
    "momentum": Key(_vector, {"trajectory": (1.0, 0.0, 0.0)}),
    "x0": Key(_vector, {"trajectory": (0.0, 0.0, 0.0)}),
    "t_end": Key(_float, {"trajectory": 10.0}),
    "U0": Key(_float, {"trajectory": 0.0}, "constant scalar potential"),
    "width": Key(_float, {"trajectory": 1.0}, "gaussian perturbation width"),
}


@dataclass
class RunConfig:
    command: str
    values: dict
    sources: dict = field(default_factory=dict)
    config_file: Path | None = None

    def __getitem__(self, key):
        return self.values[key]

    @property
    def out(self) -> Path:
        return Path(self.values["out"])

    @property
    def params(self) -> PhysicalParams:
        v = self.values
        return PhysicalParams(v["m"], v["c"], v["hbar"], v["e_charge"])

    def echo(self) -> dict:
        out = {"command": self.command}
        for k, v in sorted(self.values.items()):
            out[k] = [list(a) for a in v] if k == "axes" else (list(v) if isinstance(v, tuple) else v)
        return out


def _keys_for(command: str) -> list[str]:
    return [k for k, spec in SCHEMA.items() if command in spec.defaults]


def _parse_value(command: str, key: str, text: str, where: str):
    if key not in SCHEMA or command not in SCHEMA[key].defaults:
        raise ConfigError(f"{where}: unknown key {key!r} for command {command!r}")
    try:
        return SCHEMA[key].parse(text.strip())
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: bad value {text.strip()!r} for {key!r}: {exc}") from None


def read_config_file(path: Path, command: str) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, text = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"{path}:{lineno}: key {key!r} given twice")
        values[key] = _parse_value(command, key, text, f"{path}:{lineno}")
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="breatherlab", description="Breather constructions, verification and experiments.")
    parser.add_argument("--version", action="version", version=f"breatherlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--config", type=Path, help="key = value config file")
        for key in _keys_for(command):
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="VALUE",
                           help=SCHEMA[key].help or None)
    return parser


def parse_config(argv: list[str]) -> RunConfig:
    """Merge defaults, config file and flags (in increasing priority) into a RunConfig."""
    ns = build_parser().parse_args(argv)
    command = ns.command
    values = {k: SCHEMA[k].defaults[command] for k in _keys_for(command)}
    sources = {k: "default" for k in values}
    if ns.config is not None:
        if not ns.config.exists():
            raise ConfigError(f"config file {ns.config} not found")
        for k, v in read_config_file(ns.config, command).items():
            values[k] = v
            sources[k] = "file"
    for key in _keys_for(command):
        text = getattr(ns, key)
        if text is not None:
            values[key] = _parse_value(command, key, text, "--" + key.replace("_", "-"))
            sources[key] = "flag"
    cfg = RunConfig(command, values, sources, ns.config)
    _check_conflicts(cfg)
    return cfg


def _check_conflicts(cfg: RunConfig) -> None:
    v, src = cfg.values, cfg.sources
    if cfg.command == "scan":
        if (v["d"] is None) == (v["wall_separation"] is None):
            raise ConfigError("scan needs exactly one of d or wall_separation")
    if cfg.command == "verify":
        if len(v["spacings"]) < 2:
            raise ConfigError("--spacings needs at least two values")
        if len(v["patch_center"]) != 4:
            raise ConfigError("--patch-center needs t,x,y,z")
    if cfg.command in ("construct", "verify"):
        if v["solution"] != "boosted" and src.get("velocity") != "default" and any(v["velocity"]):
            raise ConfigError(f"velocity conflicts with solution {v['solution']!r}")
        if v["solution"] != "spinning" and src.get("mode") not in ("default", None):
            raise ConfigError(f"mode conflicts with solution {v['solution']!r}")
    if cfg.command == "evolve" and not 0 <= v["perturbation"] <= ev.MAX_PERTURBATION:
        raise ConfigError(f"perturbation must lie in [0, {ev.MAX_PERTURBATION}]")


# -- execution -------------------------------------------------------------------

@dataclass
class Outcome:
    files: list[Path]
    results: dict
    passed: bool = True


def _spec(cfg: RunConfig) -> br.BreatherSpec:
    v = cfg.values
    solution = v.get("solution", "rest-breather")
    kwargs = {"alpha": v["alpha"], "omega_override": v.get("omega")}
    if solution == "boosted":
        kwargs["velocity"] = v["velocity"]
    elif solution == "spinning":
        kwargs["mode"] = ModeIndex(*v["mode"])
    elif solution == "train":
        kwargs["train_period_d"] = v["train_d"]
        kwargs["train_truncation_K"] = v["train_K"]
    return br.BreatherSpec(**kwargs)


def _run_construct(cfg: RunConfig) -> Outcome:
    spec = _spec(cfg)
    params = cfg.params
    grid = build_grid(cfg["axes"])
    if spec.is_train and cfg["quantity"] == "psi":
        raise ConfigError("trains are constructed through their action; use --quantity action")

    def expr(t=0.0, x=0.0, y=0.0, z=0.0, r=None):
        if r is not None:
            x = r
        event = br.SpacetimeEvent(*np.broadcast_arrays(t, x, y, z))
        if cfg["quantity"] == "psi":
            return br.psi(spec, event, params)
        if spec.is_train:
            return br.train_action(spec, event, params).value
        return br.action(spec, event, params)

    quantity = "Psi" if cfg["quantity"] == "psi" else "Action"
    fld = sample(expr, grid, quantity, threads=resolve_threads())
    coords = [np.broadcast_to(c, grid.shape).reshape(-1) for c in (grid.coords()[n] for n in grid.names)]
    flat = fld.values.reshape(-1)
    name = "field.csv"
    rows = zip(*coords, flat.real, flat.imag)
    files = [write_csv(cfg.out / name, list(grid.names) + ["re", "im"], rows)]
    if cfg["dump"]:
        files.append(write_brth(cfg.out / "field.brth", fld))
    return Outcome(files, {"points": grid.size, "quantity": quantity})


def _verify_grids(cfg: RunConfig):
    t, x, y, z = cfg["patch_center"]
    hw = cfg["patch_half_width"]
    center = {"t": t, "x": x, "y": y, "z": z}
    half = {k: hw for k in center}
    return [rv.patch_grid(center, half, h) for h in cfg["spacings"]]


def _run_verify(cfg: RunConfig) -> Outcome:
    spec = _spec(cfg)
    params = cfg.params
    checks = cfg["checks"]
    if checks == "auto":
        checks = "kg,qhj" if cfg["solution"] == "rest-breather" else "kg"
    names = [c.strip() for c in checks.split(",") if c.strip()]
    if not names or any(c not in ("kg", "qhj") for c in names):
        raise ConfigError(f"--checks must list kg and/or qhj, got {checks!r}")
    grids = _verify_grids(cfg)
    files, results, passed = [], {}, True
    for name in names:
        report = (rv.kg_residual if name == "kg" else rv.qhj_residual)(spec, grids, params)
        rows = [(lv.spacing, lv.l2, lv.linf) for lv in report.levels]
        files.append(write_csv(cfg.out / f"residuals_{name}.csv", ["spacing", "l2", "linf"], rows))
        order = report.convergence_order
        ok = order is not None and abs(order - ORDER_TARGET) <= cfg["tolerance"]
        passed &= ok
        results[name] = {"order": order, "pass": ok}
    return Outcome(files, results, passed)


def _run_evolve(cfg: RunConfig) -> Outcome:
    params = cfg.params
    spec = br.BreatherSpec(alpha=cfg["alpha"], omega_override=cfg["omega"])
    h, dt, R, periods = cfg["spacing"], cfg["dt"], cfg["half_width"], cfg["periods"]
    grid = ev.radial_grid(R, h)
    state = ev.init_from_breather(spec, grid, params)
    steps = int(round(periods * ev.clock_period(params) / dt))
    per_period = max(1, int(round(ev.clock_period(params) / dt)))
    run = ev.evolve(state, dt, steps, params, cfg["mass_term"], probes=[(cfg["probe_r"],)],
                    snapshot_every=per_period)
    series = run.probes[0]
    files = [write_csv(cfg.out / "probe.csv", ["t", "re", "im"],
                       zip(series.times, series.values.real, series.values.imag))]
    deviations = [ev.deviation_from_analytic(s, spec, params) for s in run.snapshots]
    files.append(write_csv(cfg.out / "deviation.csv", ["t", "relative_l2"],
                           zip([s.t for s in run.snapshots], deviations)))
    beat = ev.dominant_frequency(series, remove_clock=True, params=params)
    fidelity = ev.fidelity_experiment(spec, h, dt, R, periods, params, cfg["mass_term"])
    results = {
        "steps": steps,
        "max_deviation": max(deviations),
        "energy_drift": fidelity.energy_drift,
        "reversal_error": fidelity.reversal_error,
        "beat_frequency": beat,
        "frequency_resolution": ev.frequency_resolution(series),
    }
    passed = (max(deviations) < cfg["max_deviation"] and fidelity.energy_drift < 1e-6
              and fidelity.reversal_error < 1e-10 and abs(beat - params.clock_frequency) <= 0.01 * params.clock_frequency)
    if cfg["perturbation"] > 0:
        rep = ev.stability_experiment(spec, cfg["perturbation"], periods, cfg["seed"], h, dt, R, params,
                                      mass_term=cfg["mass_term"])
        files.append(write_csv(cfg.out / "stability.csv", ["t", "deviation_energy"],
                               zip(rep.times, rep.deviation_norms)))
        results["growth_factor"] = rep.growth_factor
        passed &= rep.growth_factor <= 1.05
    if cfg["dump"]:
        files.append(write_brth(cfg.out / "final_state.brth", run.state.psi))
    return Outcome(files, results, passed)


def _run_quantize(cfg: RunConfig) -> Outcome:
    params = cfg.params
    ns = cfg["n"]
    well = cfg["well"]
    if well == "ring":
        levels = qz.ring_levels(cfg["d"], ns, params)
        expected = [2 * math.pi * n * params.hbar / cfg["d"] for n in ns]
        errors = [abs(p - e) for (_, p), e in zip(levels, expected)]
        passed = max(errors) <= 1e-10
        files = [write_csv(cfg.out / "levels.csv", ["n", "p_n"], levels)]
        return Outcome(files, {"max_abs_error": max(errors)}, passed)
    if well == "harmonic":
        U = qz.harmonic_well(cfg["omega0"], params)
    else:
        U = qz.quartic_well(cfg["coefficient"])
    levels = qz.bohr_sommerfeld_levels(U, params, ns)
    files = [write_csv(cfg.out / "levels.csv", ["n", "E_n"], levels)]
    results: dict = {"levels": len(levels)}
    passed = True
    if well == "harmonic":
        rel = [abs(E - n * params.hbar * cfg["omega0"]) / (n * params.hbar * cfg["omega0"])
               for n, E in levels if n > 0]
        results["max_relative_error"] = max(rel) if rel else 0.0
        passed = not rel or max(rel) <= 1e-6
    return Outcome(files, results, passed)


def _run_scan(cfg: RunConfig) -> Outcome:
    params = cfg.params
    d = cfg["d"] if cfg["d"] is not None else qz.reflecting_wall_period(cfg["wall_separation"])
    scan = qz.scan_quantized_momenta(d, cfg["p_max"], cfg["samples"], params)
    files = [
        write_csv(cfg.out / "scan.csv", ["p", "residual"], zip(scan.momenta, scan.residuals)),
        write_csv(cfg.out / "quantized.csv", ["n", "p_n"], zip(scan.quantum_numbers, scan.quantized_p)),
    ]
    expected = [2 * math.pi * n * params.hbar / d for n in scan.quantum_numbers]
    count = int(math.floor(d * cfg["p_max"] / (2 * math.pi * params.hbar))) + 1
    err = max(abs(p - e) for p, e in zip(scan.quantized_p, expected))
    passed = err <= 1e-10 and len(scan.quantized_p) == count
    return Outcome(files, {"period": d, "levels": len(scan.quantized_p), "max_abs_error": err}, passed)


def _run_trajectory(cfg: RunConfig) -> Outcome:
    params = cfg.params
    p = np.asarray(cfg["momentum"])
    E = ch.free_particle_energy(p, params)
    gradients = ch.ActionGradients.free(E + params.e_charge * cfg["U0"], p)
    potentials = Potentials.constant(cfg["U0"]) if cfg["U0"] else None
    traj = ch.integrate_trajectory(gradients, potentials, cfg["x0"], (0.0, cfg["t_end"]), cfg["dt"], params)
    rows = zip(traj.times, *traj.positions.T, *traj.velocities.T)
    files = [write_csv(cfg.out / "trajectory.csv", ["t", "x", "y", "z", "vx", "vy", "vz"], rows)]
    v_expected = p * params.c**2 / E
    err = float(np.max(np.abs(traj.velocities - v_expected)))
    # transport of a gaussian perturbation along the same characteristics
    profile = ch.gaussian_profile(cfg["x0"], cfg["width"])
    line = np.linspace(-5 * cfg["width"], 5 * cfg["width"] + float(np.linalg.norm(v_expected)) * cfg["t_end"], 2001)
    line = line + cfg["x0"][0]
    samplers = [(t, ch.advect_profile(profile, v_expected, t)) for t in np.linspace(0, cfg["t_end"], 6)]
    vc = ch.centroid_velocity(samplers, line)
    results = {"speed": float(np.linalg.norm(traj.velocities[-1])), "velocity_error": err,
               "centroid_velocity": vc}
    return Outcome(files, results, err < 1e-12 * max(1.0, float(np.linalg.norm(v_expected))) + 1e-12)


RUNNERS = {
    "construct": _run_construct,
    "verify": _run_verify,
    "evolve": _run_evolve,
    "quantize": _run_quantize,
    "trajectory": _run_trajectory,
    "scan": _run_scan,
}


def execute(cfg: RunConfig) -> tuple[int, dict]:
    """Run the command, write outputs and the manifest; returns (exit code, manifest)."""
    started = time.time()
    cfg.out.mkdir(parents=True, exist_ok=True)
    outcome = RUNNERS[cfg.command](cfg)
    code = EXIT_OK if outcome.passed else EXIT_FAILED
    inputs = {}
    if cfg.config_file is not None:
        inputs[str(cfg.config_file)] = sha256_file(cfg.config_file)
    manifest = {
        "tool": "breatherlab",
        "version": __version__,
        "config": cfg.echo(),
        "threads": resolve_threads(),
        "started": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
        "wall_clock_seconds": time.time() - started,
        "inputs": inputs,
        "outputs": [{"path": f.name, "sha256": sha256_file(f), "bytes": f.stat().st_size} for f in outcome.files],
        "results": _jsonable(outcome.results),
        "status": "pass" if outcome.passed else "fail",
        "exit_code": code,
    }
    write_manifest(cfg.out / "manifest.json", manifest)
    return code, manifest


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"breatherlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        code, manifest = execute(cfg)
    except (ConfigError, ValueError, ArithmeticError) as exc:
        print(f"breatherlab {cfg.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"{cfg.command}: {manifest['status']} -> {cfg.out / 'manifest.json'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
