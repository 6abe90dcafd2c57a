"""Command line front end: configuration parsing, dispatch and output writing."""

from __future__ import annotations

import argparse
import copy
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from mixflow.constitutive import (
    AdmissibleBox, IdealGasMixture, SpeciesParams, eval_thermo, hessian_and_hypotheses,
    lemma_scan,
)
from mixflow.errors import ConfigError, IoError, MixflowError
from mixflow.euler_core import structure_check
from mixflow.harness import (
    SweepReport, chapman_enskog_gap, sweep_theorem1, sweep_theorem2,
)
from mixflow.initial import InitialCondition
from mixflow.maxwell_stefan import FrictionCoeffs, property_suite
from mixflow.solver_type1 import Grid1D, RunResult, SimConfig, run
from mixflow.solver_type2 import run_type2, well_prepared_init

COMMANDS = ("simulate-type1", "simulate-type2", "sweep-thm1", "sweep-thm2", "sweep-ce-gap",
            "check-structure", "check-ms")

DEFAULTS = {
    "kappa_law": "constant",
    "cfl": 0.4,
    "delta": 0.1,
    "M": 10.0,
    "rho_floor": 1e-10,
    "seed": 0,
    "cells": None,
    "snapshot_every": 10,
    "max_steps": None,
    "dt": None,
    "scheme": "imex",
    "initial": None,
    "eps_list": None,
    "max_cells": 2048,
    "well_prepared": True,
    "n_systems": 1000,
    "n_z": 100,
    "n_states": 100,
    "n_pairs": 10000,
    "out_dir": "out",
}
REQUIRED = {
    "check-ms": (),
    "check-structure": ("n", "R", "c"),
}
MODEL_KEYS = ("n", "R", "c", "b", "epsilon", "kappa0", "T")

# per-command defaults for the grid, the sweep values and the initial data
COMMAND_DEFAULTS = {
    "sweep-thm1": dict(cells=256, eps_list=[1e-2, 3e-3, 1e-3, 3e-4], initial={"kind": "smooth"}),
    "sweep-thm2": dict(cells=256, eps_list=[1e-2, 3e-3, 1e-3, 3e-4], initial={"kind": "smooth"}),
    "sweep-ce-gap": dict(cells=128, eps_list=[1e-1, 3e-2, 1e-2, 3e-3], initial={"kind": "rest"}),
}


@dataclass
class RunConfig:
    command: str
    n: int | None = None
    R: list | None = None
    c: list | None = None
    b: list | None = None
    epsilon: float = 0.0
    kappa0: float = 0.0
    T: float = 1.0
    kappa_law: str = "constant"
    cfl: float = 0.4
    delta: float = 0.1
    M: float = 10.0
    rho_floor: float = 1e-10
    seed: int = 0
    cells: int = 128
    snapshot_every: int = 10
    max_steps: int | None = None
    dt: float | None = None
    scheme: str = "imex"
    initial: dict = field(default_factory=lambda: {"kind": "smooth"})
    eps_list: list = field(default_factory=list)
    max_cells: int = 2048
    well_prepared: bool = True
    n_systems: int = 1000
    n_z: int = 100
    n_states: int = 100
    n_pairs: int = 10000
    out_dir: str = "out"

    def box(self) -> AdmissibleBox:
        return AdmissibleBox(self.delta, self.M)

    def model(self) -> IdealGasMixture:
        return IdealGasMixture(SpeciesParams(self.R, self.c), self.kappa0, self.kappa_law)

    def friction(self) -> FrictionCoeffs:
        return _friction(self.b, self.n)

    def sim_config(self) -> SimConfig:
        try:
            return self._sim_config()
        except ValueError as exc:
            raise ConfigError(f"config: {exc}") from exc

    def _sim_config(self) -> SimConfig:
        return SimConfig(self.model(), self.friction(), self.epsilon, self.T, cfl=self.cfl,
                         snapshot_every=self.snapshot_every, max_steps=self.max_steps,
                         dt=self.dt, box=self.box(), rho_floor=self.rho_floor,
                         scheme=self.scheme)

    def initial_condition(self) -> InitialCondition:
        return InitialCondition(self.initial.get("kind", "smooth"),
                                dict(self.initial.get("params", {})))


def _friction(b, n) -> FrictionCoeffs:
    if n == 1:
        return FrictionCoeffs(np.zeros((1, 1)))
    arr = np.asarray(b, dtype=float)
    if arr.ndim == 2:
        if arr.shape != (n, n):
            raise ConfigError(f"b: expected a {n}x{n} matrix")
        for i in range(n):
            for j in range(i + 1, n):
                if arr[i, j] != arr[j, i]:
                    raise ConfigError(f"b: entry ({i + 1},{j + 1}) is not symmetric")
        return FrictionCoeffs(arr)
    if arr.ndim != 1 or arr.size != n * (n - 1) // 2:
        raise ConfigError(f"b: expected {n * (n - 1) // 2} upper-triangular entries")
    iu = np.triu_indices(n, 1)
    for k, (i, j) in enumerate(zip(*iu)):
        if not arr[k] > 0:
            raise ConfigError(f"b: entry ({i + 1},{j + 1}) must be positive")
    return FrictionCoeffs.from_upper(arr, n)


def _set_dotted(data: dict, key: str, value) -> None:
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{key}: cannot descend into a non-object")
    node[parts[-1]] = value


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key=value`` strings; values are parsed as JSON when possible."""
    data = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _set_dotted(data, key.strip(), value)
    return data


def _number(data, key, *, integer=False, positive=False, nonneg=False, upper=None):
    val = data[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{key}: expected a number")
    if integer and int(val) != val:
        raise ConfigError(f"{key}: expected an integer")
    if not np.isfinite(val):
        raise ConfigError(f"{key}: must be finite")
    if positive and not val > 0:
        raise ConfigError(f"{key}: must be positive")
    if nonneg and val < 0:
        raise ConfigError(f"{key}: must be non-negative")
    if upper is not None and val > upper:
        raise ConfigError(f"{key}: must not exceed {upper}")
    return int(val) if integer else float(val)


def _vector(data, key, n):
    val = data[key]
    if not isinstance(val, list) or len(val) != n:
        raise ConfigError(f"{key}: expected a list of {n} numbers")
    out = []
    for k, x in enumerate(val):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not x > 0:
            raise ConfigError(f"{key}[{k}]: must be a positive number")
        out.append(float(x))
    return out


def validate(data: dict) -> RunConfig:
    """Turn a raw mapping into a :class:`RunConfig` with defaults applied."""
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    known = {"command", *MODEL_KEYS, *DEFAULTS}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    command = data.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command: expected one of {', '.join(COMMANDS)}")
    required = REQUIRED.get(command, MODEL_KEYS)
    for key in required:
        if key not in data:
            raise ConfigError(f"{key}: required for {command}")

    merged = dict(DEFAULTS)
    merged.update({k: v for k, v in COMMAND_DEFAULTS.get(command, {}).items()})
    merged.update({k: v for k, v in data.items() if v is not None or k not in merged})
    for key in ("cells", "eps_list", "initial"):
        if merged[key] is None:
            merged[key] = {"cells": 128, "eps_list": [], "initial": {"kind": "smooth"}}[key]

    out = {"command": command}
    if "n" in data:
        out["n"] = _number(merged, "n", integer=True, positive=True)
        n = out["n"]
        out["R"] = _vector(merged, "R", n) if "R" in data else None
        out["c"] = _vector(merged, "c", n) if "c" in data else None
        if "b" in data:
            _friction(data["b"], n)
            out["b"] = data["b"]
    for key in ("epsilon", "kappa0"):
        if key in data:
            out[key] = _number(merged, key, nonneg=True)
    if "T" in data:
        out["T"] = _number(merged, "T", positive=True)
    out["cfl"] = _number(merged, "cfl", positive=True, upper=1.0)
    out["delta"] = _number(merged, "delta", positive=True)
    out["M"] = _number(merged, "M", positive=True)
    if out["M"] <= out["delta"]:
        raise ConfigError("M: must exceed delta")
    out["rho_floor"] = _number(merged, "rho_floor", positive=True)
    out["seed"] = _number(merged, "seed", integer=True, nonneg=True)
    out["cells"] = _number(merged, "cells", integer=True)
    if out["cells"] < 8:
        raise ConfigError("cells: need at least 8")
    out["snapshot_every"] = _number(merged, "snapshot_every", integer=True, positive=True)
    for key in ("max_steps", "dt"):
        if merged[key] is not None:
            out[key] = _number(merged, key, integer=key == "max_steps", positive=True)
    for key in ("max_cells", "n_systems", "n_z", "n_states", "n_pairs"):
        out[key] = _number(merged, key, integer=True, positive=True)
    if merged["kappa_law"] not in ("constant", "linear"):
        raise ConfigError("kappa_law: expected 'constant' or 'linear'")
    out["kappa_law"] = merged["kappa_law"]
    if merged["scheme"] not in ("imex", "strang"):
        raise ConfigError("scheme: expected 'imex' or 'strang'")
    out["scheme"] = merged["scheme"]
    if not isinstance(merged["well_prepared"], bool):
        raise ConfigError("well_prepared: expected true or false")
    out["well_prepared"] = merged["well_prepared"]
    out["out_dir"] = str(merged["out_dir"])

    eps_list = merged["eps_list"]
    if not isinstance(eps_list, list) or not all(
            isinstance(e, (int, float)) and not isinstance(e, bool) and e > 0 for e in eps_list):
        raise ConfigError("eps_list: expected a list of positive numbers")
    if command.startswith("sweep") and len(eps_list) < 3:
        raise ConfigError("eps_list: a sweep needs at least three values")
    out["eps_list"] = [float(e) for e in eps_list]

    initial = merged["initial"]
    if not isinstance(initial, dict) or set(initial) - {"kind", "params"}:
        raise ConfigError("initial: expected an object with 'kind' and 'params'")
    try:
        InitialCondition(initial.get("kind", "smooth"), dict(initial.get("params", {})))
    except ValueError as exc:
        raise ConfigError(f"initial: {exc}") from exc
    out["initial"] = initial
    return RunConfig(**out)


def parse_config(path, overrides=None) -> RunConfig:
    """Read a JSON configuration file, apply overrides and validate it."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return validate(apply_overrides(data, overrides))


def fmt(x) -> str:
    return "%.17g" % x


def write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else str(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def snapshot_rows(result: RunResult, cfg: SimConfig, type2: bool):
    """Header and rows for every stored snapshot."""
    n = cfg.model.n
    x = result.grid.x
    if type2:
        header = ["x", *(f"rho_{i + 1}" for i in range(n)), *(f"v_{i + 1}" for i in range(n)),
                  "theta"]
    else:
        header = ["x", *(f"rho_{i + 1}" for i in range(n)), "v", "theta", "p", "rho_eta"]
    tables = []
    for snap in result.snapshots:
        s = snap.state
        if type2:
            cols = [x, *s.rho, *s.vel, s.theta]
        else:
            th = eval_thermo(cfg.model, s.rho, s.theta)
            cols = [x, *s.rho, s.v, s.theta, th.p, th.rho_eta]
        tables.append(np.column_stack(cols))
    return header, tables


@dataclass
class Artifacts:
    """Everything a workflow leaves on disk, keyed by file name."""

    csv: dict = field(default_factory=dict)  # name -> (header, rows)
    json: dict = field(default_factory=dict)  # name -> mapping
    summary: str = ""
    exit_code: int = 0


def write_outputs(artifacts: Artifacts, out_dir) -> list:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, (header, rows) in sorted(artifacts.csv.items()):
            path = out / name
            write_csv(path, header, rows)
            paths.append(path)
        for name, doc in sorted(artifacts.json.items()):
            path = out / name
            path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
            paths.append(path)
    except OSError as exc:
        raise IoError(f"cannot write to {out}: {exc.strerror}") from exc
    return paths


def _run_artifacts(result: RunResult, cfg: SimConfig, type2: bool) -> Artifacts:
    art = Artifacts()
    header, tables = snapshot_rows(result, cfg, type2)
    for k, table in enumerate(tables):
        art.csv["snapshots_%06d.csv" % k] = (header, table)
    art.csv["diagnostics.csv"] = (result.diagnostics.header, result.diagnostics.rows)
    times = [s.t for s in result.snapshots]
    art.json["run_report.json"] = dict(checks=result.checks, snapshot_times=times,
                                       steps=result.snapshots[-1].step,
                                       n_cells=result.grid.n_cells)
    return art


def _sweep_artifacts(name: str, report: SweepReport) -> Artifacts:
    art = Artifacts()
    art.json[f"{name}.json"] = report.to_json()
    rows = [(eps, t, val) for eps, (ts, vals) in report.series.items()
            for t, val in zip(ts, vals)]
    label = "gap" if report.kind == "ce-gap" else "I"
    art.csv[f"{name}.csv"] = (["eps", "t", label], rows)
    slope = "n/a" if report.fit is None else f"{report.fit.slope:.4f}"
    art.summary = f"slope={slope}"
    return art


def dispatch(rc: RunConfig) -> Artifacts:
    """Run the selected workflow and collect its artifacts."""
    start = time.perf_counter()
    rng = np.random.default_rng(rc.seed)
    cmd = rc.command
    if cmd == "check-ms":
        report = property_suite(rc.n_systems, rc.n_z, rng)
        art = Artifacts(json={"ms_report.json": {**asdict(report), "passed": report.passed}})
        art.summary = f"passed={report.passed} min_margin_bd={report.min_margin_bd:.3e}"
        art.exit_code = 0 if report.passed else 3
    elif cmd == "check-structure":
        model = IdealGasMixture(SpeciesParams(rc.R, rc.c), rc.kappa0, rc.kappa_law)
        box = rc.box()
        struct = structure_check(model, box, rc.n_states, rng, raise_on_fail=False)
        hyp = hessian_and_hypotheses(model, box, rc.n_states, rng)
        lemma = lemma_scan(model, box, rc.n_pairs, rng)
        ok = True
        try:
            struct.check()
        except MixflowError:
            ok = False
        art = Artifacts(json={"structure_report.json": dict(
            structure=asdict(struct), hypotheses=asdict(hyp), lemma=asdict(lemma), passed=ok)})
        art.summary = f"passed={ok} max_flux_residual={struct.max_flux_residual:.3e}"
        art.exit_code = 0 if ok else 3
    elif cmd in ("simulate-type1", "simulate-type2"):
        cfg = rc.sim_config()
        grid = Grid1D(rc.cells)
        prim = rc.initial_condition().build(grid.x, cfg.model)
        if cmd == "simulate-type1":
            result = run(cfg, grid, prim)
        else:
            result = run_type2(cfg, grid, well_prepared_init(prim, grid, cfg))
        art = _run_artifacts(result, cfg, cmd == "simulate-type2")
        art.summary = f"steps={result.snapshots[-1].step} min_zeta={result.checks['min_zeta']:.3e}"
    else:
        template = rc.sim_config()
        ic = rc.initial_condition()
        if cmd == "sweep-thm1":
            report = sweep_theorem1(template, Grid1D(rc.cells), ic, rc.eps_list, rc.kappa0)
        elif cmd == "sweep-thm2":
            report = sweep_theorem2(template, Grid1D(rc.cells), ic, rc.eps_list)
        else:
            report = chapman_enskog_gap(template, ic, rc.eps_list, n_cells=rc.cells,
                                        max_cells=rc.max_cells,
                                        well_prepared=rc.well_prepared)
        art = _sweep_artifacts(cmd.replace("-", "_"), report)
    art.summary = f"{cmd} {art.summary} runtime={time.perf_counter() - start:.2f}s"
    return art


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixflow",
                                description="Multicomponent flow solvers and convergence sweeps.")
    p.add_argument("config", help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.add_argument("--seed", type=int, help="random seed (overrides seed)")
    p.add_argument("--cells", type=int, help="number of grid cells (overrides cells)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="set a config key; the value is parsed as JSON when possible")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.override)
    for key in ("out", "seed", "cells"):
        val = getattr(args, key)
        if val is not None:
            overrides.append(f"{'out_dir' if key == 'out' else key}={json.dumps(val)}")
    try:
        rc = parse_config(args.config, overrides)
        art = dispatch(rc)
        write_outputs(art, rc.out_dir)
    except MixflowError as exc:
        print(f"mixflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    print(art.summary)
    return art.exit_code


if __name__ == "__main__":
    sys.exit(main())
