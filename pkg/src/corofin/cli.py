"""Command-line front end.

    corofin solve CONFIG [--out DIR]
    corofin study NAME [--out DIR] [--mu F] [--n-inc N] [--workers K]
    corofin mesh PARAMS --out MODEL_FILE
    corofin verify [--suite all|tangent|roundtrip|oracle]

Configs are YAML; displacements are given in millimetres and converted to
metres on load. ``COROFIN_OUT`` overrides the output directory.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import finray
from .assembly import SingularTangentError
from .element import GeometryError
from .model import (DofKind, SolverSettings, StructureModel, load_model, save_model, validate)
from .solver import (LOAD_RATIO_MODES, ControlDofInsensitiveError, DisplacementLoadCase,
                     SolveResult, displacement_control, force_control, reaction_forces)

log = logging.getLogger("corofin")

OUT_ENV = "COROFIN_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2


class ConfigError(Exception):
    """Config problem, formatted as ``file:line: message``."""


# --- config loading ---------------------------------------------------------

class _Doc:
    """Parsed YAML plus the source line of every mapping key and sequence item."""

    def __init__(self, path: Path):
        self.path = path
        text = path.read_text()
        try:
            root = yaml.compose(text, Loader=yaml.SafeLoader)
            self.data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = mark.line + 1 if mark else 1
            raise ConfigError(f"{path}:{line}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
        self.lines: dict[tuple, int] = {}
        if root is not None:
            self._index(root, ())

    def _index(self, node, at: tuple) -> None:
        self.lines[at] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                self.lines[at + (k.value,)] = k.start_mark.line + 1
                self._index(v, at + (k.value,))
                self.lines[at + (k.value,)] = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._index(v, at + (i,))

    def error(self, at: tuple, message: str) -> ConfigError:
        while at and at not in self.lines:
            at = at[:-1]
        return ConfigError(f"{self.path}:{self.lines.get(at, 1)}: {message}")


@dataclass
class ScenarioConfig:
    model: StructureModel
    case: DisplacementLoadCase | None
    forces: np.ndarray | None
    settings: SolverSettings
    load_ratio: str
    out_dir: Path
    loads: list[tuple[int, int]]  # (node, dof) in config order


def _number(doc: _Doc, at: tuple, value, positive=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise doc.error(at, f"expected a number, got {value!r}")
    if positive and value <= 0:
        raise doc.error(at, f"expected a positive number, got {value!r}")
    return float(value)


def _section(doc: _Doc, data: dict, key: str, required=True) -> Any:
    if key not in data:
        if required:
            raise doc.error((), f"missing section '{key}'")
        return None
    return data[key]


def _build_model(doc: _Doc, spec) -> StructureModel:
    at = ("model",)
    if not isinstance(spec, dict) or len(spec) != 1 or not ({"finray", "file"} & set(spec)):
        raise doc.error(at, "model must have exactly one of 'finray' or 'file'")
    if "file" in spec:
        path = Path(spec["file"])
        if not path.is_absolute():
            path = doc.path.parent / path
        try:
            model = load_model(path)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise doc.error(at + ("file",), f"cannot load structure file {path}: {exc}") from None
    else:
        raw = spec["finray"] or {}
        if isinstance(raw, str):
            raw = {"preset": raw}
        if not isinstance(raw, dict):
            raise doc.error(at + ("finray",), "finray must be a mapping of parameters")
        try:
            params = _finray_params(raw)
            model = finray.generate(params)
        except (TypeError, ValueError) as exc:
            bad = next((k for k in raw if k not in _PARAM_FIELDS and k != "preset"), None)
            raise doc.error(at + ("finray",) + ((bad,) if bad else ()), str(exc)) from None
    defects = validate(model)
    if defects:
        raise doc.error(at, "invalid model: " + "; ".join(defects))
    return model


_PARAM_FIELDS = {f.name for f in fields(finray.FinRayParams)}
_PRESETS = {"table1-sparse": finray.TABLE1_SPARSE, "table1-dense": finray.TABLE1_DENSE,
            "estimation": finray.FinRayParams()}


def _finray_params(raw: dict) -> finray.FinRayParams:
    raw = dict(raw)
    preset = raw.pop("preset", "estimation")
    if preset not in _PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(_PRESETS)}")
    unknown = set(raw) - _PARAM_FIELDS
    if unknown:
        raise ValueError(f"unknown fin-ray parameter(s) {sorted(unknown)}")
    base = {f: getattr(_PRESETS[preset], f) for f in _PARAM_FIELDS}
    base.update(raw)
    return finray.FinRayParams(**base)


def _loadable_nodes(model: StructureModel) -> list[int]:
    try:
        return finray.contact_node_ids(model)
    except ValueError:
        fixed_nodes = {d // 3 for d in model.constraints}
        return [k for k in range(model.n_nodes) if k not in fixed_nodes]


def _node(doc: _Doc, at: tuple, value, loadable: list[int]) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise doc.error(at, f"node must be an integer, got {value!r}")
    if value not in loadable:
        shown = f"{loadable[0]}..{loadable[-1]}" if loadable == list(
            range(loadable[0], loadable[-1] + 1)) else str(loadable)
        raise doc.error(at, f"unknown or non-loadable node {value} (loadable: {shown})")
    return value


def load_config(path: str | Path, out_override: str | Path | None = None) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}:1: config file not found")
    doc = _Doc(path)
    data = doc.data
    if not isinstance(data, dict):
        raise doc.error((), "config must be a mapping")
    known = {"model", "load", "solver", "output"}
    for key in data:
        if key not in known:
            raise doc.error((key,), f"unknown section '{key}'")

    model = _build_model(doc, _section(doc, data, "model"))
    loadable = _loadable_nodes(model)

    solver = _section(doc, data, "solver", required=False) or {}
    if not isinstance(solver, dict):
        raise doc.error(("solver",), "solver must be a mapping")
    allowed = {"tolerance", "maxiter", "n_inc", "F0", "load_ratio"}
    for key in solver:
        if key not in allowed:
            raise doc.error(("solver", key), f"unknown solver setting '{key}'")
    try:
        settings = SolverSettings(
            tolerance=_number(doc, ("solver", "tolerance"), solver.get("tolerance", 1e-3)),
            maxiter=int(_number(doc, ("solver", "maxiter"), solver.get("maxiter", 100))),
            n_inc=int(_number(doc, ("solver", "n_inc"), solver.get("n_inc", 100))),
        )
    except ValueError as exc:
        raise doc.error(("solver",), str(exc)) from None
    F0 = solver.get("F0")
    if F0 is not None:
        F0 = _number(doc, ("solver", "F0"), F0, positive=True)
    load_ratio = solver.get("load_ratio", "coupled")
    if load_ratio not in LOAD_RATIO_MODES:
        raise doc.error(("solver", "load_ratio"), f"load_ratio must be one of {LOAD_RATIO_MODES}")

    load = _section(doc, data, "load")
    if not isinstance(load, dict) or len(set(load) & {"displacements", "forces"}) != 1 \
            or set(load) - {"displacements", "forces"}:
        raise doc.error(("load",), "load must contain exactly one of 'displacements' or 'forces'")
    kind = "displacements" if "displacements" in load else "forces"
    entries = load[kind]
    if not isinstance(entries, list) or not entries:
        raise doc.error(("load", kind), f"'{kind}' must be a non-empty list")

    targets: dict[int, float] = {}
    forces = np.zeros(model.n_dof)
    loads: list[tuple[int, int]] = []
    for i, item in enumerate(entries):
        at = ("load", kind, i)
        if not isinstance(item, dict):
            raise doc.error(at, "each load entry must be a mapping")
        node = _node(doc, at + ("node",), item.get("node"), loadable)
        if kind == "displacements":
            extra = set(item) - {"node", "mm", "direction"}
            if extra:
                raise doc.error(at + (sorted(extra)[0],), f"unknown key '{sorted(extra)[0]}'")
            mm = _number(doc, at + ("mm",), item.get("mm"))
            direction = item.get("direction", [1.0, 0.0])
            if (not isinstance(direction, list) or len(direction) != 2
                    or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in direction)
                    or math.hypot(*direction) == 0):
                raise doc.error(at + ("direction",), "direction must be a nonzero [dx, dy] pair")
            unit = np.asarray(direction, dtype=float) / math.hypot(*direction)
            for kind_i, comp in zip((DofKind.X, DofKind.Y), unit):
                if comp != 0.0 and mm != 0.0:
                    dof = model.dof(node, kind_i)
                    if dof in targets:
                        raise doc.error(at, f"node {node} listed twice")
                    targets[dof] = mm * 1e-3 * comp
                    loads.append((node, dof))
        else:
            extra = set(item) - {"node", "fx", "fy", "m"}
            if extra:
                raise doc.error(at + (sorted(extra)[0],), f"unknown key '{sorted(extra)[0]}'")
            for key, kind_i in (("fx", DofKind.X), ("fy", DofKind.Y), ("m", DofKind.ROT)):
                if key in item:
                    val = _number(doc, at + (key,), item[key])
                    dof = model.dof(node, kind_i)
                    if val != 0.0:
                        forces[dof] += val
                        loads.append((node, dof))

    for dof in targets:
        if dof in model.constraints:
            raise doc.error(("load",), f"dof {dof} is constrained")
    out = out_override or os.environ.get(OUT_ENV) or data.get("output") or "out"
    out_dir = Path(out)
    if not out_dir.is_absolute() and not out_override and not os.environ.get(OUT_ENV):
        out_dir = path.parent / out_dir
    case = None
    if kind == "displacements":
        try:
            case = DisplacementLoadCase.build(model, targets, F0)
        except SingularTangentError as exc:
            raise doc.error(("model",), str(exc)) from None
    return ScenarioConfig(model, case, forces if kind == "forces" else None, settings,
                          load_ratio, out_dir, loads)


# --- artifacts ----------------------------------------------------------------

def _csv(rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def forces_csv(cfg: ScenarioConfig, res: SolveResult) -> str:
    rows = [("node", "dof", "displacement_mm", "force_N")]
    by_dof = dict(zip(res.controlled, res.contact_forces))
    for node, dof in cfg.loads:
        rows.append((node, DofKind(dof % 3).name.lower(), repr(float(res.u_final[dof]) * 1e3),
                     repr(float(by_dof.get(dof, 0.0)))))
    return _csv(rows)


def deformation_csv(model: StructureModel, u: np.ndarray) -> str:
    rows = [("node", "x0_m", "y0_m", "x_m", "y_m", "theta_rad")]
    U = u.reshape(-1, 3)
    for n in model.nodes:
        ux, uy, th = U[n.id]
        rows.append((n.id, repr(n.x0), repr(n.y0), repr(n.x0 + float(ux)), repr(n.y0 + float(uy)),
                     repr(float(th))))
    return _csv(rows)


def trace_json(model: StructureModel, res: SolveResult, mode: str) -> str:
    reac = reaction_forces(model, res.state)
    doc = {
        "mode": mode,
        "converged": res.converged,
        "increments": [{"increment": r.increment, "iterations": r.iterations, "rho": r.rho}
                       for r in res.trace],
        "contact_forces": {str(d): float(f) for d, f in zip(res.controlled, res.contact_forces)},
        "reactions": {str(d): f for d, f in reac.items()},
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def run_scenario(config_path: str | Path, out: str | Path | None = None) -> int:
    try:
        cfg = load_config(config_path, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if cfg.case is not None:
            res = displacement_control(cfg.model, cfg.case, cfg.settings, load_ratio=cfg.load_ratio)
            mode = "displacement"
        else:
            res = force_control(cfg.model, cfg.forces, cfg.settings)
            mode = "force"
    except (SingularTangentError, ControlDofInsensitiveError, GeometryError) as exc:
        print(f"error: solve failed: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "forces.csv").write_text(forces_csv(cfg, res))
    (cfg.out_dir / "deformation.csv").write_text(deformation_csv(cfg.model, res.u_final))
    (cfg.out_dir / "trace.json").write_text(trace_json(cfg.model, res, mode))
    if not res.converged:
        print(f"warning: not converged; partial results in {cfg.out_dir}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    print(f"converged in {len(res.trace)} increments; results in {cfg.out_dir}")
    return EXIT_OK


def run_study(name: str, out: str | Path | None = None, mu: float | None = None,
              n_inc: int = 100, workers: int = 1):
    from .studies import cells_for, run_cells

    cells = cells_for(name, mu)
    report = run_cells(cells, SolverSettings(n_inc=n_inc), workers=workers, name=name)
    out_dir = Path(out or os.environ.get(OUT_ENV) or "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{name}.csv").write_text(report.to_csv())
    (out_dir / f"{name}.json").write_text(report.to_json())
    return report


# --- verify suites ------------------------------------------------------------

def _verify_oracle() -> list[tuple[str, bool, str]]:
    from .verify import cantilever_oracle

    E, b, h, L = 2e7, 20e-3, 1e-3, 0.08
    model = cantilever(E, b * h, b * h ** 3 / 12, L)
    delta = 0.01 * L
    case = DisplacementLoadCase.build(model, {model.dof(1, DofKind.Y): delta})
    res = displacement_control(model, case, SolverSettings(tolerance=1e-12, n_inc=10))
    ref = cantilever_oracle(E, b * h ** 3 / 12, L, delta)
    rel = abs(res.contact_forces[0] - ref) / ref
    return [("cantilever force vs 3EI*delta/L^3", rel <= 0.01, f"rel err {rel:.2e}")]


def _verify_tangent() -> list[tuple[str, bool, str]]:
    from .verify import fd_tangent_check

    model = finray.generate(finray.FinRayParams())
    err0 = fd_tangent_check(model)
    case = DisplacementLoadCase.build(model, {model.dof(5, DofKind.X): 6e-3})
    res = displacement_control(model, case, SolverSettings())
    err6 = fd_tangent_check(model, res.u_final)
    return [("tangent vs finite differences at u=0", err0 <= 1e-3, f"{err0:.2e}"),
            ("tangent vs finite differences at node 5 / 6 mm", err6 <= 1e-3, f"{err6:.2e}")]


def _verify_roundtrip() -> list[tuple[str, bool, str]]:
    from .verify import horizontal_case, round_trip

    model = finray.generate(finray.FinRayParams())
    out = []
    for nodes, mm in (((5,), (6,)), ((4, 7), (8, 4)), ((2, 5, 8), (2, 6, 10))):
        rep = round_trip(model, horizontal_case(model, [(n, d * 1e-3) for n, d in zip(nodes, mm)]))
        worst = rep.max_abs_error()
        ok = worst is not None and worst <= 0.5
        out.append((f"round trip nodes {nodes} at {mm} mm", ok, f"max |err| {worst}%"))
    return out


SUITES = {"oracle": _verify_oracle, "tangent": _verify_tangent, "roundtrip": _verify_roundtrip}


def cantilever(E: float, A: float, I: float, L: float, n_el: int = 1) -> StructureModel:
    """Horizontal cantilever clamped at node 0."""
    from .model import Member, Node, clamp

    nodes = tuple(Node(k, k * L / n_el, 0.0) for k in range(n_el + 1))
    members = tuple(Member(k, k, k + 1, E, A, I, L / n_el, 0.0) for k in range(n_el))
    return StructureModel(nodes, members, clamp([0]))


# --- entry point ------------------------------------------------------------------

def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="corofin", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one scenario config")
    p.add_argument("config")
    p.add_argument("--out")

    p = sub.add_parser("study", help="run a named scenario grid")
    p.add_argument("name", choices=("mesh-density", "radius-factor", "table2", "table3", "table4"))
    p.add_argument("--out")
    p.add_argument("--mu", type=float)
    p.add_argument("--n-inc", type=int, default=100)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("mesh", help="write a fin-ray structure file")
    p.add_argument("params", help="YAML parameter file or preset: " + ", ".join(sorted(_PRESETS)))
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="run built-in checks")
    p.add_argument("--suite", choices=("all", *SUITES), default="all")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "solve":
        return run_scenario(args.config, args.out)
    if args.command == "study":
        report = run_study(args.name, args.out, args.mu, args.n_inc, args.workers)
        s = report.summary()
        print(f"{args.name}: {s['cells']} cells, {len(s['invalid_cells'])} N.A., "
              f"overall mean |error| {s['overall']}%")
        return EXIT_OK
    if args.command == "mesh":
        try:
            if args.params in _PRESETS:
                params = _PRESETS[args.params]
            else:
                raw = yaml.safe_load(Path(args.params).read_text()) or {}
                params = _finray_params(raw)
            model = finray.generate(params)
        except (OSError, ValueError, TypeError, yaml.YAMLError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        save_model(model, args.out)
        print(f"{model.n_nodes} nodes, {model.n_mem} members -> {args.out}")
        return EXIT_OK
    if args.command == "verify":
        names = list(SUITES) if args.suite == "all" else [args.suite]
        ok = True
        for name in names:
            for label, passed, detail in SUITES[name]():
                ok &= passed
                print(f"[{'PASS' if passed else 'FAIL'}] {name}: {label} ({detail})")
        return EXIT_OK if ok else EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
