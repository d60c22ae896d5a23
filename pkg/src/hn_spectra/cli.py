"""Command line driver: ``hn-spectra run|compare|schema``.

A run reads one JSON config, fills every default explicitly, and writes
deterministic artifacts plus ``manifest.json`` into the output directory.
Exit codes: 0 ok, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import platform
import shutil
import sys
import tempfile
import time
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from . import cocycle, dos, finite, resolvent, spectral
from .base import BaseSystem, Potential
from .errors import ConfigError, HNError, NumericalFailure

TASKS = ("lyapunov", "field", "spectrum", "transition", "eig", "dos", "thouless", "green",
         "dirichlet-check")

_num = {"type": "number"}
_cplx = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]}
_opt_num = {"type": ["number", "null"]}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "hn-spectra run configuration",
    "type": "object",
    "required": ["model", "task", "output"],
    "additionalProperties": False,
    "properties": {
        "task": {"enum": list(TASKS)},
        "output": {"type": "string", "minLength": 1},
        "model": {
            "type": "object", "required": ["base", "potential"], "additionalProperties": False,
            "properties": {
                "base": {
                    "type": "object", "required": ["kind"], "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["rotation", "skew_shift", "periodic", "iid"]},
                        "alpha": _num,
                        "period": {"type": "integer", "minimum": 1},
                        "seed": {"type": "integer"},
                        "lam": _num,
                        "phase": {"oneOf": [_num, {"type": "array", "items": _num,
                                                   "minItems": 2, "maxItems": 2}]},
                    },
                },
                "potential": {
                    "type": "object", "required": ["form"], "additionalProperties": False,
                    "properties": {
                        "form": {"enum": ["fourier", "cosine", "single_exponential", "constant",
                                          "iid_diagonal"]},
                        "lam": _cplx,
                        "c": _cplx,
                        "coeffs": {"type": "object", "patternProperties": {"^-?[0-9]+$": _cplx},
                                   "additionalProperties": False, "minProperties": 1},
                        "y": _num,
                    },
                },
                "g": {"type": "number", "minimum": 0},
            },
        },
        "numeric": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "threads": {"type": "integer", "minimum": 1},
                "n": {"type": "integer", "minimum": 3},
                "boundary": {"enum": list(finite.BOUNDARIES)},
                "dense_cap": {"type": "integer", "minimum": 3},
                "E": _cplx,
                "energies": {"type": ["array", "null"], "items": _cplx},
                "probes": {"type": "array", "items": _cplx},
                "grid": {
                    "type": "object", "additionalProperties": False,
                    "properties": {"re_min": _num, "re_max": _num, "im_min": _num,
                                   "im_max": _num, "nx": {"type": "integer", "minimum": 2},
                                   "ny": {"type": "integer", "minimum": 2}},
                },
                "lyapunov": {
                    "type": "object", "additionalProperties": False,
                    "properties": {"n_steps": {"type": "integer", "minimum": 2},
                                   "n_phases": {"type": "integer", "minimum": 1},
                                   "burn_in": {"type": "integer", "minimum": 0}},
                },
                "uh": {
                    "type": "object", "additionalProperties": False,
                    "properties": {"dir_tol": _num, "angle_floor": _num, "growth_floor": _num,
                                   "horizon": {"type": "integer", "minimum": 2},
                                   "max_horizon": {"type": "integer", "minimum": 2},
                                   "n_samples": {"type": "integer", "minimum": 1}},
                },
                "sigma0": {
                    "type": "object", "additionalProperties": False,
                    "properties": {"re_min": _opt_num, "re_max": _opt_num,
                                   "step": {"type": "number", "exclusiveMinimum": 0},
                                   "resolution": {"type": "number", "exclusiveMinimum": 0}},
                },
                "tol0": _opt_num,
                "g_values": {"type": ["array", "null"], "items": _num},
                "g1": {"type": "number", "minimum": 0},
                "g2": {"type": "number", "minimum": 0},
                "match_tol": {"type": "number", "exclusiveMinimum": 0},
                "W": {"type": "integer", "minimum": 2},
                "green_regime": {"enum": ["auto", "forward", "hyperbolic"]},
                "green": {
                    "type": "object", "additionalProperties": False,
                    "properties": {"margin_floor": _num, "margin_sigmas": _num,
                                   "direction_horizon": {"type": "integer", "minimum": 2}},
                },
            },
        },
    },
}

DEFAULT_NUMERIC = {
    "threads": 1,
    "n": 256,
    "boundary": "periodic",
    "dense_cap": finite.DENSE_CAP,
    "E": 0.0,
    "energies": None,
    "probes": [],
    "grid": {"re_min": -3.0, "re_max": 3.0, "im_min": -2.0, "im_max": 2.0, "nx": 61, "ny": 41},
    "lyapunov": dict(cocycle.LYAPUNOV_DEFAULTS),
    "uh": dict(cocycle.UH_DEFAULTS),
    "sigma0": {"re_min": None, "re_max": None, "step": 0.01, "resolution": 1e-3},
    "tol0": None,
    "g_values": None,
    "g1": 0.0,
    "g2": 1.0,
    "match_tol": 1e-8,
    "W": 20,
    "green_regime": "auto",
    "green": {"margin_floor": 1e-3, "margin_sigmas": 3.0, "direction_horizon": 2048},
}


# ---------------------------------------------------------------- config

def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _set_path(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key.path=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {p} is not an object")
    node[parts[-1]] = val


def _path_str(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def validate(cfg: dict) -> None:
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(cfg),
                    key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError("; ".join(f"{_path_str(e)}: {e.message}" for e in errors))


def resolve(cfg: dict) -> dict:
    """Validate and fill every default so the manifest is self-contained."""
    validate(cfg)
    out = copy.deepcopy(cfg)
    out["numeric"] = _deep_merge(DEFAULT_NUMERIC, cfg.get("numeric", {}))
    out["model"].setdefault("g", 0.0)
    env = os.environ.get("HN_SPECTRA_THREADS")
    if env:
        try:
            out["numeric"]["threads"] = max(1, int(env))
        except ValueError:
            raise ConfigError(f"HN_SPECTRA_THREADS must be an integer, got {env!r}")
    validate(out)
    # semantic checks beyond the schema
    grid = out["numeric"]["grid"]
    if not (grid["re_max"] > grid["re_min"] and grid["im_max"] > grid["im_min"]):
        raise ConfigError("numeric/grid: bounds must be increasing")
    build_model(out)
    return out


def _cplx_val(x) -> complex:
    return complex(x[0], x[1]) if isinstance(x, list) else complex(x)


def build_model(cfg: dict) -> tuple[BaseSystem, Potential, float]:
    b = cfg["model"]["base"]
    pot = cfg["model"]["potential"]
    phase = b.get("phase")
    if b["kind"] == "skew_shift" and phase is not None and not isinstance(phase, list):
        raise ConfigError("model/base/phase: the skew-shift phase is a pair [x, y]")
    if b["kind"] != "skew_shift" and isinstance(phase, list):
        raise ConfigError("model/base/phase: a pair is only valid for the skew-shift")
    kw = {k: b[k] for k in ("alpha", "period", "seed", "lam") if k in b}
    base = BaseSystem(b["kind"], initial_phase=tuple(phase) if isinstance(phase, list) else phase,
                      **kw)
    pk = {"y": pot.get("y", 0.0)}
    if "lam" in pot:
        pk["lam"] = _cplx_val(pot["lam"])
    if "c" in pot:
        pk["c"] = _cplx_val(pot["c"])
    if "coeffs" in pot:
        pk["coeffs"] = tuple((int(k), _cplx_val(v)) for k, v in pot["coeffs"].items())
    p = Potential(pot["form"], **pk)
    if p.form == "iid_diagonal" and base.kind != "iid":
        raise ConfigError("model/potential: iid_diagonal needs an iid base")
    if base.kind == "iid" and p.form != "iid_diagonal":
        raise ConfigError("model/potential: an iid base only supports iid_diagonal")
    return base, p, float(cfg["model"].get("g", 0.0))


def _threads(k: int) -> None:
    import numba

    numba.set_num_threads(max(1, min(int(k), numba.config.NUMBA_NUM_THREADS)))


# ---------------------------------------------------------------- output helpers

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for mod in ("numpy", "scipy", "numba", "contourpy", "jsonschema"):
        try:
            out[mod] = metadata.version(mod)
        except metadata.PackageNotFoundError:
            out[mod] = None
    try:
        out["hn_spectra"] = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        out["hn_spectra"] = None
    return out


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------- tasks

def _field(cfg, base, p, g):
    num = cfg["numeric"]
    return cocycle.lyapunov_field(base, p, g, num["grid"], num["lyapunov"])


def _sigma0(cfg, base, p):
    num = cfg["numeric"]
    return spectral.real_spectrum_sigma0(base, p, {**num["sigma0"], "uh": num["uh"]})


def task_lyapunov(cfg, out: Path):
    base, p, g = build_model(cfg)
    num = cfg["numeric"]
    es = num["energies"] if num["energies"] is not None else [num["E"]]
    rows = []
    for e in es:
        E = _cplx_val(e)
        est = cocycle.lyapunov(base, p, E, g, num["lyapunov"])
        rows.append({"E": E, **est.as_dict()})
    write_json(out / "lyapunov.json", {"g": g, "estimates": rows})


def task_field(cfg, out: Path):
    base, p, g = build_model(cfg)
    fld = _field(cfg, base, p, g)
    fld.to_csv(out / "field.csv")
    fld.to_binary(out / "field.bin")
    write_json(out / "field.json", {"g": g, **fld.meta, "max_stderr": float(fld.stderr.max())})


def task_spectrum(cfg, out: Path):
    base, p, g = build_model(cfg)
    fld = _field(cfg, base, p, g)
    s0 = _sigma0(cfg, base, p) if p.is_real_valued() else spectral.Sigma0([], 0, (0, 0), 0, 0)
    s = spectral.assemble_spectrum(fld, g, s0, cfg["numeric"]["tol0"])
    s.meta["sigma0"] = s0.as_dict()
    s.meta["contours"] = spectral.count_contours(s)
    fld.to_binary(out / "field.bin")
    fld.to_csv(out / "field.csv")
    write_json(out / "spectrum.json", s.as_dict())


def task_transition(cfg, out: Path):
    base, p, g = build_model(cfg)
    fld = _field(cfg, base, p, g)
    s0 = _sigma0(cfg, base, p)
    tr = spectral.transition_report(fld, s0, cfg["numeric"]["tol0"])
    gs = cfg["numeric"]["g_values"] or [g]
    write_json(out / "transition.json", {**tr.as_dict(gs), "sigma0": s0.as_dict()})
    fld.to_binary(out / "field.bin")


def task_eig(cfg, out: Path):
    base, p, g = build_model(cfg)
    num = cfg["numeric"]
    op = finite.build(base, p, None, num["n"], g, num["boundary"])
    res = finite.eigenvalues(op, cap=num["dense_cap"])
    finite.write_cloud(out / "eigenvalues.csv", res.eigenvalues, out / "eigenvalues.json",
                       _clean({**op.describe(), **res.as_dict()}))


def task_dos(cfg, out: Path):
    base, p, g = build_model(cfg)
    num = cfg["numeric"]
    mu = dos.empirical_dos(base, p, None, num["n"], g, num["boundary"])
    finite.write_cloud(out / "atoms.csv", mu.atoms, out / "dos.json",
                       _clean({**mu.meta, "total": mu.total, "weight": 1.0 / len(mu.atoms)}))


def task_thouless(cfg, out: Path):
    base, p, g = build_model(cfg)
    num = cfg["numeric"]
    probes = [_cplx_val(e) for e in (num["probes"] or [num["E"]])]
    rep = dos.thouless_check(base, p, None, num["n"], g, probes, num["lyapunov"])
    write_json(out / "thouless.json", rep)


def task_green(cfg, out: Path):
    base, p, g = build_model(cfg)
    num = cfg["numeric"]
    E = _cplx_val(num["E"])
    gcfg = {**num["green"], "lyapunov": num["lyapunov"], "uh": num["uh"]}
    regime = num["green_regime"]
    if regime == "auto":
        est = cocycle.lyapunov(base, p, E, 0.0, num["lyapunov"])
        regime = "forward" if est.value < g else "hyperbolic"
    fn = resolvent.green_forward if regime == "forward" else resolvent.green_hyperbolic
    gw = fn(base, p, None, E, g, num["W"], gcfg)
    gw.to_csv(out / "green.csv")
    gw.write_report(out / "green.json")


def task_dirichlet(cfg, out: Path):
    base, p, _ = build_model(cfg)
    num = cfg["numeric"]
    rep = finite.dirichlet_g_invariance(base, p, None, num["n"], num["g1"], num["g2"],
                                        num["match_tol"])
    write_json(out / "dirichlet.json", rep)
    if not rep["passed"]:
        raise NumericalFailure("Dirichlet spectra differ beyond the matching tolerance",
                               {"module": "finite_spectra", **rep})


RUNNERS = {"lyapunov": task_lyapunov, "field": task_field, "spectrum": task_spectrum,
           "transition": task_transition, "eig": task_eig, "dos": task_dos,
           "thouless": task_thouless, "green": task_green, "dirichlet-check": task_dirichlet}


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}")
    # a manifest carries its resolved config
    if isinstance(cfg, dict) and "config" in cfg and "config_sha256" in cfg:
        cfg = cfg["config"]
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def run(cfg: dict, output: str | None = None) -> Path:
    """Resolve, execute and write artifacts.  Raises ConfigError before any
    file is created."""
    cfg = copy.deepcopy(cfg)
    if output is not None:
        cfg["output"] = output
    resolved = resolve(cfg)
    _threads(resolved["numeric"]["threads"])
    out = Path(resolved["output"])
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".hn-run-", dir=out.parent))
    t0 = time.perf_counter()
    failure = None
    try:
        try:
            RUNNERS[resolved["task"]](resolved, tmp)
        except NumericalFailure as exc:
            # numeric failures keep their diagnostics on disk
            write_json(tmp / "failure.json", exc.report)
            failure = exc
        files = sorted(f.name for f in tmp.iterdir())
        manifest = {"config": resolved, "config_sha256": config_hash(resolved),
                    "task": resolved["task"], "versions": _versions(),
                    "wall_time_s": time.perf_counter() - t0,
                    "outputs": {f: _sha(tmp / f) for f in files}}
        write_json(tmp / "manifest.json", manifest)
        if out.exists():
            shutil.rmtree(out)
        tmp.rename(out)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp)
    if failure is not None:
        raise failure
    return out


# ---------------------------------------------------------------- compare

def _load_manifest(d: Path) -> dict:
    try:
        return json.loads((d / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{d}: no readable manifest.json ({exc})")


def _json_diffs(a, b, path, tol, out):
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            if k not in a or k not in b:
                out.append({"path": f"{path}/{k}", "kind": "missing"})
            else:
                _json_diffs(a[k], b[k], f"{path}/{k}", tol, out)
    elif isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            out.append({"path": path, "kind": "length", "a": len(a), "b": len(b)})
        else:
            for i, (x, y) in enumerate(zip(a, b)):
                _json_diffs(x, y, f"{path}[{i}]", tol, out)
    elif (isinstance(a, (int, float)) and isinstance(b, (int, float))
          and not isinstance(a, bool) and not isinstance(b, bool)):
        if abs(a - b) > tol:
            out.append({"path": path, "kind": "value", "max_deviation": abs(a - b)})
    elif a != b:
        out.append({"path": path, "kind": "value", "a": a, "b": b})


def _csv(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def compare(dir_a, dir_b, tolerance: float = 0.0) -> dict:
    a, b = Path(dir_a), Path(dir_b)
    ma, mb = _load_manifest(a), _load_manifest(b)
    if ma["task"] != mb["task"]:
        raise ConfigError(f"artifact kinds differ: {ma['task']} vs {mb['task']}")
    task = ma["task"]
    diffs: list = []
    extra: dict = {}
    files = sorted((set(ma["outputs"]) | set(mb["outputs"])) - {"manifest.json"})
    for f in files:
        if f not in ma["outputs"] or f not in mb["outputs"]:
            diffs.append({"file": f, "kind": "missing"})
            continue
        if ma["outputs"][f] == mb["outputs"][f]:
            continue
        if f.endswith(".json"):
            sub: list = []
            _json_diffs(json.loads((a / f).read_text()), json.loads((b / f).read_text()), "",
                        tolerance, sub)
            diffs.extend({"file": f, **d} for d in sub)
        elif f == "field.bin":
            fa = cocycle.LyapunovField.from_binary(a / f)
            fb = cocycle.LyapunovField.from_binary(b / f)
            if fa.shape == fb.shape and np.allclose(fa.re, fb.re) and np.allclose(fa.im, fb.im):
                dev = float(np.max(np.abs(fa.L - fb.L)))
            else:
                # bilinear interpolation of the second field onto the first grid
                lo_r, hi_r = max(fa.re[0], fb.re[0]), min(fa.re[-1], fb.re[-1])
                lo_i, hi_i = max(fa.im[0], fb.im[0]), min(fa.im[-1], fb.im[-1])
                E = fa.energies()
                sel = ((E.real >= lo_r) & (E.real <= hi_r) & (E.imag >= lo_i)
                       & (E.imag <= hi_i))
                dev = float(np.max(np.abs(fa.L[sel] - fb.interpolate(E[sel]))))
                extra["field_interpolated_max_deviation"] = dev
            if dev > tolerance:
                diffs.append({"file": f, "kind": "field", "max_deviation": dev})
        elif f.endswith(".csv"):
            da, db = _csv(a / f), _csv(b / f)
            if da.shape != db.shape:
                diffs.append({"file": f, "kind": "shape", "a": list(da.shape),
                              "b": list(db.shape)})
            else:
                dev = np.max(np.abs(da - db), axis=0)
                if np.max(dev) > tolerance:
                    diffs.append({"file": f, "kind": "columns",
                                  "max_deviation": [float(x) for x in dev]})
    if task == "dos":
        mu = dos.EmpiricalMeasure.counting(finite.read_cloud(a / "atoms.csv"))
        nu = dos.EmpiricalMeasure.counting(finite.read_cloud(b / "atoms.csv"))
        extra["bounded_lipschitz"] = dos.bl_distance(mu, nu)
    return {"task": task, "a": str(a), "b": str(b), "tolerance": tolerance, "diffs": diffs,
            **extra}


# ---------------------------------------------------------------- entry point

def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hn-spectra", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run one experiment from a config (or manifest) file")
    r.add_argument("config")
    r.add_argument("--set", action="append", default=[], metavar="KEY.PATH=VALUE",
                   help="override a config key; VALUE is parsed as JSON when possible")
    r.add_argument("--output", help="override the output directory")
    c = sub.add_parser("compare", help="diff two artifact directories")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--tolerance", type=float, default=0.0)
    c.add_argument("--out", help="write the diff report here instead of stdout")
    sub.add_parser("schema", help="print the config JSON schema")
    args = ap.parse_args(argv)
    try:
        if args.cmd == "schema":
            print(json.dumps(SCHEMA, indent=2))
            return 0
        if args.cmd == "run":
            cfg = load_config(args.config)
            for s in args.set:
                _set_path(cfg, s)
            out = run(cfg, args.output)
            print(str(out))
            return 0
        rep = compare(args.a, args.b, args.tolerance)
        text = json.dumps(_clean(rep), indent=2, sort_keys=True)
        if args.out:
            Path(args.out).write_text(text + "\n")
        else:
            print(text)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(json.dumps(_clean({"error": str(exc), "report": exc.report}), indent=2),
              file=sys.stderr)
        return 3
    except HNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
