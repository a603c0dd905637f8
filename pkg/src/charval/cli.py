"""Command-line front end: ``charval charvals|count|magnetic <config.json>``.

Every command validates its JSON config against a schema (unknown keys are
rejected), fills in defaults, runs, and writes CSV/JSON files that embed the
resolved config.  Exit codes: 0 ok, 1 numerical failure, 2 config error.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys

import jsonschema
import numpy as np

from . import __version__
from .contours import SectorRegion, region_from_spec
from .core import CharvalError, DomainError, ParameterError
from .counting import verify_sector_asymptotics, verify_small_domain_theorem
from .engine import localize
from .magnetic import (
    MagneticModel,
    asymptotic_law,
    check_generic_condition,
    count_resonances,
    find_resonances,
    toeplitz_counting,
)
from .models import model_from_spec
from .output import dumps, write_csv, write_json

OUT_ENV = "CHARVAL_OUT"
DEFAULT_OUT = "charval_out"

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer"}
_seq = {"oneOf": [
    {"type": "array", "items": _num, "minItems": 1},
    {"type": "object", "additionalProperties": False, "required": ["base", "count"],
     "properties": {"base": _pos, "count": {"type": "integer", "minimum": 1}}},
]}
_grid = {"oneOf": [
    {"type": "array", "items": _pos, "minItems": 1},
    {"type": "object", "additionalProperties": False, "required": ["lo", "hi", "num"],
     "properties": {"lo": _pos, "hi": _pos, "num": {"type": "integer", "minimum": 1}}},
]}


def _obj(required, **props):
    return {"type": "object", "additionalProperties": False, "required": list(required),
            "properties": props}


MODEL_SCHEMA = {"oneOf": [
    _obj(["kind", "dim", "eig_law"], kind={"const": "synthetic"}, dim={"type": "integer", "minimum": 1},
         eig_law={"type": "object"}, perturbation_scale={"type": "number", "minimum": 0},
         order={"enum": [1, 2]}, seed=_int, signs={"enum": ["positive", "negative", "alternating"]},
         kernel_dim={"type": "integer", "minimum": 0}, decay=_num, hermitian={"type": "boolean"},
         invertibility_floor=_pos, max_retries={"type": "integer", "minimum": 1}),
    _obj(["kind", "eigenvalues"], kind={"const": "constant"},
         eigenvalues={"type": "array", "items": _num, "minItems": 1}),
    _obj(["kind", "eigs"], kind={"const": "counterexample-i"}, eigs=_seq),
    _obj(["kind", "alphas"], kind={"const": "counterexample-ii"}, alphas=_seq),
    _obj(["kind", "n_max"], kind={"const": "counterexample-iii"}, n_max={"type": "integer", "minimum": 1},
         bisection_tol=_pos, truncation={"type": "integer", "minimum": 1}),
]}

REGION_SCHEMA = {"oneOf": [
    _obj(["kind", "x0", "x1", "y0", "y1"], kind={"const": "rectangle"}, x0=_num, x1=_num, y0=_num, y1=_num),
    _obj(["kind", "theta", "a", "b"], kind={"const": "sector"}, theta=_pos, a=_pos, b=_pos),
    _obj(["kind", "r_in", "r_out"], kind={"const": "annulus"}, r_in=_pos, r_out=_pos, phi0=_num, span=_pos),
]}

_common = dict(seed=_int, threads={"type": "integer", "minimum": 1}, out={"type": "string"})

CHARVALS_SCHEMA = _obj(["model", "region"], model=MODEL_SCHEMA, region=REGION_SCHEMA,
                       resolution=_pos, relative={"type": "boolean"}, **_common)

COUNT_SCHEMA = {"oneOf": [
    _obj(["mode", "model", "theta", "r_grid"], mode={"const": "sector"}, model=MODEL_SCHEMA, theta=_pos,
         r_grid=_grid, r_top=_pos, side={"enum": [1, -1]}, resolution=_pos,
         subsequence_tol=_pos, **_common),
    _obj(["mode", "model", "region", "s_grid"], mode={"const": "small-domain"}, model=MODEL_SCHEMA,
         region=REGION_SCHEMA, s_grid=_grid, delta=_pos, budget_c=_pos, **_common),
]}

POTENTIAL_SCHEMA = _obj(["class"], **{"class": {"enum": ["A1-power", "A2-gaussian", "A3-compact"]}},
                        amplitude={"type": "number", "minimum": 0}, N=_pos, m_perp=_pos, beta=_pos,
                        mu=_pos, radius=_pos)

MAGNETIC_SCHEMA = _obj(
    ["model", "r_lo", "r_hi"],
    model=_obj(["b", "q", "sign", "potential"], b=_pos, q={"type": "integer", "minimum": 0},
               sign={"enum": [1, -1]}, potential=POTENTIAL_SCHEMA, j_max={"type": "integer", "minimum": 0},
               ell_range={"oneOf": [{"type": "array", "items": _int, "minItems": 1},
                                    _obj(["max"], min=_int, max=_int)]},
               n_x3={"type": "integer", "minimum": 2}, L=_pos, m_perp=_pos),
    r_lo=_pos, r_hi=_pos, r0=_pos, count_grid=_grid, resolution=_pos,
    full_annulus={"type": "boolean"}, check_generic={"type": "boolean"}, **_common)

SCHEMAS = {"charvals": CHARVALS_SCHEMA, "count": COUNT_SCHEMA, "magnetic": MAGNETIC_SCHEMA}


class ConfigError(CharvalError):
    pass


def _grid_values(g):
    if isinstance(g, dict):
        if g["hi"] <= g["lo"] and g["num"] > 1:
            raise ConfigError("grid needs lo < hi")
        return [float(x) for x in np.geomspace(g["lo"], g["hi"], g["num"])]
    return [float(x) for x in g]


def resolve(command, config, args):
    """Validate and fill defaults; CLI flags override config values."""
    try:
        jsonschema.validate(config, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"schema error at '{path}': {exc.message}") from None
    cfg = copy.deepcopy(config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    cfg.setdefault("threads", 1)
    if args.threads is not None:
        cfg["threads"] = args.threads
    model = cfg["model"]
    if command in ("charvals", "count") and model["kind"] == "synthetic":
        if args.seed is not None or "seed" not in model:
            model["seed"] = cfg["seed"]
    if command == "charvals":
        cfg.setdefault("resolution", 1e-8)
        cfg.setdefault("relative", True)
    elif command == "count":
        if cfg["mode"] == "sector":
            cfg.setdefault("r_top", 1.0)
            cfg.setdefault("side", 1)
            cfg.setdefault("resolution", 1e-7)
            cfg.setdefault("subsequence_tol", 0.15)
            if min(_grid_values(cfg["r_grid"])) >= cfg["r_top"]:
                raise ConfigError("r_grid must lie below r_top")
        else:
            cfg.setdefault("delta", 0.1)
            cfg.setdefault("budget_c", 1.0)
    else:
        m = cfg["model"]
        m.setdefault("j_max", m["q"] + 8)
        m.setdefault("ell_range", {"min": -m["q"], "max": 25})
        m.setdefault("n_x3", 80)
        cfg.setdefault("r0", cfg["r_hi"])
        cfg.setdefault("resolution", 1e-6)
        cfg.setdefault("full_annulus", False)
        cfg.setdefault("check_generic", False)
        cfg.setdefault("count_grid", {"lo": cfg["r_lo"] * 2, "hi": cfg["r0"] / 2, "num": 21})
        if args.full_annulus:
            cfg["full_annulus"] = True
        if args.check_generic:
            cfg["check_generic"] = True
        if not cfg["r_lo"] < cfg["r_hi"]:
            raise ConfigError("need r_lo < r_hi")
        if cfg["r0"] > cfg["r_hi"]:
            raise ConfigError("r0 must not exceed r_hi")
        radius = min(math.sqrt(2 * m["b"]), m["potential"].get("N", 2.0))
        if cfg["r_hi"] >= radius:
            raise ConfigError(
                f"r_hi = {cfg['r_hi']} must be below min(sqrt(2b), N) = {radius:.6g}, the radius of "
                "the disk on which the Birman-Schwinger family extends analytically")
    cfg.pop("out", None)
    cfg["version"] = __version__
    return cfg


# ---------------------------------------------------------------------------
# commands


def cmd_charvals(cfg, out):
    fam, describe = model_from_spec(cfg["model"])
    region = region_from_spec(cfg["region"])
    vals = localize(fam.F, region, cfg["resolution"], relative=cfg["relative"], threads=cfg["threads"])
    rows = [[v.location.real, v.location.imag, v.multiplicity, v.box_radius, v.residual] for v in vals]
    write_csv(os.path.join(out, "charvals.csv"), ["re", "im", "multiplicity", "box_radius", "residual"],
              rows, cfg)
    write_json(os.path.join(out, "charvals.json"),
               {"config": cfg, "model": describe, "charvals": [v.as_dict() for v in vals]})
    return {"command": "charvals", "found": len(vals),
            "total_multiplicity": sum(v.multiplicity for v in vals)}


def cmd_count(cfg, out):
    fam, describe = model_from_spec(cfg["model"])
    profile = fam.spectral_profile()
    if cfg["mode"] == "sector":
        r_grid = _grid_values(cfg["r_grid"])
        rep = verify_sector_asymptotics(fam.F, profile, cfg["theta"], r_grid, r_top=cfg["r_top"],
                                        side=cfg["side"], resolution=cfg["resolution"],
                                        threads=cfg["threads"], subsequence_tol=cfg["subsequence_tol"])
        law = rep.fitted_law
        pred = [float(law(r)) if law else math.nan for r in rep.grid]
        write_csv(os.path.join(out, "plot.csv"), ["r", "N", "n", "predicted"],
                  zip(rep.grid, rep.charval_counts, rep.eig_counts, pred), cfg)
    else:
        region = region_from_spec(cfg["region"])
        if isinstance(region, SectorRegion):
            raise ConfigError("small-domain mode needs a rectangle or annulus region")
        rep = verify_small_domain_theorem(fam.F, region, _grid_values(cfg["s_grid"]), profile,
                                          delta=cfg["delta"], budget_c=cfg["budget_c"])
        write_csv(os.path.join(out, "plot.csv"), ["s", "N", "n", "budget"],
                  zip(rep.grid, rep.charval_counts, rep.eig_counts, rep.extra["budget"]), cfg)
    rep.to_csv(os.path.join(out, "counting.csv"), cfg)
    rep.to_json(os.path.join(out, "counting.json"), cfg)
    summary = {"command": "count", "mode": cfg["mode"], "points": len(rep.grid)}
    if rep.fitted_law is not None:
        summary["fitted_law"] = rep.fitted_law.to_dict()
    return summary


def cmd_magnetic(cfg, out):
    model = MagneticModel.from_dict(cfg["model"])
    res = find_resonances(model, cfg["r_lo"], cfg["r_hi"], full_annulus=cfg["full_annulus"],
                          resolution=cfg["resolution"], threads=cfg["threads"])
    write_csv(os.path.join(out, "resonances.csv"), list(res.columns), res.rows(), cfg)
    grid = _grid_values(cfg["count_grid"])
    Nres = count_resonances(res, grid, cfg["r0"])
    rep = toeplitz_counting(model, grid)
    law, curve = asymptotic_law(model)
    pred = [float(curve(r)) for r in grid]
    write_csv(os.path.join(out, "counting.csv"), ["r", "resonances", "n_plus", "predicted"],
              zip(grid, Nres, rep.eig_counts, pred), cfg)
    write_csv(os.path.join(out, "plot.csv"), ["r", "resonances", "n_plus", "predicted", "fitted"],
              zip(grid, Nres, rep.eig_counts, pred,
                  [float(rep.fitted_law(r)) if rep.fitted_law else math.nan for r in grid]), cfg)
    doc = {"config": cfg, "predicted": law.to_dict(),
           "fitted": rep.fitted_law.to_dict() if rep.fitted_law else None,
           "toeplitz_eigenvalues": rep.meta["mu"], "warnings": rep.meta["warnings"],
           "notes": res.notes, "pairing_defect": res.pairing_defect() if res.resonances else 0.0}
    summary = {"command": "magnetic", "resonances": len(res), "warnings": rep.meta["warnings"]}
    if cfg["check_generic"]:
        g = check_generic_condition(model)
        doc["generic_condition"] = g
        summary["generic_condition"] = g
    write_json(os.path.join(out, "law.json"), doc)
    return summary


COMMANDS = {"charvals": cmd_charvals, "count": cmd_count, "magnetic": cmd_magnetic}


def build_parser():
    p = argparse.ArgumentParser(prog="charval", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", help="path to a JSON config file")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--full-annulus", action="store_true", help="magnetic: search the whole annulus")
    p.add_argument("--check-generic", action="store_true",
                   help="magnetic: report the smallest singular value of I - A'(0) P0")
    return p


def _fail(code, kind, msg):
    sys.stderr.write(dumps({"error": kind, "message": msg, "exit_code": code}))
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(2, "config", f"cannot read config: {exc}")
    try:
        cfg = resolve(args.command, raw, args)
        out = args.out or raw.get("out") or os.environ.get(OUT_ENV) or DEFAULT_OUT
        os.makedirs(out, exist_ok=True)
        summary = COMMANDS[args.command](cfg, out)
    except (ConfigError, ParameterError, DomainError) as exc:
        return _fail(2, "config", str(exc))
    except (KeyError, TypeError) as exc:
        return _fail(2, "config", f"invalid config: {exc!r}")
    except CharvalError as exc:
        return _fail(1, "numerical", f"{type(exc).__name__}: {exc}")
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail(1, "numerical", f"{type(exc).__name__}: {exc}")
    except Exception as exc:  # noqa: BLE001
        return _fail(1, "internal", f"{type(exc).__name__}: {exc}")
    summary["out"] = out
    sys.stdout.write(dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
