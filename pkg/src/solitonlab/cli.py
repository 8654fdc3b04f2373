"""Command-line entry point ``soliton-lab``.

Exit codes: 0 when every check passes, 1 when a certificate fails, 2 on usage
or precondition errors.  Reports are deterministic JSON; timestamps live only
in the run manifest.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .reports import EstimateReport, dumps

DEFAULTS = {
    "surface": "sphere", "n": 2, "k": 1, "res": None, "rtrunc": None, "v": None, "path": None, "eps": 0.1,
    "R": None, "delta": None, "m": 1, "lambda0": None, "a": 0.5, "x0": None, "s_max": None, "count": 16,
    "r0": None, "q": 0.0, "cutoffs": 20, "seed": 0, "r": None, "p": 2.0, "k_log": 2,
    "rmax": 10.0, "step": 0.01, "scale": 1.0, "tol_residual": None, "tol_identity": 1e-3, "tol_simons": 1e-8,
    "out": None, "ssy_a": None, "operator": "shrinker",
}


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _floats(text):
    return [float(t) for t in str(text).replace(",", " ").split()]


def effective_config(args) -> dict:
    """CLI flags override the config file, which overrides the defaults."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            filecfg = json.load(fh)
        unknown = set(filecfg) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(filecfg)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key in ("x0", "v"):
        if isinstance(cfg[key], str):
            cfg[key] = _floats(cfg[key])
    return cfg


def out_dir(cfg) -> Path:
    if cfg["out"] is not None:
        d = Path(cfg["out"])
    else:
        d = Path(os.environ.get("SOLITONLAB_OUT", "soliton-out"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def build_surface(cfg):
    from .surfaces import (Bowl, Cylinder, Hyperplane, Sphere, TiltedPlaneGraph, from_json, make_catalog)

    kind, n = cfg["surface"], int(cfg["n"])
    if kind != "file" and n < 2:
        raise UsageError("intrinsic dimension n must be at least 2")
    rt = cfg["rtrunc"]
    if rt is None and cfg["R"] is not None:
        rt = float(cfg["R"]) + 0.5
    if kind == "sphere":
        return make_catalog(Sphere(n), cfg["res"])
    if kind == "cylinder":
        return make_catalog(Cylinder(int(cfg["k"]), n), cfg["res"], rt)
    if kind == "plane":
        return make_catalog(Hyperplane(tuple(np.eye(n + 1)[n])), cfg["res"], rt)
    if kind == "tilted":
        v = cfg["v"] if cfg["v"] is not None else [0.3] + [0.0] * (n - 1) + [1.0]
        return make_catalog(TiltedPlaneGraph(tuple(float(t) for t in v)), cfg["res"], rt)
    if kind == "bowl":
        return make_catalog(Bowl(n), cfg["step"] if cfg["res"] is None else cfg["res"], cfg["rmax"])
    if kind == "shrinker":
        from .graph_shrinker import near_plane_shrinker

        if n != 2:
            raise UsageError("the solved graph shrinker is available for n = 2 only")
        return near_plane_shrinker(eps=float(cfg["eps"]))
    if kind == "file":
        if not cfg["path"]:
            raise UsageError("--path is required with --surface file")
        return from_json(Path(cfg["path"]).read_bytes())
    raise UsageError(f"unknown surface kind {kind!r}")


# ---------------------------------------------------------------------------
# run bookkeeping
# ---------------------------------------------------------------------------

class Run:
    def __init__(self, command, cfg):
        self.command = command
        self.cfg = cfg
        self.dir = out_dir(cfg)
        self.entries = []
        self._t = time.perf_counter()

    def write(self, name, text, passed=None):
        path = self.dir / name
        path.write_text(text)
        now = time.perf_counter()
        self.entries.append({"path": str(path), "seconds": round(now - self._t, 6), "pass": passed})
        self._t = now
        return path

    def report(self, name, rep, passed=None):
        if isinstance(rep, EstimateReport):
            passed = rep.passed
            doc = rep.to_dict()
        else:
            doc = rep
        self.write(name, dumps(doc) + "\n", passed)
        return passed

    def finish(self):
        flags = [e["pass"] for e in self.entries if e["pass"] is not None]
        ok = all(flags)
        manifest = {"schema": "manifest.v1", "tool_version": __version__, "command": self.command,
                    "config": self.cfg, "reports": self.entries, "pass": ok,
                    "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
        (self.dir / f"manifest-{self.command.replace(' ', '-')}.json").write_text(dumps(manifest) + "\n")
        print(f"{self.command}: {'PASS' if ok else 'FAIL'} ({len(self.entries)} files in {self.dir})")
        return 0 if ok else 1


def _need(cfg, *keys):
    for k in keys:
        if cfg[k] is None:
            raise UsageError(f"--{k.replace('_', '-')} is required")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_catalog(args):
    n = args.n if args.n is not None else 2
    if n < 2:
        raise UsageError("intrinsic dimension n must be at least 2")
    rows = [{"id": "sphere", "n": n, "radius": math.sqrt(2 * n), "kind": "shrinker"}]
    rows += [{"id": "cylinder", "n": n, "k": k, "radius": math.sqrt(2 * k), "kind": "shrinker"} for k in range(1, n)]
    rows += [{"id": "plane", "n": n, "offset": 0.0, "kind": "shrinker"},
             {"id": "tilted", "n": n, "kind": "shrinker"},
             {"id": "bowl", "n": n, "kind": "translator"}]
    if args.json:
        print(dumps(rows))
        return 0
    for r in rows:
        extra = f" k={r['k']}" if "k" in r else ""
        rad = f" radius {r['radius']:g}" if "radius" in r else ""
        print(f"{r['id']} n={r['n']}{extra}{rad} ({r['kind']})")
    if n > 6:
        print("note: estimate commands refuse n > 6")
    return 0


def cmd_verify(args, cfg):
    from .geometry import shrinker_residual
    from .stability import eigen_identity_residuals, simons_identity_residual

    if cfg["surface"] == "bowl":
        raise UsageError("the bowl is a translator: use `translator residual`")
    s = build_surface(cfg)
    run = Run("verify", cfg)
    tol_r = cfg["tol_residual"]
    if tol_r is None:
        tol_r = 1e-10 if s.source != "custom" else 1e-6
    res = shrinker_residual(s)["sup_norm"]
    run.report("verify-shrinker-residual.json", {"name": "shrinker_residual", "sup": res, "tol": tol_r,
                                                 "pass": res <= tol_r}, res <= tol_r)
    v = np.eye(s.n + 1)[0]
    ids = eigen_identity_residuals(s, v)
    ok = max(ids["rH"], ids["rV"]) <= cfg["tol_identity"]
    run.report("verify-eigen-identities.json", {"name": "eigen_identities", **ids, "v": v,
                                                "tol": cfg["tol_identity"], "pass": ok}, ok)
    sim = simons_identity_residual(s)
    ok = sim <= cfg["tol_simons"]
    run.report("verify-simons-identity.json", {"name": "simons_identity", "sup": sim, "tol": cfg["tol_simons"],
                                               "pass": ok}, ok)
    return run.finish()


def cmd_spectrum(args, cfg):
    from .stability import first_eigenvalue, is_delta_stable

    s = build_surface(cfg)
    run = Run("spectrum", cfg)
    spec = first_eigenvalue(s, cfg["R"], int(cfg["m"]))
    if cfg["delta"] is None:
        run.report("spectrum.json", spec.to_dict(seed=cfg["seed"]), None)
    else:
        d = is_delta_stable(s, cfg["R"], float(cfg["delta"]), spectrum=spec)
        run.report("spectrum.json", spec.to_dict(delta=float(cfg["delta"]), verdict=d["verdict"], margin=d["margin"],
                                                 seed=cfg["seed"]), d["verdict"])
    print("eigenvalues:", " ".join(f"{e:.6g}" for e in spec.eigenvalues))
    return run.finish()


def cmd_entropy(args, cfg):
    from .gaussian import entropy

    s = build_surface(cfg)
    run = Run("entropy", cfg)
    res = entropy(s, cfg["lambda0"])
    run.report("entropy.json", res.to_dict(), None)
    print(f"entropy {res.value:.9g} at x0={np.round(res.x0, 6).tolist()} t0={res.t0:.6g}")
    return run.finish()


def _x0(cfg, s, key="x0"):
    if cfg[key] is not None:
        x = np.asarray(cfg[key], dtype=float)
        if x.shape != (s.n + 1,):
            raise UsageError(f"--{key} needs {s.n + 1} coordinates")
        return x
    return s.x[int(np.argmin(s.radius))]


def cmd_estimates(args, cfg):
    from . import estimates as est
    from .gaussian import volume_growth_certificate

    which = args.which
    s = build_surface(cfg)
    run = Run(f"estimates {which}", cfg)
    lam = cfg["lambda0"]
    if which in ("prop31", "bootstrap", "lemma43", "logcutoff", "volgrowth"):
        _need(cfg, "lambda0")
    if which == "prop31":
        _need(cfg, "R")
        run.report("prop31.json", est.integral_curvature_decay(s, float(cfg["R"]), float(lam), float(cfg["a"])))
    elif which == "meanvalue":
        tr = est.mean_value_monotonicity(s, _x0(cfg, s), cfg["R"], cfg["s_max"], int(cfg["count"]))
        run.write("meanvalue-trace.csv", tr.csv())
        run.report("meanvalue.json", {"name": "mean_value_monotonicity", **tr.to_dict(), "pass": tr.monotone},
                   tr.monotone)
    elif which == "bootstrap":
        _need(cfg, "R")
        run.report("bootstrap.json", est.bootstrap_pointwise_bound(s, _x0(cfg, s), float(cfg["R"]), float(lam)))
    elif which == "choischoen":
        x0 = _x0(cfg, s)
        r0 = est.theta(x0) if cfg["r0"] is None else float(cfg["r0"])
        run.report("choischoen.json", est.choi_schoen(s, x0, r0))
    elif which == "ssy":
        _need(cfg, "R")
        R = float(cfg["R"])
        cuts = est.random_annulus_cutoffs(s, R, int(cfg["cutoffs"]), int(cfg["seed"]))
        for i, c in enumerate(cuts):
            run.report(f"ssy-{i:02d}.json", est.ssy_inequality(s, c, float(cfg["q"]), cfg["ssy_a"], R,
                                                                operator=cfg["operator"]))
    elif which == "lemma43":
        x0 = _x0(cfg, s)
        r = 0.5 * est.theta(x0) if cfg["r"] is None else float(cfg["r"])
        run.report("lemma43.json", est.scale_invariant_energy(s, x0, r, float(cfg["p"]), float(lam)))
    elif which == "logcutoff":
        x0 = _x0(cfg, s)
        r0 = 0.25 * est.theta(x0) if cfg["r0"] is None else float(cfg["r0"])
        run.report("logcutoff.json", est.log_cutoff_energy(s, x0, r0, int(cfg["k_log"]), float(lam)))
    elif which == "volgrowth":
        p = np.zeros(s.n + 1) if cfg["x0"] is None else _x0(cfg, s)
        _need(cfg, "r")
        run.report("volgrowth.json", volume_growth_certificate(s, p, float(cfg["r"]), float(lam)))
    for e in run.entries:
        if e["path"].endswith(".json"):
            doc = json.loads(Path(e["path"]).read_text())
            if "lhs" in doc:
                print(f"{doc['name']}: lhs={doc['lhs']} rhs={doc['rhs']} pass={doc['pass']} "
                      f"hypothesis={doc['hypothesis_status']}")
    return run.finish()


def cmd_translator(args, cfg):
    from . import translators as tr
    from .geometry import compute_geometry
    from .stability import TOL_DISC

    which = args.which
    cfg["surface"] = "bowl"
    n = int(cfg["n"])
    if n < 2:
        raise UsageError("intrinsic dimension n must be at least 2")
    prof, s = tr.bowl_solve(n, float(cfg["rmax"]), float(cfg["step"]))
    run = Run(f"translator {which}", cfg)
    if which == "bowl":
        run.write("bowl-profile.csv", prof.csv(compute_geometry(s).normA2))
        rep = tr.translator_curvature_report(s, cfg["lambda0"])
        run.report("bowl-report.json", rep)
        print(f"sup |A|^2 = {rep.extra['sup_normA2']:.9g} (tip: {rep.extra['attained_at_tip']})")
    elif which == "residual":
        r = tr.translator_residual(s)
        tol = 1e-6 if cfg["tol_residual"] is None else float(cfg["tol_residual"])
        run.report("translator-residual.json", {"name": "translator_residual", "sup": r["sup"], "tol": tol,
                                                "pass": r["sup"] <= tol}, r["sup"] <= tol)
    elif which == "simons":
        r = tr.translator_simons_residual(s, (1.0, min(5.0, 0.5 * float(cfg["rmax"]))))
        out = {k: v for k, v in r.items() if k != "residual"}
        run.report("translator-simons.json", {"name": "translator_simons", **out}, None)
    elif which == "spectrum":
        R = 6.0 if cfg["R"] is None else float(cfg["R"])
        spec = tr.translator_first_eigenvalue(s, R, int(cfg["m"]), float(cfg["scale"]))
        ok = spec.first >= -TOL_DISC
        run.report("translator-spectrum.json", spec.to_dict(delta=0.0, verdict=ok, margin=spec.first,
                                                            operator="translator"), ok)
        print("eigenvalues:", " ".join(f"{e:.6g}" for e in spec.eigenvalues))
    elif which == "report":
        run.report("translator-report.json", tr.translator_curvature_report(s, cfg["lambda0"]))
    return run.finish()


def cmd_convert(args):
    src = Path(args.input)
    text = src.read_text()
    if src.suffix == ".csv":
        rows = list(csv.DictReader(io.StringIO(text)))
        out = dumps(rows) + "\n"
    else:
        doc = json.loads(text)
        if isinstance(doc, dict) and doc.get("version") == "1" and "samples" in doc:
            from .geometry import fields_csv
            from .surfaces import from_json

            out = fields_csv(from_json(text))
        else:
            docs = doc if isinstance(doc, list) else [doc]
            out = _summary_csv(docs)
    if args.output:
        Path(args.output).write_text(out)
    else:
        sys.stdout.write(out)
    return 0


def _summary_csv(docs):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "lhs", "rhs", "pass", "hypothesis_status", "params"])
    for d in docs:
        w.writerow([d.get("name", d.get("schema", "")), d.get("lhs", d.get("value", "")), d.get("rhs", ""),
                    d.get("pass", ""), d.get("hypothesis_status", ""),
                    json.dumps(d.get("params", {}), sort_keys=True)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _surface_args(p):
    g = p.add_argument_group("surface")
    g.add_argument("--surface", choices=["sphere", "cylinder", "plane", "tilted", "bowl", "shrinker", "file"])
    g.add_argument("--n", type=int)
    g.add_argument("--k", type=int, help="spherical factor dimension of a cylinder")
    g.add_argument("--res", type=float, help="catalog resolution (see make_catalog)")
    g.add_argument("--rtrunc", type=float, help="truncation radius for noncompact surfaces")
    g.add_argument("--v", help="graph direction for the tilted plane, comma separated")
    g.add_argument("--path", help="surface.v1 JSON file")
    g.add_argument("--eps", type=float, help="boundary amplitude of the solved graph shrinker")


def _common(p):
    p.add_argument("--config", help="JSON file of option defaults")
    p.add_argument("--out", help="output directory (default $SOLITONLAB_OUT or ./soliton-out)")
    p.add_argument("--seed", type=int)


def build_parser():
    ap = argparse.ArgumentParser(prog="soliton-lab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"soliton-lab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("catalog", help="list catalog surfaces")
    p.add_argument("--json", action="store_true")
    p.add_argument("--n", type=int)

    p = sub.add_parser("verify", help="shrinker residual and identity residuals")
    _surface_args(p)
    _common(p)
    p.add_argument("--tol-residual", dest="tol_residual", type=float)
    p.add_argument("--tol-identity", dest="tol_identity", type=float)
    p.add_argument("--tol-simons", dest="tol_simons", type=float)

    p = sub.add_parser("spectrum", help="Dirichlet eigenvalues of -L and the delta-stability verdict")
    _surface_args(p)
    _common(p)
    p.add_argument("--R", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--m", type=int)

    p = sub.add_parser("entropy", help="entropy by grid search and Nelder-Mead")
    _surface_args(p)
    _common(p)
    p.add_argument("--lambda0", type=float, help="entropy bound for tail estimates")

    p = sub.add_parser("estimates", help="estimate certificates")
    p.add_argument("which", choices=["prop31", "meanvalue", "bootstrap", "choischoen", "ssy", "lemma43",
                                     "logcutoff", "volgrowth"])
    _surface_args(p)
    _common(p)
    p.add_argument("--R", type=float)
    p.add_argument("--lambda0", type=float)
    p.add_argument("--a", type=float, help="annulus width for prop31")
    p.add_argument("--x0", help="centre point, comma separated (default: sample nearest the origin)")
    p.add_argument("--s-max", dest="s_max", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--r0", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--ssy-a", dest="ssy_a", type=float)
    p.add_argument("--operator", choices=["shrinker", "translator"])
    p.add_argument("--cutoffs", type=int)
    p.add_argument("--r", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--k-log", dest="k_log", type=int, help="logarithmic cutoff depth k")

    p = sub.add_parser("translator", help="bowl soliton tools")
    p.add_argument("which", choices=["bowl", "residual", "spectrum", "simons", "report"])
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--rmax", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--R", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--scale", type=float, help="potential inflation factor")
    p.add_argument("--lambda0", type=float)
    p.add_argument("--tol-residual", dest="tol_residual", type=float)

    p = sub.add_parser("convert", help="JSON reports to summary CSV, CSV to JSON, surface JSON to fields CSV")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "catalog":
            return cmd_catalog(args)
        if args.command == "convert":
            return cmd_convert(args)
        cfg = effective_config(args)
        handler = {"verify": cmd_verify, "spectrum": cmd_spectrum, "entropy": cmd_entropy,
                   "estimates": cmd_estimates, "translator": cmd_translator}[args.command]
        return handler(args, cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
