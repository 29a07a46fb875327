"""Configuration-driven experiment runner.

JSON configs are the primary interface; flags only select the config and
override the output directory.  Reruns with identical configs produce
byte-identical result files (reductions are seed-ordered, independent of
the worker count), so experiment outputs are auditable.

Subcommands: validate-kernel, msd, diffusion, sweep-g, localization,
appendix-checks, run.
"""

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from . import diffusion as diff
from . import kernels as ker
from . import resolvent_limits
from ._parallel import default_workers
from .errors import ConfigInvalid, QBrownianError
from .evolution import GeneratorParams
from .lattice import LatticeBox

_SCHEMA = {
    "pipeline": list,
    "workers": int,
    "model": {"d": int, "L": int, "boundary": str, "u": (int, float),
              "lambda": (int, float), "g": (int, float), "g_list": list},
    "kernel": {"preset": str, "path": str, "radius": int, "n_q": int},
    "disorder": {"dist": str, "seeds": list},
    "evolution": {"t_max": (int, float), "n_times": int, "tol": (int, float),
                  "boundary_tol": (int, float)},
    "analysis": {"methods": list, "eta": (int, float), "eta_list": list,
                 "fit_window": (list, str), "fiber_L": int,
                 "fiber_seeds": list, "loc_t_max": (int, float),
                 "loc_L": int, "slope": bool},
    "output": {"dir": str, "formats": list},
}


def _check_section(doc, schema, path=""):
    for key, val in doc.items():
        where = f"{path}{key}"
        if key not in schema:
            raise ConfigInvalid(f"unknown config field: {where!r}")
        rule = schema[key]
        if isinstance(rule, dict):
            if not isinstance(val, dict):
                raise ConfigInvalid(f"field {where!r} must be an object")
            _check_section(val, rule, where + ".")
        else:
            if isinstance(val, bool):
                ok = rule is bool or (isinstance(rule, tuple) and bool in rule)
            else:
                ok = isinstance(val, rule)
            if not ok:
                raise ConfigInvalid(
                    f"field {where!r} has wrong type {type(val).__name__}")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigInvalid("config root must be an object")
    _check_section(doc, _SCHEMA)
    for section in ("model", "disorder"):
        if section not in doc:
            raise ConfigInvalid(f"missing config section {section!r}")
    return doc


def _out_dir(cfg, override=None) -> str:
    path = (override or os.environ.get("QBROWNIAN_OUT")
            or cfg.get("output", {}).get("dir", "out"))
    os.makedirs(path, exist_ok=True)
    return path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _dump_json(doc, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")


def _resolve_kernel(cfg):
    kcfg = cfg.get("kernel", {})
    d = cfg["model"].get("d", 1)
    if kcfg.get("path"):
        spec = ker.load_spec(kcfg["path"])
    else:
        spec = ker.preset_spec(kcfg.get("preset", "cosine"), d)
    radius = kcfg.get("radius", ker.DEFAULT_RADIUS)
    kernel = ker.build_kernel(spec, radius)
    n_q = kcfg.get("n_q", spec.grid_n)
    ker.spectral_gap(kernel, n_q)
    ker.jump_rate_bound(kernel, n_q)
    g = cfg["model"].get("g", 1.0)
    kernel, g_eff = ker.normalize(kernel, g if g > 0 else 1.0)
    if g > 0:
        cfg["model"]["g"] = g_eff
        scale = g_eff / g
        if cfg["model"].get("g_list"):
            cfg["model"]["g_list"] = [gv * scale for gv in cfg["model"]["g_list"]]
    return kernel


def _params(cfg) -> GeneratorParams:
    m = cfg["model"]
    return GeneratorParams(u=m.get("u", 1.0), lam=m.get("lambda", 0.0),
                           g=m.get("g", 0.0))


def _box(cfg) -> LatticeBox:
    m = cfg["model"]
    return LatticeBox(m.get("d", 1), m["L"], m.get("boundary", "truncated"))


def _manifest(cfg, kernel, outdir) -> None:
    doc = {"config": cfg, "version": __version__,
           "kernel_certificate": {k: v for k, v in kernel.certified.items()},
           "kernel_truncation": {"radius": kernel.radius,
                                 "discarded_mass": kernel.discarded_mass,
                                 "retained_mass": kernel.retained_mass}}
    _dump_json(doc, os.path.join(outdir, "manifest.json"))


def _run_msd(cfg, kernel, outdir) -> dict:
    params = _params(cfg)
    box = _box(cfg)
    ecfg = cfg.get("evolution", {})
    t_grid = np.linspace(0.0, ecfg.get("t_max", 10.0), ecfg.get("n_times", 21))
    seeds = cfg["disorder"]["seeds"]
    msd = diff.msd_ensemble(params, kernel, box, cfg["disorder"].get("dist", "uniform"),
                            seeds, t_grid, tol=ecfg.get("tol", 1e-6),
                            boundary_tol=ecfg.get("boundary_tol", 1e-8),
                            workers=cfg.get("workers", default_workers()),
                            min_seeds=min(8, len(seeds)))
    d = msd.d
    with open(os.path.join(outdir, "msd.csv"), "w") as fh:
        cols = ["t"]
        for i in range(d):
            for j in range(d):
                cols += [f"M_{i+1}{j+1}", f"err_{i+1}{j+1}"]
        fh.write(",".join(cols) + "\n")
        for k, t in enumerate(msd.times):
            row = [repr(float(t))]
            for i in range(d):
                for j in range(d):
                    row += [repr(float(msd.mean[k, i, j])),
                            repr(float(msd.stderr[k, i, j]))]
            fh.write(",".join(row) + "\n")
    return {"msd": msd}


def _run_diffusion(cfg, kernel, outdir, msd=None) -> dict:
    params = _params(cfg)
    acfg = cfg.get("analysis", {})
    methods = acfg.get("methods", ["fit", "abel", "resolvent"])
    c = kernel.certified.get("gap", 0.0)
    results = []
    ok = True
    if {"fit", "abel"} & set(methods):
        if msd is None:
            msd = _run_msd(cfg, kernel, outdir)["msd"]
        T = float(msd.times[-1])
        if "fit" in methods:
            window = acfg.get("fit_window", "auto")
            if window == "auto":
                window = diff.fit_window(c, params.g, T)
            est = diff.fit_diffusion(msd, window)
            results.append(est.to_dict())
        if "abel" in methods:
            eta = acfg.get("eta", max(5.0 / T, 1e-3))
            est = diff.abel_diffusion(msd, eta)
            results.append(est.to_dict())
    if "resolvent" in methods:
        est, extras = _resolvent_point(cfg, kernel)
        doc = est.to_dict()
        doc["extras"].update(extras)
        ok = ok and extras["bounds_ok"]
        results.append(doc)
    _dump_json({"estimates": results, "gap": c}, os.path.join(outdir, "diffusion.json"))
    return {"results": results, "ok": ok}


def _resolvent_point(cfg, kernel):
    from . import disorder as dis
    from .fiber import build_fiber_space, operator_norms, resolvent_diffusion
    params = _params(cfg)
    acfg = cfg.get("analysis", {})
    c = kernel.certified["gap"]
    L = acfg.get("fiber_L", max(12, 2 * kernel.radius))
    box = LatticeBox(cfg["model"].get("d", 1), L, "periodic")
    seeds = acfg.get("fiber_seeds", cfg["disorder"]["seeds"][:4])
    etas = acfg.get("eta_list") or [c * params.g * 2.0 ** (-k) for k in range(8)]
    vals, errs = [], []
    norm_g = []
    for s in sorted(seeds):
        fld = dis.sample(box, cfg["disorder"].get("dist", "uniform"), s)
        fs = build_fiber_space(box, params, kernel, fld)
        est = resolvent_diffusion(fs, etas)
        vals.append(est.scalar)
        errs.append(est.scalar_err)
        norm_g.append(operator_norms(fs)["G0"])
    vals = np.asarray(vals)
    mean = float(vals.mean())
    spread = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    err = float(np.sqrt(spread**2 + np.mean(errs)**2))
    u, g = params.u, params.g
    lower = 4.0 * g * u * u * c / float(np.mean(norm_g)) ** 2
    upper = 2.0 * u * u / (c * g)
    tol = 3 * err + 1e-9
    extras = {"lower_bound": lower, "upper_bound": upper,
              "bounds_ok": bool(lower - tol <= mean <= upper + tol),
              "config_spread": spread}
    d = cfg["model"].get("d", 1)
    from .results import DiffusionEstimate
    est = DiffusionEstimate(d_matrix=np.eye(d) * mean, stderr=np.eye(d) * err,
                            method="resolvent",
                            params={"u": u, "lambda": params.lam, "g": g,
                                    "fiber_L": L, "n_configs": len(seeds)})
    return est, extras


def _run_sweep(cfg, kernel, outdir) -> dict:
    params = _params(cfg)
    acfg = cfg.get("analysis", {})
    g_list = cfg["model"].get("g_list")
    if not g_list:
        raise ConfigInvalid("sweep-g needs model.g_list")
    c = kernel.certified["gap"]
    L = acfg.get("fiber_L", max(12, 2 * kernel.radius))
    box = LatticeBox(cfg["model"].get("d", 1), L, "periodic")
    seeds = acfg.get("fiber_seeds", cfg["disorder"]["seeds"][:4])
    ell2 = None
    if acfg.get("slope"):
        loc_box = LatticeBox(cfg["model"].get("d", 1),
                             acfg.get("loc_L", L), "periodic")
        ell2 = diff.localization_length(
            params.u, params.lam, loc_box, cfg["disorder"].get("dist", "uniform"),
            cfg["disorder"]["seeds"], acfg.get("loc_t_max", 200.0),
            workers=cfg.get("workers", default_workers()))
    slope = diff.small_g_slope(params.u, params.lam, kernel, g_list,
                               cfg["disorder"].get("dist", "uniform"), seeds,
                               box, ell2=ell2,
                               workers=cfg.get("workers", default_workers()))
    with open(os.path.join(outdir, "sweep.csv"), "w") as fh:
        fh.write("g,D,err\n")
        for g, dv, de in zip(slope.g_values, slope.d_values, slope.d_errors):
            fh.write(f"{float(g)!r},{float(dv)!r},{float(de)!r}\n")
    doc = {"delta": slope.delta, "stderr": slope.stderr,
           "curvature_fraction": slope.curvature_fraction,
           "lower_bound": slope.lower_bound,
           "upper_bound": (None if np.isinf(slope.upper_bound)
                           else slope.upper_bound),
           "checks": slope.checks}
    if ell2 is not None:
        doc["ell2"] = asdict(ell2)
    _dump_json(doc, os.path.join(outdir, "sweep.json"))
    ok = all(v for k, v in slope.checks.items()
             if k.endswith("_ok") or k == "positive")
    return {"slope": slope, "ok": ok}


def _run_localization(cfg, outdir) -> dict:
    params = _params(cfg)
    acfg = cfg.get("analysis", {})
    box = LatticeBox(cfg["model"].get("d", 1),
                     acfg.get("loc_L", cfg["model"]["L"]),
                     cfg["model"].get("boundary", "periodic"))
    est = diff.localization_length(
        params.u, params.lam, box, cfg["disorder"].get("dist", "uniform"),
        cfg["disorder"]["seeds"], acfg.get("loc_t_max", 200.0),
        workers=cfg.get("workers", default_workers()))
    _dump_json(asdict(est), os.path.join(outdir, "localization.json"))
    return {"localization": est}


# ---------------------------------------------------------------------------
# subcommand entry points


def cmd_validate_kernel(args) -> int:
    if args.spec:
        spec = ker.load_spec(args.spec)
    elif args.preset:
        spec = ker.preset_spec(args.preset, args.d)
    else:
        print("validate-kernel needs a spec path or --preset", file=sys.stderr)
        return 2
    kernel = ker.build_kernel(spec, args.radius, strict=False,
                              lossy_tol=args.lossy_tol)
    report = ker.validate(kernel, args.n_q or None)
    print(report.summary())
    if args.json:
        _dump_json(report.to_dict(), args.json)
    return 0 if report.passed else 1


def cmd_appendix_checks(args) -> int:
    rep = resolvent_limits.run_randomized_suite(
        n_problems=args.n, dim=args.dim, seed=args.seed)
    print(json.dumps(rep, indent=1, sort_keys=True))
    if args.json:
        _dump_json(rep, args.json)
    return 0 if rep["passed"] else 1


def _with_config(args, steps) -> int:
    cfg = load_config(args.config)
    outdir = _out_dir(cfg, args.out)
    kernel = _resolve_kernel(cfg)
    _manifest(cfg, kernel, outdir)
    ok = True
    state = {}
    for step in steps:
        if step == "validate-kernel":
            report = ker.validate(kernel)
            _dump_json(report.to_dict(), os.path.join(outdir, "kernel_report.json"))
            print(report.summary())
            ok = ok and report.passed
        elif step == "msd":
            state.update(_run_msd(cfg, kernel, outdir))
            print(f"msd: wrote {len(state['msd'].times)} time points")
        elif step == "diffusion":
            res = _run_diffusion(cfg, kernel, outdir, state.get("msd"))
            ok = ok and res["ok"]
            for r in res["results"]:
                print(f"diffusion[{r['method']}]: D = {r['D'][0][0]:.6g}")
        elif step == "sweep-g":
            res = _run_sweep(cfg, kernel, outdir)
            ok = ok and res["ok"]
            print(f"sweep-g: slope = {res['slope'].delta:.6g} "
                  f"+- {res['slope'].stderr:.2g}")
        elif step == "localization":
            est = _run_localization(cfg, outdir)["localization"]
            print(f"localization: ell2 = {est.ell2:.6g} +- {est.stderr:.2g}")
        elif step == "appendix-checks":
            rep = resolvent_limits.run_randomized_suite()
            _dump_json(rep, os.path.join(outdir, "appendix_checks.json"))
            ok = ok and rep["passed"]
        else:
            raise ConfigInvalid(f"unknown pipeline step {step!r}")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qbrownian",
        description="Dissipative transport on disordered lattices: evolve "
                    "density states, certify bath kernels, estimate "
                    "diffusion constants three independent ways.")
    sub = parser.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("validate-kernel", help="certify a kernel spec")
    pv.add_argument("spec", nargs="?", help="measure-spec JSON path")
    pv.add_argument("--preset", choices=ker.PRESET_NAMES)
    pv.add_argument("--d", type=int, default=1)
    pv.add_argument("--radius", type=int, default=ker.DEFAULT_RADIUS)
    pv.add_argument("--n-q", type=int, default=0)
    pv.add_argument("--lossy-tol", type=float, default=0.1)
    pv.add_argument("--json", help="write the report to this path")
    pv.set_defaults(fn=cmd_validate_kernel)

    pa = sub.add_parser("appendix-checks",
                        help="randomized resolvent-limit verification")
    pa.add_argument("--n", type=int, default=50)
    pa.add_argument("--dim", type=int, default=20)
    pa.add_argument("--seed", type=int, default=2024)
    pa.add_argument("--json", help="write the report to this path")
    pa.set_defaults(fn=cmd_appendix_checks)

    for name, steps in (("msd", ["msd"]), ("diffusion", ["diffusion"]),
                        ("sweep-g", ["sweep-g"]),
                        ("localization", ["localization"])):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", help="output directory override")
        p.set_defaults(fn=_with_config, steps=steps)

    pr = sub.add_parser("run", help="run the pipeline listed in the config")
    pr.add_argument("config")
    pr.add_argument("--out")
    pr.set_defaults(fn=_with_config, steps=None)

    args = parser.parse_args(argv)
    try:
        if args.fn is _with_config:
            steps = args.steps
            if steps is None:
                cfg = load_config(args.config)
                steps = cfg.get("pipeline", ["validate-kernel"])
            return _with_config(args, steps)
        return args.fn(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except QBrownianError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
