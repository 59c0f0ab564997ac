"""Command line interface and experiment runner.

Exit codes: 0 when every verdict passes, 1 when a check fails, 2 for bad
input (malformed JSON, schema violations, unknown names), 3 for internal
errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import balancing, ensembles, ghp, palm, point_processes, transport, walks
from .canon import canonical_hash
from .ensembles import ModelSpec, RootedEnsemble, build_model
from .space import Decoration, FiniteRmmSpace, SizeLimitError, validate

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


class InputError(Exception):
    pass


CHECK_KINDS = [
    "mtp_check", "mtp_mc", "palm_intensity", "palm_campbell", "palm_exchange", "palm_inversion",
    "palm_mtp", "palm_of_poisson", "walk_reversibility", "walk_occupation", "walk_ergodic",
    "balance_stable", "balance_extra_head", "ghp_dist", "ghp_scaling", "factor_subset",
]

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["checks"],
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "workers": {"type": "integer", "minimum": 1},
        "model": {"type": "object", "required": ["model"]},
        "decoration": {"type": "object"},
        "output": {"type": "string"},
        "csv": {"type": "string"},
        "checks": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": CHECK_KINDS},
                    "g": {"type": ["string", "array"]},
                    "h": {"type": "string"},
                    "phi": {"type": "string"},
                    "psi": {"type": "string"},
                    "tol": {"type": "number", "exclusiveMinimum": 0},
                    "z": {"type": "number", "exclusiveMinimum": 0},
                    "trials": {"type": "integer", "minimum": 1},
                    "model": {"type": "object", "required": ["model"]},
                    "decoration": {"type": "object"},
                },
            },
        },
    },
}

STOCHASTIC = {"mtp_mc", "palm_of_poisson", "walk_occupation", "walk_ergodic", "balance_extra_head"}


def check_seed(master: int, name: str, index: int) -> int:
    """Per-check seed from a stable hash, so adding checks never moves others."""
    h = hashlib.blake2b(f"{master}:{name}:{index}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def workers_from_env(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get("MTPLAB_WORKERS", default)))
    except ValueError:
        return default


# building blocks shared by subcommands and configs

def model_from(d: dict):
    try:
        return build_model(ModelSpec.from_dict(d))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad model spec: {exc}") from exc


def decorate(e: RootedEnsemble, dec: dict | None) -> RootedEnsemble:
    """Exact decoration laws: bernoulli, bernoulli_pair, subset."""
    if not dec:
        return e
    kind = dec.get("kind")
    name = dec.get("name", "phi")
    if kind == "bernoulli":
        return point_processes.bernoulli_ensemble(e, float(dec["p"]), name)
    if kind == "bernoulli_pair":
        return point_processes.independent_bernoulli_pair_ensemble(
            e, float(dec["p1"]), float(dec["p2"]), tuple(dec.get("names", ("phi", "psi"))))
    if kind == "subset":
        mask = np.zeros(e.atoms[0][1].n, dtype=bool)
        mask[list(dec["points"])] = True
        return e.map(lambda s: s.with_decoration(name, Decoration("subset", mask)))
    if kind == "measure":
        vals = np.asarray(dec["values"], dtype=float)
        return e.map(lambda s: s.with_decoration(name, Decoration("measure", vals)))
    raise InputError(f"unknown decoration kind {kind!r}")


def _g_list(spec) -> list:
    if spec is None or spec == "battery":
        return transport.battery()
    names = [spec] if isinstance(spec, str) else list(spec)
    out = []
    for n in names:
        if n == "battery":
            out += transport.battery()
        else:
            try:
                out.append(transport.builtin(n))
            except KeyError as exc:
                raise InputError(str(exc)) from exc
    return out


def _h(spec):
    if spec is None:
        return transport.H_BALANCED
    try:
        return transport.builtin(spec)
    except KeyError as exc:
        raise InputError(str(exc)) from exc


def _reports_dict(reps) -> list[dict]:
    return [r.to_dict() for r in reps]


def _all_passed(entries) -> bool:
    return all(e.get("passed", True) for e in entries)


def run_check(check: dict, base_model: dict | None, base_dec: dict | None, seed: int) -> dict:
    kind = check["kind"]
    model = check.get("model", base_model)
    dec = check.get("decoration", base_dec)
    tol = float(check.get("tol", 1e-9))
    z = float(check.get("z", 4.0))
    trials = int(check.get("trials", 1000))
    out: dict = {"kind": kind, "seed": seed if kind in STOCHASTIC else None}

    def ensemble():
        if model is None:
            raise InputError(f"check {kind} needs a model")
        e = model_from(model)
        if not isinstance(e, RootedEnsemble):
            raise InputError(f"check {kind} needs a deterministic model")
        return decorate(e, dec)

    if kind == "mtp_check":
        e = ensemble()
        reps = [transport.mtp_check_exact(e, g, tol) for g in _g_list(check.get("g"))]
    elif kind == "mtp_mc":
        sampler = model_from(model)
        if isinstance(sampler, RootedEnsemble):
            raise InputError("mtp_mc needs a stochastic model (recipes or uniform_tree)")
        reps = [transport.mtp_check_mc(sampler, g, max(trials, 100), seed, z)
                for g in _g_list(check.get("g", "const"))]
    elif kind == "palm_intensity":
        e = ensemble()
        lam = palm.intensity(e, check.get("phi", "phi"), _h(check.get("h")))
        out["intensity"] = lam
        reps = []
    elif kind == "palm_campbell":
        e = ensemble()
        reps = [palm.campbell_check(e, check.get("phi", "phi"), g, _h(check.get("h")), tol)
                for g in _g_list(check.get("g"))]
    elif kind == "palm_exchange":
        e = ensemble()
        reps = [palm.exchange_check(e, check.get("phi", "phi"), check.get("psi", "psi"), g,
                                    _h(check.get("h")), tol) for g in _g_list(check.get("g"))]
    elif kind == "palm_mtp":
        e = ensemble()
        reps = [palm.palm_mtp_check(e, check.get("phi", "phi"), g, _h(check.get("h")), tol)
                for g in _g_list(check.get("g"))]
    elif kind == "palm_inversion":
        e = ensemble()
        reps = [palm.palm_inversion_check(e, check.get("phi", "phi"), _h(check.get("h")), tol)]
    elif kind == "palm_of_poisson":
        e = model_from(model)
        reps = point_processes.palm_of_poisson_check(e, float(check.get("c", 1.0)), trials=trials,
                                                     seed=seed, h=_h(check.get("h")), z=z)
    elif kind == "walk_reversibility":
        e = ensemble()
        reps = [walks.reversibility_check(e, _h(check.get("h")), g, tol)
                for g in _g_list(check.get("g"))]
    elif kind in ("walk_occupation", "walk_ergodic"):
        e = ensemble()
        s = e.atoms[0][1]
        k = walks.kernel_from_transport(s, _h(check.get("h")))
        tr = walks.simulate_walk(s, k, trials, seed, two_sided=True)
        if kind == "walk_occupation":
            reps = walks.occupation_reports(tr, z=z)
        else:
            deg = lambda t: t.degrees()[t.root]
            ref = ensembles.exact_expectation(ensembles.uniform_rooting(s, merge_atoms=False), deg)
            reps = [walks.ergodic_average_report(tr, deg, ref, z)]
    elif kind == "balance_stable":
        e = ensemble()
        s = e.atoms[0][1]
        td = balancing.stable_transport(s, check.get("phi", "phi"), check.get("psi", "psi"))
        bal = balancing.verify_balancing(td)
        cert = balancing.blocking_pairs(td)
        out["balance"] = bal.to_dict()
        out["blocking_pairs"] = cert.blocking_pairs
        out["passed"] = bal.passed and cert.stable
        return out
    elif kind == "balance_extra_head":
        if model is None:
            raise InputError("balance_extra_head needs a model")
        s = ensembles.base_space(ModelSpec.from_dict(model))
        reps = balancing.extra_head_demo(s, float(check.get("p", 0.5)), trials, seed,
                                         check.get("target"), z=z)
    elif kind == "ghp_dist":
        a = FiniteRmmSpace.from_dict(check["a"])
        b = FiniteRmmSpace.from_dict(check["b"])
        r = ghp.ghp_upper(a, b, int(check.get("budget", 2000)))
        out.update(r.to_dict())
        if "expect" in check:
            out["passed"] = abs(r.value - float(check["expect"])) <= float(check.get("tol", 1e-3))
        return out
    elif kind == "ghp_scaling":
        table = ghp.scaling_cauchy_demo(check.get("scaling_model", "path"),
                                        check.get("sizes", [4, 8, 16, 32]),
                                        check.get("rule", "n"), int(check.get("budget", 400)))
        out.update(table)
        out["passed"] = table["strictly_decreasing"]
        return out
    elif kind == "factor_subset":
        e = ensemble()
        name = check.get("phi", "phi")
        rep = transport.factor_subset_check(e, lambda t: t.decoration(name)[t.root] > 0)
        out.update(rep.to_dict())
        return out
    else:  # pragma: no cover - guarded by the schema
        raise InputError(f"unknown check kind {kind!r}")
    out["reports"] = _reports_dict(reps)
    out["passed"] = _all_passed(out["reports"])
    return out


def run_experiment(config: dict, workers: int | None = None) -> dict:
    """Execute the checks of ``config`` and assemble a report in config order."""
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise InputError(f"schema error: {exc.message}") from exc
    master = int(config.get("seed", 0))
    checks = config["checks"]
    if "seed" not in config and any(c["kind"] in STOCHASTIC for c in checks):
        raise InputError("stochastic checks need a master 'seed'")
    seeds = [check_seed(master, c["kind"], i) for i, c in enumerate(checks)]
    workers = workers or workers_from_env(int(config.get("workers", 1)))
    t0 = time.perf_counter()

    def job(i):
        return run_check(checks[i], config.get("model"), config.get("decoration"), seeds[i])

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(job, range(len(checks))))
    else:
        results = [job(i) for i in range(len(checks))]
    passed = sum(1 for r in results if r.get("passed", True))
    return {
        "config": config,
        "version": __version__,
        "checks": results,
        "summary": {"total": len(results), "passed": passed, "failed": len(results) - passed,
                    "all_passed": passed == len(results)},
        "wall_time": time.perf_counter() - t0,
    }


def report_csv(report: dict) -> str:
    """One row per individual comparison.

    Columns: check (config position), label, lhs, rhs, abs_diff, tolerance,
    passed.  For estimate reports lhs is the estimate and rhs the reference.
    """
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["check", "label", "lhs", "rhs", "abs_diff", "tolerance", "passed"])
    for i, c in enumerate(report["checks"]):
        for r in c.get("reports", []):
            if "lhs" in r:
                row = [r["lhs"], r["rhs"], r["abs_diff"], r["tolerance"]]
            else:
                # estimate reports: rhs is the reference, tolerance is z * se
                ref = r["reference"]
                diff = abs(r["estimate"] - ref) if ref is not None else None
                row = [r["estimate"], ref, diff, r["z"] * r["se"]]
            w.writerow([i, r["label"], *map(repr, row), r["passed"]])
    return buf.getvalue()


# argument parsing

def _params(items) -> dict:
    out = {}
    for item in items or []:
        k, sep, v = item.partition("=")
        if not sep:
            raise InputError(f"parameter {item!r} must look like key=value")
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _model_args(p):
    p.add_argument("--model", default="cycle", help="cycle, path, torus_grid, star, uniform_tree, petersen, custom_file")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="model parameter (repeatable)")
    p.add_argument("--rooting", default="uniform", choices=ensembles.ROOTINGS)
    p.add_argument("--bernoulli", type=float, help="decorate with Bernoulli(p) points named --phi")
    p.add_argument("--subset", help="decorate with a fixed subset, e.g. 0,1,3")


def _model_dict(args) -> dict:
    params = _params(args.param)
    if args.model == "custom_file" and "path" not in params:
        raise InputError("custom_file needs --param path=...")
    return {"model": args.model, "params": params, "rooting": args.rooting}


def _dec_dict(args) -> dict | None:
    phi = getattr(args, "phi", "phi") or "phi"
    if getattr(args, "bernoulli", None) is not None:
        return {"kind": "bernoulli", "p": args.bernoulli, "name": phi}
    if getattr(args, "subset", None):
        return {"kind": "subset", "points": [int(x) for x in args.subset.split(",")], "name": phi}
    return None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mtplab", description="Unimodular random rmm spaces at desk scale.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="group", required=True)

    g = sub.add_parser("space", help="space files").add_subparsers(dest="cmd", required=True)
    for name in ("validate", "hash"):
        p = g.add_parser(name)
        p.add_argument("file")

    g = sub.add_parser("ensemble", help="ensembles").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("build")
    _model_args(p)
    p.add_argument("--out")

    g = sub.add_parser("mtp", help="mass transport checks").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("check")
    _model_args(p)
    p.add_argument("--g", action="append", help="transport function name (repeatable; default battery)")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--phi", default="phi")

    g = sub.add_parser("palm", help="Palm calculus").add_subparsers(dest="cmd", required=True)
    for name in ("intensity", "construct", "check-campbell", "check-exchange", "check-inversion", "check-mtp", "of-poisson"):
        p = g.add_parser(name)
        _model_args(p)
        p.add_argument("--phi", default="phi")
        p.add_argument("--psi", default="psi")
        p.add_argument("--psi-bernoulli", type=float, help="independent Bernoulli(p) for psi")
        p.add_argument("--h", default=None)
        p.add_argument("--g", action="append")
        p.add_argument("--mode", choices=("exact", "mc"), default="exact")
        p.add_argument("--c", type=float, default=1.0, help="Poisson intensity")
        p.add_argument("--trials", type=int, default=100_000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out")

    g = sub.add_parser("walk", help="random walks").add_subparsers(dest="cmd", required=True)
    for name in ("simulate", "check-reversibility", "speed", "ergodic-average"):
        p = g.add_parser(name)
        _model_args(p)
        p.add_argument("--h", default=None)
        p.add_argument("--kernel", choices=("balanced", "lazy", "srw"), default="balanced")
        p.add_argument("--steps", type=int, default=10_000)
        p.add_argument("--traces", type=int, default=100)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--g", action="append")
        p.add_argument("--out")

    g = sub.add_parser("balance", help="stable balancing transport").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("stable")
    p.add_argument("--space", required=True)
    p.add_argument("--phi", default="phi")
    p.add_argument("--psi", default="psi")
    p.add_argument("--out", help="CSV of the density K")
    p = g.add_parser("verify")
    p.add_argument("--space", required=True)
    p.add_argument("--phi", default="phi")
    p.add_argument("--psi", default="psi")
    p.add_argument("--density", required=True, help="CSV written by 'balance stable'")
    p = g.add_parser("extra-head")
    p.add_argument("--rows", type=int, default=4)
    p.add_argument("--cols", type=int, default=4)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--target", type=int)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("ghp", help="GHP surrogate distance").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("dist")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--budget", type=int, default=2000)
    p.add_argument("--grid", type=float, default=ghp.GRID)
    p = g.add_parser("scaling-demo")
    p.add_argument("--model", default="path", choices=("path", "cycle", "uniform_tree"))
    p.add_argument("--sizes", default="4,8,16,32")
    p.add_argument("--rule", default="n", choices=("n", "sqrt"))
    p.add_argument("--budget", type=int, default=400)
    p.add_argument("--csv")

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--csv")
    p.add_argument("--workers", type=int)
    return ap


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=False, default=str)
    if out:
        Path(out).write_text(text)
    print(text)


def _verdict(entries) -> int:
    return EXIT_OK if all(e.get("passed", True) for e in entries) else EXIT_FAIL


def _ensemble(args):
    e = model_from(_model_dict(args))
    if not isinstance(e, RootedEnsemble):
        raise InputError("this command needs a deterministic model")
    return e


def _cmd_space(args):
    s = _load_space(args.file)
    if args.cmd == "validate":
        problems = validate(s)
        _emit({"valid": not problems, "violations": problems})
        return EXIT_OK if not problems else EXIT_FAIL
    _emit({"hash": canonical_hash(s).hex(), "n": s.n})
    return EXIT_OK


def _load_space(path):
    try:
        return FiniteRmmSpace.load(path)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise InputError(f"cannot read space file {path}: {exc}") from exc


def _cmd_ensemble(args):
    e = decorate(_ensemble(args), _dec_dict(args))
    if args.out:
        e.save(args.out)
    _emit({"atoms": len(e), "classes": [{"weight": w, "root": s.root, "hash": canonical_hash(s).hex()}
                                        for w, s in e.merged().atoms]})
    return EXIT_OK


def _cmd_mtp(args):
    e = decorate(_ensemble(args), _dec_dict(args))
    reps = [transport.mtp_check_exact(e, g, args.tol).to_dict() for g in _g_list(args.g)]
    _emit({"reports": reps})
    return _verdict(reps)


def _cmd_palm(args):
    model = _model_dict(args)
    if args.cmd == "of-poisson":
        e = model_from(model)
        reps = point_processes.palm_of_poisson_check(e, args.c, trials=args.trials, seed=args.seed,
                                                     h=_h(args.h))
        out = [r.to_dict() for r in reps]
        _emit({"reports": out}, args.out)
        return _verdict(out)
    e = decorate(model_from(model), _dec_dict(args))
    if args.psi_bernoulli is not None:
        e = point_processes.bernoulli_ensemble(e, args.psi_bernoulli, args.psi)
    h = _h(args.h)
    if args.mode == "mc":
        raise InputError("exact mode only for finite decorations; use 'palm of-poisson' for Monte Carlo")
    if args.cmd == "intensity":
        _emit({"intensity": palm.intensity(e, args.phi, h)}, args.out)
        return EXIT_OK
    if args.cmd == "construct":
        res = palm.palm_ensemble_exact(e, args.phi, h)
        _emit({"intensity": res.intensity, "h_used": res.h_used,
               "classes": [{"weight": w, "root": s.root, "hash": canonical_hash(s).hex()}
                           for w, s in res.palm.atoms]}, args.out)
        return EXIT_OK
    gs = _g_list(args.g)
    if args.cmd == "check-campbell":
        reps = [palm.campbell_check(e, args.phi, g, h) for g in gs]
    elif args.cmd == "check-exchange":
        reps = [palm.exchange_check(e, args.phi, args.psi, g, h) for g in gs]
    elif args.cmd == "check-mtp":
        reps = [palm.palm_mtp_check(e, args.phi, g, h) for g in gs]
    else:
        reps = [palm.palm_inversion_check(e, args.phi, h)]
    out = [r.to_dict() for r in reps]
    _emit({"reports": out}, args.out)
    return _verdict(out)


def _walk_kernel(args, s):
    if args.kernel == "lazy":
        return walks.lazy_nearest_neighbor_kernel(s)
    if args.kernel == "srw":
        return walks.simple_random_walk_kernel(s)
    return walks.kernel_from_transport(s, _h(args.h))


def _cmd_walk(args):
    e = _ensemble(args)
    s = e.atoms[0][1]
    if args.cmd == "check-reversibility":
        reps = [walks.reversibility_check(e, _h(args.h), g).to_dict() for g in _g_list(args.g)]
        _emit({"reports": reps})
        return _verdict(reps)
    k = _walk_kernel(args, s)
    if args.cmd == "simulate":
        tr = walks.simulate_walk(s, k, args.steps, args.seed, two_sided=True)
        if args.out:
            Path(args.out).write_text(json.dumps(tr.to_dict()))
        _emit({"steps": args.steps, "kernel": tr.kernel, "seed": args.seed,
               "start": int(tr.trajectory[0]), "end": int(tr.trajectory[-1])})
        return EXIT_OK
    if args.cmd == "speed":
        seeds = np.random.SeedSequence(args.seed).generate_state(args.traces, np.uint64)
        traces = [walks.simulate_walk(s, k, args.steps, int(x)) for x in seeds]
        rep = walks.speed_estimate(traces)
        _emit(rep.to_dict())
        return EXIT_OK
    tr = walks.simulate_walk(s, k, args.steps, args.seed, two_sided=True)
    # reference: mean degree under the stationary law of the chosen kernel
    deg = s.degrees()
    weights = deg if k.reference == "deg" else s.mu
    ref = float(weights @ deg / weights.sum())
    rep = walks.ergodic_average_report(tr, lambda t: t.degrees()[t.root], ref)
    _emit(rep.to_dict())
    return _verdict([rep.to_dict()])


def _cmd_balance(args):
    if args.cmd == "extra-head":
        from . import space as sp

        reps = balancing.extra_head_demo(sp.torus_grid(args.rows, args.cols), args.p, args.trials,
                                         args.seed, args.target)
        out = [r.to_dict() for r in reps]
        _emit({"reports": out})
        return _verdict(out)
    s = _load_space(args.space)
    if args.cmd == "stable":
        try:
            td = balancing.stable_transport(s, args.phi, args.psi)
        except balancing.BalancingError as exc:
            _emit({"error": str(exc)})
            return EXIT_FAIL
        rep = balancing.verify_balancing(td)
        cert = balancing.blocking_pairs(td)
        text = density_csv(td.K, rep)
        if args.out:
            Path(args.out).write_text(text)
        _emit({**rep.to_dict(), "blocking_pairs": cert.blocking_pairs})
        return EXIT_OK if rep.passed and cert.stable else EXIT_FAIL
    K = read_density_csv(args.density, s.n)
    td = balancing.TransportDensity(s, K, s.decoration(args.phi), s.decoration(args.psi),
                                    np.zeros_like(K), np.zeros(s.n))
    rep = balancing.verify_balancing(td)
    _emit(rep.to_dict())
    return EXIT_OK if rep.passed else EXIT_FAIL


def density_csv(K: np.ndarray, rep) -> str:
    """Rows ``row,col,value`` for nonzero entries, then residual footer lines."""
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["row", "col", "value"])
    for x, y in np.argwhere(K > 0):
        w.writerow([int(x), int(y), repr(float(K[x, y]))])
    w.writerow(["#row_residual", repr(rep.row_residual), ""])
    w.writerow(["#col_residual", repr(rep.col_residual), ""])
    return buf.getvalue()


def read_density_csv(path, n: int) -> np.ndarray:
    K = np.zeros((n, n))
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "row" or row[0].startswith("#"):
                continue
            K[int(row[0]), int(row[1])] = float(row[2])
    return K


def _cmd_ghp(args):
    if args.cmd == "dist":
        a, b = _load_space(args.a), _load_space(args.b)
        r = ghp.ghp_upper(a, b, args.budget)
        d = r.to_dict()
        d["rounded"] = ghp.round_up(r.value, args.grid)
        _emit(d)
        return EXIT_OK
    sizes = [int(x) for x in args.sizes.split(",")]
    table = ghp.scaling_cauchy_demo(args.model, sizes, args.rule, args.budget)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "m", "distance", "exhaustive", "budget_exhausted"])
            for row in table["rows"]:
                w.writerow([row["n"], row["m"], repr(row["distance"]), row["exhaustive"], row["budget_exhausted"]])
    _emit(table)
    return EXIT_OK if table["strictly_decreasing"] else EXIT_FAIL


def _cmd_run(args):
    try:
        config = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {args.config}: {exc}") from exc
    except OSError as exc:
        raise InputError(f"cannot read {args.config}: {exc}") from exc
    report = run_experiment(config, args.workers)
    out = args.out or config.get("output")
    text = json.dumps(report, indent=2, default=str)
    if out:
        Path(out).write_text(text)
    csv_path = args.csv or config.get("csv")
    if csv_path:
        Path(csv_path).write_text(report_csv(report))
    print(text)
    s = report["summary"]
    print(f"{s['passed']}/{s['total']} checks passed", file=sys.stderr)
    return EXIT_OK if s["all_passed"] else EXIT_FAIL


COMMANDS = {"space": _cmd_space, "ensemble": _cmd_ensemble, "mtp": _cmd_mtp, "palm": _cmd_palm,
            "walk": _cmd_walk, "balance": _cmd_balance, "ghp": _cmd_ghp, "run": _cmd_run}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return COMMANDS[args.group](args)
    except (InputError, SizeLimitError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:  # noqa: BLE001 - last-resort boundary of the CLI
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
