"""Command-line front end.

Subcommands: gen, solve-sdp, solve-stmm, certify, rop-table, cjd-sweep,
diag-sweep, bench. Experiment commands write CSV aggregates plus JSONL
per-trial records under --out-dir; any numerical failure turns into a
nonzero exit unless --tolerate-failures is given.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .certificate import (
    STATUS_CERTIFIED,
    CertificateNumericalError,
    certify,
    classify_inconclusive,
)
from .core import load_instance, save_instance
from .diagonal import tightness_sweep
from .generators import (
    FAMILIES,
    gen_cjd,
    gen_nested,
    gen_random_psd,
    rank_two_pair,
)
from .harness import (
    run_bench,
    run_cjd_sweep,
    run_rop_table,
    write_csv,
    write_jsonl,
    write_tsv,
)
from .hppca import build_instance, make_model, sample, save_model
from .sdp import (
    STATUS_NUMERICAL_FAILURE,
    STATUS_OPTIMAL,
    extract_candidate,
    solve_sdp,
)
from .stiefel import SolverConfig, objective, random_stiefel, stmm_solve


def _ints(text):
    return [int(x) for x in text.split(",") if x]


def _floats(text):
    return [float(x) for x in text.split(",") if x]


def _out_dir(args) -> Path:
    p = Path(args.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _fail(args, seen_failure: bool) -> int:
    return 2 if (seen_failure and not args.tolerate_failures) else 0


def _write_json(path, doc):
    text = json.dumps(doc, indent=1, default=str)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text)


def _cmd_gen(args) -> int:
    params = json.loads(args.params) if args.params else {}
    fam = args.family
    if fam == "hppca":
        d, k = int(params["d"]), int(params["k"])
        model = make_model(
            d, k,
            params.get("lambdas", np.linspace(1.0, 4.0, k)),
            params.get("variances", [1.0, 4.0]),
            params.get("group_sizes", [100, 400]),
            seed=args.seed,
        )
        if params.get("model_out"):
            save_model(model, params["model_out"])
        from .core import normalize_instance
        inst = normalize_instance(build_instance(model, sample(model)))
    elif fam == "randpsd":
        inst = gen_random_psd(int(params["d"]), int(params["k"]),
                              rank=params.get("rank"), seed=args.seed)
    elif fam == "cjd":
        inst = gen_cjd(int(params["d"]), int(params["k"]),
                       int(params.get("r", 3)),
                       float(params.get("sigma", 1e-3)), seed=args.seed,
                       reverse_nesting=bool(params.get("reverse_nesting")))
    elif fam == "nested":
        coeffs = np.asarray(params["coeffs"], dtype=float)
        inst, opt = gen_nested(int(params["d"]), int(params["k"]),
                               coeffs, seed=args.seed)
        inst = type(inst)(mats=inst.mats, psd_shift=inst.psd_shift,
                          meta=dict(inst.meta, known_optimum=opt))
        print(f"known optimum: {opt}")
    elif fam == "fixture":
        x1, x2 = rank_two_pair()
        Path(args.out).write_text(json.dumps({
            "d": 4,
            "blocks": [x1.reshape(-1).tolist(), x2.reshape(-1).tolist()],
        }))
        print(f"wrote {args.out}")
        return 0
    else:
        raise ValueError(f"unknown family {fam}")
    save_instance(inst, args.out)
    print(f"wrote {args.out} (d={inst.d}, k={inst.k})")
    return 0


def _report_doc(rep) -> dict:
    return {
        "status": rep.status,
        "value": rep.value,
        "primal_objective": rep.primal.objective if rep.primal else None,
        "dual_objective": rep.dual.objective if rep.dual else None,
        "gap": rep.gap,
        "rop_err": rep.rop_err,
        "kkt": rep.kkt_residuals.as_dict() if rep.kkt_residuals else None,
        "iterations": rep.iterations,
        "wall_time": rep.wall_time,
    }


def _cmd_solve_sdp(args) -> int:
    inst = load_instance(args.instance)
    rep = solve_sdp(inst)
    _write_json(args.out, _report_doc(rep))
    if args.save_primal and rep.primal is not None:
        np.savez(args.save_primal,
                 **{f"x{i}": x for i, x in enumerate(rep.primal.x_blocks)})
    return _fail(args, rep.status != STATUS_OPTIMAL)


def _cmd_solve_stmm(args) -> int:
    inst = load_instance(args.instance)
    cfg = SolverConfig(max_iters=args.max_iters, grad_tol=args.grad_tol)
    u0 = random_stiefel(inst.d, inst.k, np.random.default_rng(args.seed))
    trace = stmm_solve(inst, u0, cfg)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "objective", "grad_norm"])
            for i, (o, g) in enumerate(zip(trace.objectives,
                                           trace.grad_norms)):
                w.writerow([i, repr(float(o)), repr(float(g))])
    _write_json(args.out, {
        "status": trace.status,
        "objective": objective(inst, trace.final),
        "iterations": trace.iterations,
        "grad_norm": float(trace.grad_norms[-1]),
        "d": inst.d,
        "k": inst.k,
        "u": trace.final.cols.ravel().tolist(),
    })
    return 0


def _load_point(path, d, k):
    doc = json.loads(Path(path).read_text())
    return np.asarray(doc["u"], dtype=float).reshape(d, k)


def _cmd_certify(args) -> int:
    inst = load_instance(args.instance)
    sdp_report = None
    if args.point:
        u = _load_point(args.point, inst.d, inst.k)
    else:
        # no candidate given: take the relaxation's, polished to stationarity
        sdp_report = solve_sdp(inst)
        if sdp_report.status != STATUS_OPTIMAL:
            _write_json(args.out, {"status": "NumericalFailure",
                                   "reason": "relaxation solve failed"})
            return _fail(args, True)
        cand, _, _ = extract_candidate(sdp_report.primal)
        u = stmm_solve(inst, cand).final
    try:
        res = certify(inst, u)
    except CertificateNumericalError as exc:
        _write_json(args.out, {"status": "NumericalFailure",
                               "reason": str(exc)})
        return _fail(args, True)
    doc = {
        "status": res.status,
        "t_star": res.t_star,
        "min_eig_slacks": [float(x) for x in res.min_eig_slacks],
        "nu_witness": None if res.nu_witness is None
        else [float(x) for x in res.nu_witness],
        "precondition_weak": res.precondition_weak,
    }
    if res.status != STATUS_CERTIFIED:
        doc["classification"] = classify_inconclusive(inst, u, sdp_report)
    _write_json(args.out, doc)
    return 0


def _apply_fast(args):
    if args.fast:
        args.trials = min(args.trials, 10)
        args.d = [d for d in args.d if d <= 30] or [min(30, min(args.d))]


def _cmd_rop_table(args) -> int:
    _apply_fast(args)
    grid = {"d": args.d, "k": args.k}
    if args.family == "hppca":
        grid["n"] = _ints(args.n)
        grid["v"] = _floats(args.v)
    if args.family == "randpsd" and args.rank:
        grid["rank"] = args.rank
    if args.family == "cjd":
        grid["r"] = args.r
        grid["sigma"] = args.sigma
    rows, records = run_rop_table(args.family, grid, args.trials,
                                  seed=args.seed, jobs=args.jobs)
    out = _out_dir(args)
    write_csv(out / "rop_table.csv", rows)
    write_jsonl(out / "rop_records.jsonl", records)
    for r in rows:
        print(f"d={r['d']} k={r['k']}: tight {r['fraction_tight']:.2f} "
              f"({r['failures']} failures)")
    return _fail(args, any(r["failures"] > 0 for r in rows))


def _cmd_cjd_sweep(args) -> int:
    _apply_fast(args)
    if args.n1:
        family, values = "hppca", _ints(args.n1)
    else:
        family, values = "cjd", _floats(args.sigmas)
    records = run_cjd_sweep(values, args.trials, d=args.d[0], k=args.k[0],
                            family=family, seed=args.seed, jobs=args.jobs)
    out = _out_dir(args)
    write_jsonl(out / "sweep_records.jsonl", records)
    curve = []
    for val in values:
        recs = [r for r in records if r["sweep_value"] == val]
        ok = [r for r in recs if "error" not in r]
        curve.append({
            "sweep_value": val,
            "n_trials": len(recs),
            "fraction_tight": np.mean([r["tight"] for r in ok]) if ok else 0,
            "fraction_certified": np.mean(
                [r["marker"] == "certified" for r in ok]) if ok else 0,
            "median_gap": np.median([r["gap"] for r in ok]) if ok else 0,
            "median_distance": np.median(
                [r["subspace_distance"] for r in ok]) if ok else 0,
            "median_commuting_distance": np.median(
                [r["commuting_distance"] for r in ok]) if ok else 0,
        })
        print(f"value {val}: tight {curve[-1]['fraction_tight']:.2f} "
              f"certified {curve[-1]['fraction_certified']:.2f}")
    write_tsv(out / "sweep_curve.tsv", curve)
    return _fail(args, any("error" in r for r in records))


def _cmd_diag_sweep(args) -> int:
    center = load_instance(args.center)
    rows = []
    for scale in _floats(args.scales):
        frac = tightness_sweep(center, scale, args.trials, seed=args.seed)
        rows.append({"scale": scale, "fraction_tight": frac,
                     "trials": args.trials})
        print(f"scale {scale}: tight {frac:.2f}")
    write_csv(args.out or (_out_dir(args) / "diag_sweep.csv"), rows)
    return 0


def _cmd_bench(args) -> int:
    _apply_fast(args)
    rows = run_bench(args.d, args.k, args.trials, seed=args.seed)
    out = _out_dir(args)
    records = []
    for r in rows:
        records.extend(r.pop("records"))
        print(f"d={r['d']} k={r['k']}: sdp {r['sdp_median']:.3f}s "
              f"stmm+cert {r['stmm_median']:.3f}s ratio {r['ratio']:.1f}")
    write_csv(out / "bench.csv", rows)
    write_jsonl(out / "bench_records.jsonl", records)
    seen_fail = any(r["sdp_status"] == STATUS_NUMERICAL_FAILURE
                    for r in records)
    return _fail(args, seen_fail)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--out-dir", default=".")
    common.add_argument("--tolerate-failures", action="store_true")
    common.add_argument("--fast", action="store_true",
                        help="preset: at most 10 trials and d <= 30")

    p = argparse.ArgumentParser(
        prog="stiefelsum",
        description="Sums of quadratic forms over the Stiefel manifold: "
                    "relaxation, first-order solver, global certificate.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common])
    g.add_argument("--family", choices=FAMILIES, required=True)
    g.add_argument("--params", default="", help="JSON parameter object")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=_cmd_gen)

    s = sub.add_parser("solve-sdp", parents=[common])
    s.add_argument("--instance", required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--save-primal", default=None)
    s.set_defaults(fn=_cmd_solve_sdp)

    s = sub.add_parser("solve-stmm", parents=[common])
    s.add_argument("--instance", required=True)
    s.add_argument("--max-iters", type=int, default=2000)
    s.add_argument("--grad-tol", type=float, default=1e-10)
    s.add_argument("--trace", default=None, help="iterate CSV path")
    s.add_argument("--out", default=None)
    s.set_defaults(fn=_cmd_solve_stmm)

    s = sub.add_parser("certify", parents=[common])
    s.add_argument("--instance", required=True)
    s.add_argument("--point", default=None,
                   help="candidate JSON (as written by solve-stmm)")
    s.add_argument("--out", default=None)
    s.set_defaults(fn=_cmd_certify)

    s = sub.add_parser("rop-table", parents=[common])
    s.add_argument("--family", choices=("hppca", "randpsd", "cjd",
                                        "diagonal"), default="hppca")
    s.add_argument("--d", type=_ints, default=[10])
    s.add_argument("--k", type=_ints, default=[3])
    s.add_argument("--trials", type=int, default=50)
    s.add_argument("--n", default="100,400")
    s.add_argument("--v", default="1,4")
    s.add_argument("--rank", type=int, default=None)
    s.add_argument("--r", type=int, default=3)
    s.add_argument("--sigma", type=float, default=1e-3)
    s.set_defaults(fn=_cmd_rop_table)

    s = sub.add_parser("cjd-sweep", parents=[common])
    s.add_argument("--sigmas", default="1e-4,1e-3,1e-2,1e-1")
    s.add_argument("--n1", default=None,
                   help="sample-size sweep instead of sigma sweep")
    s.add_argument("--d", type=_ints, default=[10])
    s.add_argument("--k", type=_ints, default=[3])
    s.add_argument("--trials", type=int, default=25)
    s.set_defaults(fn=_cmd_cjd_sweep)

    s = sub.add_parser("diag-sweep", parents=[common])
    s.add_argument("--center", required=True)
    s.add_argument("--scales", default="1e-4,1e-2,1e-1,1")
    s.add_argument("--trials", type=int, default=50)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=_cmd_diag_sweep)

    s = sub.add_parser("bench", parents=[common])
    s.add_argument("--d", type=_ints, default=[20, 40, 60])
    s.add_argument("--k", type=_ints, default=[3])
    s.add_argument("--trials", type=int, default=10)
    s.set_defaults(fn=_cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
