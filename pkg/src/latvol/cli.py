"""Command-line driver: bond-volume queries, patch tests, convergence and
stability experiments, and a fixed-seed self test.

Subcommands: bondvol, patchtest, converge, stability, selftest.
Outputs are JSON for single-value queries and CSV for tables; every file
embeds its configuration and a format-version string.  Exit codes:
0 success, 1 assertion failure (--assert), 2 invalid input, 3 solver
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

OUTPUT_FORMAT_VERSION = "latvol-output/1"

EXIT_OK = 0
EXIT_ASSERT = 1
EXIT_INVALID = 2
EXIT_SOLVER = 3


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_out(payload: dict, args) -> None:
    payload["format"] = OUTPUT_FORMAT_VERSION
    payload["config"] = {k: v for k, v in vars(args).items()
                         if k not in ("func", "out") and v is not None}
    _emit(json.dumps(payload, indent=2, default=float) + "\n", args.out)


def _csv_out(header, rows, meta: dict, args) -> None:
    buf = io.StringIO()
    meta = dict(meta)
    meta["format"] = OUTPUT_FORMAT_VERSION
    meta["config"] = {k: v for k, v in vars(args).items()
                      if k not in ("func", "out") and v is not None}
    buf.write("# " + json.dumps(meta, default=float) + "\n")
    w = csv.writer(buf)
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    _emit(buf.getvalue(), args.out)


def _parse_f(entries) -> np.ndarray:
    if entries is None:
        return np.array([[1.0, 0.01, 0.02], [0.0, 1.0, 0.015], [0.0, 0.0, 1.0]])
    vals = [float(x) for x in entries]
    if len(vals) != 9:
        raise SystemExit(EXIT_INVALID)
    return np.array(vals).reshape(3, 3)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_bondvol(args) -> int:
    from .bond_volume import len_bruteforce, len_tetra

    tet = [tuple(args.tet[i:i + 3]) for i in range(0, 12, 3)]
    r = tuple(args.r)
    if r == (0, 0, 0):
        print("error: bond direction must be nonzero", file=sys.stderr)
        return EXIT_INVALID
    payload = {"tet": tet, "r": r, "len": len_tetra(tet, r)}
    if args.oracle:
        try:
            payload["oracle_len"] = len_bruteforce(tet, r)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
        payload["abs_diff"] = abs(payload["len"] - payload["oracle_len"])
    _json_out(payload, args)
    return EXIT_OK


def cmd_patchtest(args) -> int:
    from .crystal_model import build_vacancy_problem, effective_volumes
    from .energy import LennardJones, mean_bond_force, patch_test

    f = _parse_f(args.f)
    try:
        model = build_vacancy_problem(args.n, args.k, cutoff=args.cutoff, vacancy=False)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    pot = LennardJones(cutoff=args.cutoff)
    if args.cauchy_born:
        model.omega = effective_volumes(model, cauchy_born=True)
    resid = patch_test(model, pot, f)
    scale = mean_bond_force(model, pot, f)
    _json_out(
        {
            "n": args.n,
            "k": args.k,
            "cauchy_born": bool(args.cauchy_born),
            "ghost_force_maxnorm": resid,
            "mean_bond_force": scale,
            "relative": resid / scale,
        },
        args,
    )
    return EXIT_OK


def cmd_converge(args) -> int:
    from .energy import LennardJones
    from .equilibrium import NewtonConfig, convergence_study, fit_loglog_slope

    f = _parse_f(args.f)
    rows_spec = []
    for n in args.n:
        for k in args.k:
            if 2 <= k < n:
                rows_spec.append((n, k))
    if not rows_spec:
        print("error: no valid (N, K) pairs", file=sys.stderr)
        return EXIT_INVALID
    pot = LennardJones(cutoff=args.cutoff)
    try:
        rows = convergence_study(rows_spec, pot, f, NewtonConfig(gradient_tolerance=args.tol))
    except ArithmeticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    dofs = [r["dof"] for r in rows]
    slopes = {
        "w1inf_slope": fit_loglog_slope(dofs, [r["w1inf_error"] for r in rows])
        if len(rows) > 1 else float("nan"),
        "energy_slope": fit_loglog_slope(dofs, [r["energy_error"] for r in rows])
        if len(rows) > 1 else float("nan"),
    }
    _csv_out(
        ["n", "k", "dof", "w1inf_error", "energy_error"],
        [[r["n"], r["k"], r["dof"], r["w1inf_error"], r["energy_error"]] for r in rows],
        {"summary": slopes},
        args,
    )
    if args.do_assert and len(rows) > 1:
        if not (slopes["w1inf_slope"] <= -0.7 and slopes["energy_slope"] <= -1.2):
            print(f"assertion failed: slopes {slopes}", file=sys.stderr)
            return EXIT_ASSERT
    return EXIT_OK


def cmd_stability(args) -> int:
    from .crystal_model import build_vacancy_problem
    from .energy import LennardJones
    from .equilibrium import StabilityScan, stability_scan

    try:
        model = build_vacancy_problem(args.n, args.k, cutoff=args.cutoff, vacancy=False)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    pot = LennardJones(cutoff=args.cutoff)
    scan = StabilityScan.default(step=args.step)
    scan.fourier_grid = args.fourier_grid
    res = stability_scan(model, pot, scan, threads=args.threads)
    rows = []
    for src in ("coupled", "fourier"):
        grid = res[src]
        for i, t in enumerate(res["t_values"]):
            for j, s in enumerate(res["s_values"]):
                rows.append([float(t), float(s), int(grid[i, j]), src])
    _csv_out(["t", "s", "stable", "source"], rows, {"n": args.n, "k": args.k}, args)
    if args.do_assert:
        bad = int((res["fourier"] & ~res["coupled"]).sum())
        if bad:
            print(f"assertion failed: {bad} grid points fourier-stable but "
                  "coupled-unstable", file=sys.stderr)
            return EXIT_ASSERT
    return EXIT_OK


def cmd_selftest(args) -> int:
    """Fixed-seed oracle-equivalence and patch-test checks."""
    import itertools

    from .bond_volume import len_bruteforce, len_tetra
    from .crystal_model import build_vacancy_problem, consistency_defects
    from .energy import LennardJones, mean_bond_force, patch_test

    rng = np.random.default_rng(args.seed)
    failures = []

    dirs = [r for r in itertools.product(range(-2, 3), repeat=3) if r != (0, 0, 0)]
    worst = 0.0
    for _ in range(args.tets):
        tet = [tuple(int(c) for c in rng.integers(-4, 5, size=3)) for _ in range(4)]
        vol = abs(np.linalg.det(np.array(tet[1:]) - np.array(tet[0]))) / 6.0
        for r in dirs:
            d = abs(len_tetra(tet, r) - len_bruteforce(tet, r))
            worst = max(worst, d / max(1.0, vol))
    print(f"oracle equivalence over {args.tets} tets x {len(dirs)} directions: "
          f"worst {worst:.3e} {'PASS' if worst <= 1e-9 else 'FAIL'}")
    if worst > 1e-9:
        failures.append("oracle")

    model = build_vacancy_problem(4, 2, vacancy=False)
    defect = float(np.abs(consistency_defects(model)).max())
    print(f"volume consistency defect (N=4, K=2): {defect:.3e} "
          f"{'PASS' if defect <= 1e-8 else 'FAIL'}")
    if defect > 1e-8:
        failures.append("consistency")

    pot = LennardJones()
    f = np.array([[1.0, 0.01, 0.02], [0.0, 1.0, 0.015], [0.0, 0.0, 1.0]])
    rel = patch_test(model, pot, f) / mean_bond_force(model, pot, f)
    print(f"patch test (N=4, K=2): relative ghost force {rel:.3e} "
          f"{'PASS' if rel <= 1e-10 else 'FAIL'}")
    if rel > 1e-10:
        failures.append("patch")

    if failures:
        print("selftest FAILED:", ", ".join(failures), file=sys.stderr)
        return EXIT_ASSERT
    print("selftest passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latvol", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(q):
        q.add_argument("--out", help="write output to this path instead of stdout")
        q.add_argument("--config", help="JSON file with defaults for this command")
        q.add_argument("--threads", type=int,
                       default=int(os.environ.get("LATVOL_THREADS", "1")))
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--cutoff", type=float, default=3.2)
        q.add_argument("--assert", dest="do_assert", action="store_true",
                       help="exit 1 if the command's acceptance bounds fail")

    q = sub.add_parser("bondvol", help="Len(T, r) for one tetrahedron")
    common(q)
    q.add_argument("--tet", type=int, nargs=12, required=True,
                   metavar="I", help="four vertices, 12 integers")
    q.add_argument("--r", type=int, nargs=3, required=True, metavar="C")
    q.add_argument("--oracle", action="store_true",
                   help="also run the brute-force oracle")
    q.set_defaults(func=cmd_bondvol)

    q = sub.add_parser("patchtest", help="ghost forces of the coupled energy")
    common(q)
    q.add_argument("--n", type=int, default=4)
    q.add_argument("--k", type=int, default=2)
    q.add_argument("--f", nargs=9, metavar="F", help="row-major 3x3 deformation")
    q.add_argument("--cauchy-born", dest="cauchy_born", action="store_true",
                   help="replace effective volumes by plain element volumes")
    q.set_defaults(func=cmd_patchtest)

    q = sub.add_parser("converge", help="vacancy convergence study")
    common(q)
    q.add_argument("--n", type=int, nargs="+", default=[4, 6, 8])
    q.add_argument("--k", type=int, nargs="+", default=[2, 3, 4])
    q.add_argument("--f", nargs=9, metavar="F")
    q.add_argument("--tol", type=float, default=1e-10)
    q.set_defaults(func=cmd_converge)

    q = sub.add_parser("stability", help="stability regions on the (t,s) grid")
    common(q)
    q.add_argument("--n", type=int, default=6)
    q.add_argument("--k", type=int, default=3)
    q.add_argument("--step", type=float, default=0.02)
    q.add_argument("--fourier-grid", type=int, default=32)
    q.set_defaults(func=cmd_stability)

    q = sub.add_parser("selftest", help="fixed-seed acceptance smoke test")
    common(q)
    q.add_argument("--tets", type=int, default=12,
                   help="number of random tetrahedra for the oracle check")
    q.set_defaults(func=cmd_selftest)
    return p


def _apply_config(args) -> None:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            overrides = json.load(fh)
        for key, val in overrides.items():
            if hasattr(args, key):
                setattr(args, key, val)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
