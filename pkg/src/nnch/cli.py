"""Command line front end: ``nnch run | verify | sweep-eps | truncation-lab``.

Every command prints a human-readable summary followed by ``key=value``
lines and exits with status 0 only when every executed check passed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, parse_config
from .stepper import SimulationError, eps_convergence_study, run_simulation

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _print(args, text: str = "") -> None:
    if not args.quiet:
        print(text)


def _kv(**items) -> str:
    out = []
    for k, v in items.items():
        out.append(f"{k}={v:.10g}" if isinstance(v, float) else f"{k}={v}")
    return " ".join(out)


def _load_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed={"rng_seed": args.seed})
    if args.mode is not None:
        cfg = cfg.replace(approx={"coupling_mode": args.mode})
    return cfg


def _out_dir(args, cfg: RunConfig, default: str | None = None) -> Path:
    if args.out:
        return Path(args.out)
    return Path(default) if default else Path(cfg.output.dir)


# ---------------------------------------------------------------------------
# commands


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    try:
        res = run_simulation(cfg, out_dir=out)
    except SimulationError as e:
        st = e.state
        print(f"run failed after {st.step if st else 0} steps: {e}", file=sys.stderr)
        print(_kv(status="failed", steps=st.step if st else 0, out=str(out)))
        return EXIT_FAILED
    st = res.state
    led = st.ledger
    m = led.column("mass")
    drift = float(np.abs(m - m[0]).max() / abs(m[0])) if m[0] != 0 else float(np.abs(m - m[0]).max())
    rel = float(led.relative_residual().max()) if led.e0 != 0 else float(led.column("residual").max())
    _print(args, f"{st.step} steps to t={st.t:g} on {cfg.domain.nx}x{cfg.domain.ny} ({cfg.domain.bc})")
    _print(args, f"energy residual / E0 {rel:.3e}, mass drift {drift:.3e}, rejections {st.stats['rejections']}")
    _print(args, f"outputs in {out}")
    print(_kv(status="ok", steps=st.step, t=st.t, e0=led.e0, max_rel_residual=rel, mass_drift=drift,
              max_div=float(led.column("div_res").max()), rejections=st.stats["rejections"],
              out_of_range=st.stats["out_of_range"], out=str(out)))
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import verify

    cfg = _load_config(args)
    results = verify.full_suite() if args.all else verify.quick_suite(cfg)
    width = max(len(r.name) for r in results)
    _print(args, f"{'check':<{width}}  status  seconds")
    for r in results:
        _print(args, f"{r.name:<{width}}  {'pass' if r.passed else 'FAIL':<6}  {r.seconds:7.2f}  {r.detail}")
    for r in results:
        print(r.kv())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "verify.csv").open("w") as fh:
            fh.write("check,passed,seconds\n")
            for r in results:
                fh.write(f"{r.name},{int(r.passed)},{r.seconds:.6f}\n")
    ok = all(r.passed for r in results)
    print(_kv(checks=len(results), failed=sum(not r.passed for r in results), passed=int(ok)))
    return EXIT_OK if ok else EXIT_FAILED


def _parse_eps(text: str, cfg: RunConfig) -> list[float]:
    from .config import resolve_length

    return [resolve_length(t, cfg.grid()) for t in text.split(",") if t.strip()]


def cmd_sweep_eps(args) -> int:
    cfg = _load_config(args)
    eps = _parse_eps(args.eps, cfg)
    if len(eps) < 3:
        print("sweep-eps needs at least 3 mollification radii", file=sys.stderr)
        return EXIT_USAGE
    out = _out_dir(args, cfg, "out_eps")
    out.mkdir(parents=True, exist_ok=True)
    rep = eps_convergence_study(cfg, eps, out_dir=out if args.keep_runs else None)
    with (out / "eps_study.csv").open("w") as fh:
        fh.write("i,eps_a,eps_b,v_distance,c_distance\n")
        for i, (vd, cd) in enumerate(zip(rep.v_distances, rep.c_distances)):
            fh.write(f"{i},{rep.eps[i]:.17g},{rep.eps[i + 1]:.17g},{vd:.17g},{cd:.17g}\n")
    figs = []
    if len(rep.v_distances) == len(rep.eps) - 1:
        from .plotting import plot_eps_study

        figs.append(plot_eps_study(rep, out / "eps_study.png"))
    for i, (vd, cd) in enumerate(zip(rep.v_distances, rep.c_distances)):
        _print(args, f"eps {rep.eps[i]:.4g} -> {rep.eps[i + 1]:.4g}: |dv| {vd:.4e}  |dc| {cd:.4e}")
    if rep.error:
        _print(args, rep.error)
    ok = rep.complete and rep.v_decreasing and rep.c_decreasing
    print(_kv(levels=len(rep.eps), v_decreasing=int(rep.v_decreasing), c_decreasing=int(rep.c_decreasing),
              complete=int(rep.complete), passed=int(ok), csv=str(out / "eps_study.csv")))
    return EXIT_OK if ok else EXIT_FAILED


def cmd_truncation_lab(args) -> int:
    from .plotting import plot_levelsets
    from .truncation import load_series, pair_report, truncation_study

    lam = "auto" if args.lambda_ref == "auto" else float(args.lambda_ref)
    if (args.series_a is None) != (args.series_b is None):
        print("give both --series-a and --series-b, or neither", file=sys.stderr)
        return EXIT_USAGE
    if args.series_a is not None:
        cfg_a, dt_a, va, ca = load_series(args.series_a)
        cfg_b, dt_b, vb, cb = load_series(args.series_b)
        if cfg_a.grid() != cfg_b.grid() or abs(dt_a - dt_b) > 1e-12 * dt_a or len(va) != len(vb):
            print("the two series must share grid, frame spacing and length", file=sys.stderr)
            return EXIT_USAGE
        law = cfg_a.law()
        reports = [pair_report(cfg_a.grid(), dt_a, (va, ca), (vb, cb), law, law.q, args.K, lam)]
        out = _out_dir(args, cfg_a, "out_truncation")
        labels = ["a - b"]
    else:
        from .verify import truncation_config

        cfg = _load_config(args) if args.config else truncation_config()
        eps = _parse_eps(args.eps, cfg)
        study = truncation_study(cfg, eps, 0.0, args.K, lam)
        reports = study.reports
        out = _out_dir(args, cfg, "out_truncation")
        labels = [f"eps={e:.3g}" for e in eps]
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, r in enumerate(reports):
        paths.append(r.write_csv(out / (f"levelsets_{i}.csv" if len(reports) > 1 else "levelsets.csv")))
    plot_levelsets(reports, out / "levelsets.png", labels)
    nested = all(r.nested for r in reports)
    along = all(all(mb <= ma for ma, mb in zip(a.measures, b.measures)) for a, b in zip(reports, reports[1:]))
    for lab, r in zip(labels, reports):
        _print(args, f"{lab}: |O_k| = " + ", ".join(f"{m:.4g}" for m in r.measures)
               + f"  (weak residual {r.residual:.1e}{', resolution exhausted' if r.exhausted else ''})")
    ok = nested and along
    print(_kv(members=len(reports), lambda_ref=reports[0].lambda_ref, nested=int(nested),
              monotone_eps=int(along), exhausted=int(any(r.exhausted for r in reports)), passed=int(ok),
              csv=str(paths[0])))
    return EXIT_OK if ok else EXIT_FAILED


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file ([section] key = value)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override [seed] rng_seed")
    common.add_argument("--mode", choices=("lagged", "fixed_point"), help="override [approx] coupling_mode")
    common.add_argument("--quiet", action="store_true", help="print only key=value lines")

    p = argparse.ArgumentParser(prog="nnch", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("run", parents=[common], help="run a coupled simulation").set_defaults(func=cmd_run)

    v = sub.add_parser("verify", parents=[common], help="run the verification checks")
    v.add_argument("--all", action="store_true", help="run every acceptance criterion (minutes)")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep-eps", parents=[common], help="mollification refinement study")
    s.add_argument("--eps", required=True, help="comma separated radii, e.g. 8h,4h,2h")
    s.add_argument("--keep-runs", action="store_true", help="write every run's outputs")
    s.set_defaults(func=cmd_sweep_eps)

    t = sub.add_parser("truncation-lab", parents=[common], help="level-set measures of difference fields")
    t.add_argument("--series-a", help="run directory with numbered snapshots")
    t.add_argument("--series-b", help="second run directory on the same grid")
    t.add_argument("--eps", default="4h,2h,1.5h", help="radii for the built-in difference sequence")
    t.add_argument("--K", type=int, default=4, help="largest threshold index")
    t.add_argument("--lambda-ref", default="auto", help="threshold scale, a number or 'auto'")
    t.set_defaults(func=cmd_truncation_lab)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        for msg in e.problems:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
