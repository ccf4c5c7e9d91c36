"""Command line entry point: ``reistokes run`` and ``reistokes check``."""
import argparse
import logging
import sys

from .config import load_config, parse_eps
from .errors import ReistokesError
from .harness import check_config, run_experiment


def _parser():
    p = argparse.ArgumentParser(prog="reistokes",
                                description="Reiterated Stokes homogenization experiments")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run the full pipeline and write rates.csv and report.txt")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--eps-override", help="comma separated eps list, e.g. 1/2,1/3,1/4")
    r.add_argument("--dump-fields", action="store_true", help="write binary field dumps")
    r.add_argument("--workers", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("-v", "--verbose", action="store_true")
    c = sub.add_parser("check", help="validate config and ellipticity without solving")
    c.add_argument("config")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.cmd == "check":
            rep, gap, ok = check_config(cfg)
            print(rep.summary())
            if cfg.domain.kind == "square":
                print(f"compatibility gap: {gap:.3e}")
            print("config OK" if ok else "config FAILED")
            return 0 if ok else 1
        eps = [parse_eps(s) for s in args.eps_override.split(",")] if args.eps_override else None
        cfg = cfg.with_overrides(eps=eps, workers=args.workers, seed=args.seed, out_dir=args.out,
                                 dump_fields=True if args.dump_fields else None)
        cfg.validate()
        rep = run_experiment(cfg, progress=lambda row: print(
            f"eps={row['eps']:.6g}  err_u_L2={row['err_u_L2']:.4e}  "
            f"err_w_H1={row['err_w_H1']:.4e}  err_p_L2={row['err_p_L2']:.4e}", flush=True))
    except ReistokesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for k, s in rep.slopes.items():
        print(f"slope {k}: {s[0]:.4f}" if isinstance(s, tuple) else f"slope {k}: {s}")
    print(f"outputs in {cfg.out_dir}")
    print("PASS" if rep.passed else "FAIL")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
