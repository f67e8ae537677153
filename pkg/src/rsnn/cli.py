"""Command line: ``rsnn run | sweep | cond-report``.

Settings come from built-in problem defaults, then an optional flat
``key = value`` config file (``--config``), then command-line flags.
"""

import argparse
import logging
import sys

from .estimator import StageError
from .pipeline import RunConfig, condition_report, run, sweep
from .problems import PROBLEMS

# config-file key -> (RunConfig field, parser)
_KEYS = {
    "problem": ("problem", str),
    "dim-M": ("M", None),
    "num-eigs": ("k", int),
    "seed": ("seed", int),
    "eps-tol": ("eps_tol", float),
    "n-max": ("n_max", int),
    "gamma": ("gamma", float),
    "pod-gram": ("pod_gram", str),
    "no-reduce": ("no_reduce", None),
    "quad-points": ("quad_points", int),
    "out": ("out", str),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(text):
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def parse_m_list(text):
    try:
        values = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"dim-M must be an integer or a comma-separated list, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise ValueError(f"dim-M values must be positive integers, got {text!r}")
    return values


def read_config_file(path):
    """Flat ``key = value`` file; ``#`` starts a comment. Keys mirror the flags."""
    settings = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("_", "-")
            if key not in _KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            name, conv = _KEYS[key]
            try:
                if key == "dim-M":
                    settings[name] = parse_m_list(value)
                elif key == "no-reduce":
                    settings[name] = _parse_bool(value)
                else:
                    settings[name] = conv(value)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return settings


def build_parser():
    parser = argparse.ArgumentParser(prog="rsnn", description="Neural-network subspace eigensolver.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value settings file; flags override it")
    common.add_argument("--problem", choices=sorted(PROBLEMS))
    common.add_argument("--dim-M", dest="M", type=parse_m_list, help="basis size (comma list for sweeps)")
    common.add_argument("--num-eigs", dest="k", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--eps-tol", dest="eps_tol", type=float)
    common.add_argument("--n-max", dest="n_max", type=int)
    common.add_argument("--gamma", type=float)
    common.add_argument("--pod-gram", dest="pod_gram", choices=["mass", "stiffness"])
    common.add_argument("--no-reduce", dest="no_reduce", action="store_const", const=True)
    common.add_argument("--quad-points", dest="quad_points", type=int)
    common.add_argument("--out")
    common.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="train, reduce, solve and score one configuration")
    sub.add_parser("sweep", parents=[common], help="one run per basis size in --dim-M")
    cond = sub.add_parser("cond-report", parents=[common],
                          help="condition numbers before and after reduction, both Gram choices")
    cond.add_argument("--dump-matrices", dest="dump_dir", help="write the matrices here")
    return parser


def resolve_settings(args):
    """Merge defaults, the config file and explicit flags."""
    settings = read_config_file(args.config) if args.config else {}
    for key, (name, _) in _KEYS.items():
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = value
    M_list = settings.pop("M", None)
    no_reduce = settings.pop("no_reduce", False)
    settings.setdefault("out", "rsnn-out")
    cfg = RunConfig(**settings, reduce=not no_reduce)
    return cfg, M_list


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, M_list = resolve_settings(args)
        if args.command == "run":
            if M_list is not None and len(M_list) != 1:
                parser.error("run takes a single --dim-M value")
            cfg.M = M_list[0] if M_list else None
            solution, report = run(cfg)
            print(f"{cfg.problem}: K={solution.K} epochs={report.epochs} solver={solution.solver}")
            for r in report.rows:
                print(f"  l={r.l:2d} ({r.n1},{r.n2}) lambda_h={r.lam_h:.12g} "
                      f"err_lambda={r.err_lambda:.3e} err_L2={r.err_L2:.3e} err_H1={r.err_H1:.3e}")
        elif args.command == "sweep":
            if not M_list:
                parser.error("sweep needs --dim-M with one or more values")
            result = sweep(cfg, M_list)
            for row in result.rows:
                errs = [v for k, v in row.items() if k.startswith("err_lambda")]
                print(f"M={row['M']} K={row['K']} epochs={row['epochs']} max err_lambda={max(errs):.3e}")
            if not result.K_nondecreasing:
                print("note: K is not non-decreasing in M")
        else:
            if not M_list:
                M_list = [RunConfig(problem=cfg.problem).resolved().M]
            rows = condition_report(cfg, M_list, dump_dir=args.dump_dir)
            for r in rows:
                note = "  (kappa_B beyond float64 resolution)" if r["kappa_saturated"] else ""
                print(f"M={r['M']} {r['pod_gram']:9s} K={r['K']} kappa(A)={r['kappa_A']:.3e} "
                      f"kappa(B)={r['kappa_B']:.3e} kappa(A_red)={r['kappa_A_red']:.8g} "
                      f"kappa(B_red)={r['kappa_B_red']:.8g}{note}")
    except (StageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
