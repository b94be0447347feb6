"""Command-line entry point: ``slicesim {train,eval,baseline,compare}``.

Exit codes: 0 success, 1 configuration error, 2 runtime abort.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .engine import ALGORITHMS, OUT_ENV, RunPlan, run
from .phy import load_lut

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("slicesim")


class _Parser(argparse.ArgumentParser):
    # bad flags are a configuration problem, not a runtime abort
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML config (defaults when omitted)")
    common.add_argument("--algo", choices=ALGORITHMS, default="IQRA")
    common.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    common.add_argument("--out", type=Path, help=f"output directory (${OUT_ENV} takes precedence)")
    common.add_argument("--iterations", type=int, help="agent steps (overrides run.iterations)")
    common.add_argument("--steps-per-action", type=int, dest="tti_per_step",
                        help="TTIs per agent step, 1-10 (overrides run.tti_per_step)")
    common.add_argument("--checkpoint", type=Path,
                        help="directory with <slice>_final.npz; required by eval, warm start for train")
    common.add_argument("--lut", type=Path, help="MCS lookup table CSV (overrides phy.lut_path)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="slicesim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="mode", required=True, parser_class=_Parser)
    sub.add_parser("train", parents=[common], help="train per-slice agents")
    sub.add_parser("eval", parents=[common], help="run trained agents greedily, no updates")
    sub.add_parser("baseline", parents=[common], help="maxSNR association, no agents")
    sub.add_parser("compare", parents=[common], help="IQRA, LIQRA and maxSNR on shared random streams")
    return p


def _print_summary(label: str, summary: dict) -> None:
    for sid, s in summary["slices"].items():
        delay = s["mean_delay_ms"]
        print(f"{label:7s} {sid:6s} thr={s['system_throughput_bps'] / 1e6:8.3f} Mbps "
              f"delay={'n/a' if delay is None else f'{delay:.3f} ms':>10s} "
              f"qos={s['qos_attainment']:.2f}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        run_over = {k: v for k, v in (("seed", args.seed), ("iterations", args.iterations),
                                      ("tti_per_step", args.tti_per_step)) if v is not None}
        phy_over = {"lut_path": str(args.lut)} if args.lut is not None else {}
        cfg = cfg.with_overrides(run=run_over, phy=phy_over)
        load_lut(cfg.phy.lut_path)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.mode == "eval" and args.checkpoint is None:
        print("config error: eval needs --checkpoint", file=sys.stderr)
        return EXIT_CONFIG

    plan = RunPlan(mode=args.mode, algorithm=args.algo, seed=args.seed, out_dir=args.out,
                   checkpoint=args.checkpoint)
    try:
        result = run(cfg, plan)
    except Exception as err:  # noqa: BLE001 - any failure inside the loop is a runtime abort
        log.debug("run aborted", exc_info=True)
        print(f"runtime abort: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    results = result if isinstance(result, dict) else {result.summary["algorithm"]: result}
    for algo, res in results.items():
        _print_summary(algo, res.summary)
    out = next(iter(results.values())).out_dir
    if out is not None:
        print(f"artifacts: {Path(out).parent if args.mode == 'compare' else out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
