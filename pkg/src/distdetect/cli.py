"""Command-line entry point: ``distdetect <command> [flags]``.

Exit codes: 0 success, 1 verification or runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments
from .verify import run_verify

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--trials", type=int)
    common.add_argument("--k-list", dest="k_list", type=_int_list, help="e.g. 5,10,15,20")
    common.add_argument("--snr-list", dest="snr_list", type=_float_list, help="SNR values in dB, e.g. -5,0")
    common.add_argument("--epochs", type=int)
    common.add_argument("--batch-size", dest="B", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--K", dest="K", type=int, help="sensor count used to train the controller")
    common.add_argument("--T", dest="T", type=int, help="training set size")
    common.add_argument("--workers", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="distdetect", description="Distributed detection with learned binary quantizers.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="generate training datasets")
    tr = sub.add_parser("train", parents=[common], help="two-stage training")
    tr.add_argument("--resume", action="store_true", help="continue from saved training state")
    tr.add_argument("--stop-after", dest="stop_after", type=int, help="interrupt each stage after N epochs")
    sub.add_parser("baseline", parents=[common], help="Chernoff-optimal threshold per SNR")
    sub.add_parser("sweep", parents=[common], help="Monte Carlo error over the K and SNR grid")
    sub.add_parser("verify", parents=[common], help="run the property suite")
    sub.add_parser("report", parents=[common], help="summarise existing outputs")
    return p


_CONFIG_KEYS = ("seed", "out_dir", "trials", "k_list", "snr_list", "epochs", "B", "lr", "K", "T", "workers")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "verify":
        results = run_verify()
        for r in results:
            print(r.line())
        failed = [r for r in results if not r.passed]
        print(f"{len(results) - len(failed)}/{len(results)} checks passed")
        return EXIT_FAIL if failed else EXIT_OK

    try:
        cfg = experiments.load_config(args.config, {k: getattr(args, k) for k in _CONFIG_KEYS})
    except (ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"distdetect {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        experiments.write_snapshot(cfg, args.command)
        if args.command == "gen-data":
            for path in experiments.gen_data(cfg):
                print(path)
        elif args.command == "train":
            status = experiments.train(cfg, resume=args.resume, stop_after=args.stop_after)
            for snr, state in status.items():
                print(f"{snr:g} dB: {state}")
        elif args.command == "baseline":
            for snr, b in experiments.baseline(cfg).items():
                print(f"{snr:g} dB: tau*={b.tau_star:.9f} gammas=({b.gamma0:.6f}, {b.gamma1:.6f}) chernoff={b.chernoff:.6f}")
        elif args.command == "sweep":
            print(experiments.sweep(cfg))
        elif args.command == "report":
            print(experiments.report(cfg))
    except (OSError, FloatingPointError) as exc:
        print(f"distdetect {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
