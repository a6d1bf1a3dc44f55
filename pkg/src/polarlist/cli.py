"""Command line: construct, simulate, latency, selftest.

Exit status 0 on success, 1 for invalid codes or decoder settings, 2 for
file errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .polar_code import CodeSpec, construct


class _IOFailure(Exception):
    pass


def _load_spec(path) -> CodeSpec:
    try:
        return CodeSpec.load(path)
    except OSError as exc:
        raise _IOFailure(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise _IOFailure(f"{path} is not valid JSON: {exc}") from None


def cmd_construct(args) -> int:
    spec = construct(args.n, args.k, args.crc_bits, args.design_snr, epsilon=args.epsilon,
                     p_b_lscd=args.p_b_lscd, se_snr_db=args.se_snr)
    try:
        spec.save(args.out)
    except OSError as exc:
        raise _IOFailure(f"cannot write {args.out}: {exc.strerror or exc}") from None
    print(f"N={spec.N} K={spec.K} r={spec.r} reliable={len(spec.reliable_set)} -> {args.out}")
    return 0


def cmd_simulate(args) -> int:
    from .plotting import plot_bler
    from .sim import SimConfig, parse_sweep, run_sweep

    spec = _load_spec(args.spec)
    out = Path(args.out)
    if not out.parent.is_dir():
        raise _IOFailure(f"output directory {out.parent} does not exist")
    cfg = SimConfig(spec, args.decoder, args.list, args.rt_index, parse_sweep(args.ebno),
                    args.max_frames, args.target_errors, args.seed, args.quantized, args.se,
                    args.se_epsilon, args.p_b_lscd, args.workers, instrument=args.instrument)

    def show(p):
        print(",".join(str(v) for v in p.row().values()), flush=True)

    print("ebno_db,frames,block_errors,bit_errors,bler,ber,crc_miss,seconds")
    res = run_sweep(cfg, on_point=show)
    try:
        res.write_csv(out)
        res.write_sidecar(out.with_suffix(".json"))
        if not args.no_plot:
            fig = plot_bler({f"{args.decoder} L={cfg.list_size}": res.points}, out.with_suffix(".png"))
            print(f"figure: {fig}", file=sys.stderr)
    except OSError as exc:
        raise _IOFailure(f"cannot write results next to {out}: {exc.strerror or exc}") from None
    return 0


def _read_counts(path):
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise _IOFailure(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise _IOFailure(f"{path} is not valid JSON: {exc}") from None
    if isinstance(doc, dict) and "counts" in doc:
        doc = doc["counts"]
    return doc


def cmd_latency(args) -> int:
    from .latency_model import latency_report

    spec = _load_spec(args.spec)
    counts = _read_counts(args.counts) if args.counts else None
    print(latency_report(spec, args.pe, counts).dumps())
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest(quick=not args.full) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polarlist", description="Polar list decoding laboratory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", help="build a code description (JSON)")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--k", type=int, required=True, help="information set size incl. CRC")
    c.add_argument("--crc-bits", type=int, default=16)
    c.add_argument("--design-snr", type=float, default=1.5)
    c.add_argument("--epsilon", type=float, help="bound for the reliable set (omit for none)")
    c.add_argument("--p-b-lscd", type=float, help="list decoder BLER used in the bound")
    c.add_argument("--se-snr", type=float, help="Eb/N0 for the reliable-set estimates (default: design)")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_construct)

    s = sub.add_parser("simulate", help="Monte Carlo BLER/BER sweep")
    s.add_argument("--spec", required=True)
    s.add_argument("--decoder", default="lscd-exact",
                   choices=["scd", "lscd-exact", "lscd-dts", "lscd-dts-advance"])
    s.add_argument("--list", type=int, default=16)
    s.add_argument("--rt-index", type=int)
    s.add_argument("--ebno", default="1.5", help="start:step:stop in dB, or one value")
    s.add_argument("--max-frames", type=int, default=10_000)
    s.add_argument("--target-errors", type=int, default=100)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--quantized", action="store_true")
    s.add_argument("--se", action="store_true", help="skip expansion on the stored reliable set")
    s.add_argument("--se-epsilon", type=float, help="choose the reliable set per point instead")
    s.add_argument("--p-b-lscd", type=float)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--instrument", action="store_true", help="count pruning steps and bound checks")
    s.add_argument("--no-plot", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    lt = sub.add_parser("latency", help="cycle counts of the decoder schedule")
    lt.add_argument("--spec", required=True)
    lt.add_argument("--pe", type=int, required=True, help="processing elements per decoder")
    lt.add_argument("--counts", help="JSON file with couple counts overriding the code's")
    lt.set_defaults(func=cmd_latency)

    st = sub.add_parser("selftest", help="run the invariant and oracle checks")
    st.add_argument("--full", action="store_true", help="larger sample sizes")
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse reports usage errors with status 2, which is kept for IO here
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
