"""Command line entry point: ``qmfnet <command> ...``.

Commands print a human-readable table followed by a ``---`` line and a JSON
document, so the output can be read by eye or piped to a parser.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import bounds
from .network import NetworkError, cut_matrices, cutset_iid, read_network
from .pipeline import ConfigError, load_config, run_campaign
from .polar import construct, polar_decode, polar_encode
from .quantization import (
    build_zl_exact,
    build_zl_sampled,
    clopper_pearson,
    coupon_sample_count,
    format_noise_set,
)
from .seeding import SEED_ENV, resolve_seed, substream

DELIMITER = "---"


def _emit(table_lines, doc, out=None):
    out = out or sys.stdout
    for line in table_lines:
        print(line, file=out)
    print(DELIMITER, file=out)
    print(json.dumps(doc, indent=2, default=_jsonable), file=out)


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(type(obj).__name__)


def cmd_cutset(args):
    net = read_network(args.network)
    report = cutset_iid(net)
    width = max(len(", ".join(sorted(c))) for c, _ in report.per_cut)
    lines = [f"{'cut':<{width}}  bits"]
    for cut, bits in sorted(report.per_cut, key=lambda cv: (len(cv[0]), sorted(cv[0]))):
        lines.append(f"{', '.join(sorted(cut)):<{width}}  {bits:.6f}")
    lines.append(f"c_iid = {report.c_iid:.6f} bits, c_bar_upper = {report.c_bar_upper:.6f} bits")
    _emit(lines, report.to_dict())
    return 0


def cmd_bounds_all(args):
    net = read_network(args.network)
    report = cutset_iid(net)
    c_bar = args.c_bar if args.c_bar is not None else report.c_bar_upper
    n_nodes = len(net.nodes)
    params = bounds.select_params(c_bar, n_nodes, ell=args.ell)
    short = bounds.select_params(c_bar, n_nodes, ell_rule="short")
    ell = params.ell
    doc = {
        "cutset": {"c_iid": report.c_iid, "c_bar_upper": report.c_bar_upper, "c_bar_used": c_bar},
        "params": params.to_dict(),
        "params_short_rule": short.to_dict(),
        "rate_gap_holds": bounds.rate_gap_holds(params),
        "p_omega": bounds.p_omega_bound(c_bar, n_nodes, ell).to_dict(),
        "indistinguishability": bounds.indistinguishability_bound(params).to_dict(),
    }
    try:
        doc["inner_error_budget"] = bounds.inner_error_budget(ell, n_nodes).to_dict()
    except bounds.BlockLengthTooSmall as exc:
        doc["inner_error_budget"] = {"error": str(exc)}
    worst = min(report.per_cut, key=lambda cv: cv[1])[0]
    doc["box_bound_min_cut"] = [
        {"layer": l, "shape": list(H.shape), **bounds.box_bound_for(H, args.sigma_sq, ell).to_dict()}
        for l, H in cut_matrices(net, worst)
    ]
    q = min(max(params.p_i_bound, 1e-12), 0.499)
    doc["chernoff"] = {"k_chunks": args.chunks, "q": q, "bound": bounds.chernoff_bound(args.chunks, q)}

    def flag(b):
        return "vacuous" if b["vacuous"] else "ok"

    lines = [
        f"c_bar = {c_bar:.4f} bits over {n_nodes} nodes",
        f"l = {ell} ({params.ell_rule}), r_i = {params.r_i:g}, P_I <= {params.p_i_bound:.3g}, "
        f"r_o = {params.r_o:.6f}, overall = {params.overall_rate:.6f}",
        f"feasible = {params.feasible} {params.reason}".rstrip(),
        f"h(2 P_I) <= 1/c_bar: {params.entropy_check} "
        f"(short rule l = {short.ell}: {short.entropy_check})",
        f"P_Omega       log2 <= {doc['p_omega']['log2']:.4g}  [{flag(doc['p_omega'])}]",
        f"indisting.    log2 <= {doc['indistinguishability']['log2']:.4g}  "
        f"[{flag(doc['indistinguishability'])}]",
    ]
    for entry in doc["box_bound_min_cut"]:
        lines.append(f"box bound (layer {entry['layer']})  log2 <= {entry['log2']:.4g}  [{flag(entry)}]")
    lines.append(f"chernoff K={args.chunks}, q={q:.3g}: {doc['chernoff']['bound']:.4g}")
    _emit(lines, doc)
    return 0


def cmd_noise_set(args):
    seed = resolve_seed(args.seed)
    if args.sampled:
        count = args.sample_count if args.sample_count is not None else coupon_sample_count(args.ell)
        bundle = build_zl_sampled(args.ell, args.sigma, substream(seed, "zl"), sample_count=count)
    else:
        bundle = build_zl_exact(args.ell, args.sigma)
    text = format_noise_set(bundle)
    if args.out:
        Path(args.out).write_text(text)
    doc = {
        "ell": bundle.ell,
        "sigma": bundle.sigma,
        "threshold_log2": bundle.z_log_threshold,
        "construction": bundle.construction,
        "sample_count": bundle.sample_count,
        "z_size": bundle.z_size,
        "seed": seed,
        "out": args.out,
    }
    _emit([f"|Z_{bundle.ell}| = {bundle.z_size} ({bundle.construction})"], doc)
    return 0


POLAR_COLUMNS = ("n", "rate", "k", "p", "frames", "bit_errors", "ber", "block_errors", "bler", "bler_lo", "bler_hi", "seconds")


def polar_bench_rows(n, ps, rate, frames, seed, design=None, batch=1000):
    rows = []
    for idx, p in enumerate(ps):
        code = construct(n, design if design is not None else p, rate)
        rng = substream(seed, "polar-bench", idx)
        bit_err = blk_err = 0
        t0 = time.perf_counter()
        for start in range(0, frames, batch):
            m = min(batch, frames - start)
            msg = rng.integers(0, 2, (m, code.k), dtype=np.uint8)
            flips = (rng.random((m, n)) < p).astype(np.uint8)
            est = polar_decode(code, polar_encode(code, msg) ^ flips, p)
            wrong = est != msg
            bit_err += int(wrong.sum())
            blk_err += int(wrong.any(axis=1).sum())
        lo, hi = clopper_pearson(blk_err, frames, 0.95) if frames else (math.nan, math.nan)
        rows.append({
            "n": n,
            "rate": rate,
            "k": code.k,
            "p": p,
            "frames": frames,
            "bit_errors": bit_err,
            "ber": bit_err / (frames * code.k) if frames and code.k else 0.0,
            "block_errors": blk_err,
            "bler": blk_err / frames if frames else 0.0,
            "bler_lo": lo,
            "bler_hi": hi,
            "seconds": round(time.perf_counter() - t0, 4),
        })
    return rows


def cmd_polar_bench(args):
    seed = resolve_seed(args.seed)
    ps = [float(x) for x in args.p.split(",")]
    rows = polar_bench_rows(args.n, ps, args.rate, args.frames, seed, args.design)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=POLAR_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    sys.stdout.write(buf.getvalue())
    if args.out:
        out = Path(args.out)
        out.write_text(buf.getvalue())
        from .plotting import polar_bench_figure

        polar_bench_figure(rows, out.with_suffix(".png"))
    return 0


def cmd_simulate(args):
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    elif cfg.seed is None:
        changes["seed"] = resolve_seed(None)
    if args.frames is not None:
        changes["frames"] = args.frames
    if args.no_figures:
        changes["figures"] = False
    if changes:
        from dataclasses import replace

        cfg = replace(cfg, **changes)
    out_dir = args.out_dir or cfg.output or str(Path(args.config).with_suffix("")) + "_results"
    report = run_campaign(cfg, out_dir=out_dir, workers=args.workers)
    s = report.summary
    lines = [f"frames = {s['frames']}, chunks/frame = {s['layout']['chunks']}, seed = {s['seed']}"]
    if s["frames"]:
        lines.append(f"P_I hat = {s['p_i_hat']['value']:.4f}  CI95 {s['p_i_hat']['ci95']}")
        lines.append(f"FER = {s['fer']['value']:.4f}  CI95 {s['fer']['ci95']}")
        lines.append(f"completeness violations = {s['completeness_violations']}")
    lines.append(s["layout"]["padding_note"])
    for name, path in report.paths.items():
        lines.append(f"{name}: {path}")
    _emit(lines, {"summary": str(report.paths.get("summary")), "csv": str(report.paths.get("csv"))})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmfnet",
        description="Quantize-map-and-forward relay coding: bounds, noise sets, polar benchmarks, simulation.",
        epilog=f"Seeds default to ${SEED_ENV} when --seed is omitted.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", help="cut-set value and analytic bounds")
    bsub = b.add_subparsers(dest="which", required=True)
    bc = bsub.add_parser("cutset", help="i.i.d. Gaussian cut-set value over all cuts")
    bc.add_argument("--network", required=True)
    bc.set_defaults(func=cmd_cutset)
    ba = bsub.add_parser("all", help="scheme parameters and every bound")
    ba.add_argument("--network", required=True)
    ba.add_argument("--c-bar", type=float, help="override the cut-set surrogate")
    ba.add_argument("--ell", type=int, help="override the block length rule")
    ba.add_argument("--sigma-sq", type=float, default=1.0, help="input variance for the box bound")
    ba.add_argument("--chunks", type=int, default=1000, help="K for the Chernoff bound")
    ba.set_defaults(func=cmd_bounds_all)

    ns = sub.add_parser("noise-set", help="high-probability quantized noise sets")
    nsub = ns.add_subparsers(dest="which", required=True)
    nb = nsub.add_parser("build")
    nb.add_argument("--ell", type=int, required=True)
    mode = nb.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", default=True)
    mode.add_argument("--sampled", action="store_true")
    nb.add_argument("--sigma", type=float, default=1.0, help="per-component std (default 1)")
    nb.add_argument("--sample-count", type=int)
    nb.add_argument("--seed", type=int)
    nb.add_argument("--out")
    nb.set_defaults(func=cmd_noise_set)

    pb = sub.add_parser("polar-bench", help="polar code BER/BLER on a BSC")
    pb.add_argument("--n", type=int, required=True)
    pb.add_argument("--p", required=True, help="crossover, or a comma-separated list")
    pb.add_argument("--rate", type=float, required=True)
    pb.add_argument("--frames", type=int, default=1000)
    pb.add_argument("--design", type=float, help="design crossover (default: each p)")
    pb.add_argument("--seed", type=int)
    pb.add_argument("--out", help="also write the CSV here and a figure beside it")
    pb.set_defaults(func=cmd_polar_bench)

    sm = sub.add_parser("simulate", help="end-to-end Monte Carlo campaign")
    sm.add_argument("--config", required=True)
    sm.add_argument("--seed", type=int)
    sm.add_argument("--frames", type=int)
    sm.add_argument("--workers", type=int)
    sm.add_argument("--out-dir")
    sm.add_argument("--no-figures", action="store_true")
    sm.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NetworkError, ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
