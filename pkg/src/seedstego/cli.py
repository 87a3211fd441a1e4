"""Command-line operator surface.

Subcommands: keygen, cover, embed, extract, metrics, bench.  All of them
take one JSON config file (`--config`, defaults apply when omitted) and a
key file where relevant.  Exit codes: 0 success, 2 usage or bad config,
3 I/O failure, 4 protocol violation (wrong sizes, off-lattice stego,
mismatched keys), 5 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .codec import EmbedRequest, embed, extract
from .config import (
    RunConfig,
    default_config_json,
    load_run_config,
)
from .cover import FileBackedCover, ProceduralCover, generate_cover
from .errors import ConfigError, NumericsError, ProtocolError, ShapeError
from .images import load_png, save_png
from .keys import generate_key_material, load_key_file, save_key_file
from .metrics import psnr, residual_stats, ssim
from .search import write_trace_csv

_COVER_STREAM_LABELS = ("cover/tone",)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seedstego",
        description="Hide images in bounded perturbations of seed-reproducible covers.",
    )
    parser.add_argument(
        "--print-default-config",
        action="store_true",
        help="print the full default config JSON and exit",
    )
    sub = parser.add_subparsers(dest="command")

    def add_common(p):
        p.add_argument("--config", type=Path, default=None, help="run config JSON")
        p.add_argument(
            "--seed-report",
            action="store_true",
            help="print every seed and derived stream label consumed",
        )

    p = sub.add_parser("keygen", help="generate fresh key material")
    add_common(p)
    p.add_argument("--receivers", type=_positive_int, default=1)
    p.add_argument(
        "--init",
        default="xavier",
        help="weight init algorithm recorded in the key file",
    )
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("cover", help="regenerate and dump the cover image")
    add_common(p)
    p.add_argument("--keys", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("embed", help="embed secrets into a stego image")
    add_common(p)
    p.add_argument("--keys", type=Path, required=True)
    p.add_argument(
        "--secret",
        type=Path,
        action="append",
        required=True,
        help="secret PNG; repeat once per receiver",
    )
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--diagnostics", type=Path, default=None, help="write metrics CSV")
    p.add_argument(
        "--dump-recovered",
        type=Path,
        default=None,
        help="directory for self-check recovered images",
    )
    p.add_argument("--trace", type=Path, default=None, help="write loss trace CSV")

    p = sub.add_parser("extract", help="recover one receiver's secret from a stego image")
    add_common(p)
    p.add_argument("--keys", type=Path, required=True)
    p.add_argument("--receiver", type=int, default=0, help="receiver index")
    p.add_argument("--stego", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("metrics", help="compare two images")
    add_common(p)
    p.add_argument("image_a", type=Path)
    p.add_argument("image_b", type=Path)
    p.add_argument("--csv", action="store_true", help="emit CSV instead of aligned text")

    p = sub.add_parser("bench", help="embed/extract every secret in a directory")
    add_common(p)
    p.add_argument("--keys", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True, help="directory of secret PNGs")
    p.add_argument("--out", type=Path, required=True, help="results CSV")
    return parser


def _load_config(args) -> RunConfig:
    if args.config is None:
        return RunConfig()
    return load_run_config(args.config)


def _seed_report(keys, cfg: RunConfig, stream=None) -> None:
    if stream is None:
        stream = sys.stderr
    spec = cfg.build_decoder_spec()
    print(f"seed-report: cover_seed {keys.cover_seed:#x}", file=stream)
    if cfg.provider.kind == "procedural":
        labels = ["cover/tone"]
        for o in range(4):
            labels.append(f"cover/luma/{o}")
        for c in range(3):
            for o in range(4):
                labels.append(f"cover/chroma/{c}/{o}")
        for label in labels:
            print(f"seed-report:   stream {label}", file=stream)
    for t, seed in enumerate(keys.decoder_seeds):
        print(f"seed-report: decoder_seed[{t}] {seed:#x}", file=stream)
        for i in range(len(spec.layers)):
            print(f"seed-report:   stream weights/{i}", file=stream)


def _cmd_keygen(args) -> int:
    cfg = _load_config(args)
    keys = generate_key_material(args.receivers, args.init)
    save_key_file(keys, args.out)
    if args.seed_report:
        _seed_report(keys, cfg)
    print(f"wrote {args.out} ({keys.receivers} receiver(s), {keys.init_algorithm} init)")
    return 0


def _cmd_cover(args) -> int:
    cfg = _load_config(args)
    keys = load_key_file(args.keys)
    if args.seed_report:
        _seed_report(keys, cfg)
    provider = cfg.build_provider(keys.cover_seed)
    cover = generate_cover(provider, multiple_of=cfg.build_plan().stride_product)
    save_png(cover, args.out)
    print(f"wrote {args.out} ({cover.shape[2]}x{cover.shape[1]})")
    return 0


def _write_diagnostics(path, result, floor_db: float) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["stego_psnr_db", f"{result.report.stego_psnr:.6f}"])
        writer.writerow(["stego_ssim", f"{result.report.stego_ssim:.6f}"])
        writer.writerow(["residual_linf", f"{result.report.residual_linf:.8f}"])
        writer.writerow(["residual_l2", f"{result.report.residual_l2:.8f}"])
        for t, (p, s) in enumerate(
            zip(result.report.recovery_psnr, result.report.recovery_ssim)
        ):
            writer.writerow([f"recovery_psnr_db_{t}", f"{p:.6f}"])
            writer.writerow([f"recovery_ssim_{t}", f"{s:.6f}"])
        writer.writerow(["selfcheck_floor_db", f"{floor_db:.2f}"])
        for w in result.warnings:
            writer.writerow(["warning", w])


def _cmd_embed(args) -> int:
    cfg = _load_config(args)
    keys = load_key_file(args.keys)
    if len(args.secret) != keys.receivers:
        raise ConfigError(
            f"{len(args.secret)} secret(s) given but key file has "
            f"{keys.receivers} receiver(s)"
        )
    if args.seed_report:
        _seed_report(keys, cfg)
    secrets = tuple(load_png(p) for p in args.secret)
    request = EmbedRequest(
        keys=keys,
        secrets=secrets,
        provider=cfg.build_provider(keys.cover_seed),
        sps=cfg.sps,
        plan=cfg.build_plan(),
        robustness=cfg.build_robustness(),
        critics=cfg.build_critics(),
        decoder_spec=cfg.build_decoder_spec(),
        selfcheck_floor_db=cfg.selfcheck_floor_db,
    )
    result = embed(request)
    save_png(result.stego, args.out)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.diagnostics is not None:
        _write_diagnostics(args.diagnostics, result, cfg.selfcheck_floor_db)
    trace_path = args.trace if args.trace is not None else cfg.trace_csv
    if trace_path is not None:
        write_trace_csv(list(result.trace), cfg.sps, trace_path)
    if args.dump_recovered is not None:
        args.dump_recovered.mkdir(parents=True, exist_ok=True)
        for t, rec in enumerate(result.recovered):
            save_png(rec, args.dump_recovered / f"recovered_{t}.png")
    print(
        f"wrote {args.out}  stego {result.report.stego_psnr:.2f} dB  "
        + "  ".join(
            f"recovery[{t}] {p:.2f} dB"
            for t, p in enumerate(result.report.recovery_psnr)
        )
    )
    return 0


def _cmd_extract(args) -> int:
    cfg = _load_config(args)
    keys = load_key_file(args.keys)
    if not 0 <= args.receiver < keys.receivers:
        raise ConfigError(
            f"receiver index {args.receiver} out of range for "
            f"{keys.receivers} receiver(s)"
        )
    if args.seed_report:
        _seed_report(keys, cfg)
    stego = load_png(args.stego)
    recovered = extract(
        stego,
        keys,
        args.receiver,
        cfg.build_provider(keys.cover_seed),
        cfg.build_plan(),
        decoder_spec=cfg.build_decoder_spec(),
    )
    save_png(recovered, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_metrics(args) -> int:
    a = load_png(args.image_a)
    b = load_png(args.image_b)
    p = psnr(a, b)
    s = ssim(a, b)
    linf, l2 = residual_stats(a, b)
    if args.csv:
        print("psnr_db,ssim,linf,l2")
        print(f"{p:.6f},{s:.6f},{linf:.8f},{l2:.8f}")
    else:
        print(f"psnr_db  {p:10.4f}")
        print(f"ssim     {s:10.6f}")
        print(f"linf     {linf:10.6f}")
        print(f"l2       {l2:10.6f}")
    return 0


def _cmd_bench(args) -> int:
    cfg = _load_config(args)
    keys = load_key_file(args.keys)
    if keys.receivers != 1:
        raise ConfigError("bench expects a single-receiver key file")
    if not args.dataset.is_dir():
        raise ConfigError(f"dataset {args.dataset} is not a directory")
    if args.seed_report:
        _seed_report(keys, cfg)
    rows = []
    for path in sorted(args.dataset.glob("*.png")):
        try:
            secret = load_png(path)
        except (OSError, ShapeError) as exc:
            print(f"warning: skipping {path.name}: {exc}", file=sys.stderr)
            continue
        request = EmbedRequest(
            keys=keys,
            secrets=(secret,),
            provider=cfg.build_provider(keys.cover_seed),
            sps=cfg.sps,
            plan=cfg.build_plan(),
            robustness=cfg.build_robustness(),
            critics=cfg.build_critics(),
            decoder_spec=cfg.build_decoder_spec(),
            selfcheck_floor_db=cfg.selfcheck_floor_db,
        )
        result = embed(request)
        rows.append(
            (
                path.name,
                result.report.stego_psnr,
                result.report.stego_ssim,
                result.report.recovery_psnr[0],
                result.report.recovery_ssim[0],
            )
        )
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["image", "stego_psnr_db", "stego_ssim", "recovery_psnr_db", "recovery_ssim"]
        )
        for name, sp, ss, rp, rs in rows:
            writer.writerow([name, f"{sp:.6f}", f"{ss:.6f}", f"{rp:.6f}", f"{rs:.6f}"])
        if rows:
            n = len(rows)
            writer.writerow(
                [
                    "mean",
                    f"{sum(r[1] for r in rows) / n:.6f}",
                    f"{sum(r[2] for r in rows) / n:.6f}",
                    f"{sum(r[3] for r in rows) / n:.6f}",
                    f"{sum(r[4] for r in rows) / n:.6f}",
                ]
            )
    print(f"wrote {args.out} ({len(rows)} image(s))")
    return 0


_DISPATCH = {
    "keygen": _cmd_keygen,
    "cover": _cmd_cover,
    "embed": _cmd_embed,
    "extract": _cmd_extract,
    "metrics": _cmd_metrics,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_default_config:
        sys.stdout.write(default_config_json())
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("error: a subcommand is required", file=sys.stderr)
        return 2
    try:
        return _DISPATCH[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except (ProtocolError, ShapeError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return 4
    except NumericsError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
