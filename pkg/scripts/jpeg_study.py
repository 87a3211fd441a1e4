"""Measure recovery through JPEG-style compression with and without the
compression proxy in the optimization loop.

For each quality factor this embeds twice at the low-rate plan (1.5 bpp):
once with the differentiable proxy between perturbation and decoder, once
without, then applies the real quantized proxy to both stego images and
decodes.  The gap between the two recoveries is the value of optimizing
through the channel.

Usage:
    python3 scripts/jpeg_study.py --qualities 75 90 --out jpeg_study.csv
"""

import argparse
import csv
import sys

import numpy as np

from seedstego.codec import EmbedRequest, embed, plan_capacity
from seedstego.cover import ProceduralCover, generate_cover
from seedstego.distort import JpegProxyConfig, jpeg_proxy_forward, quantize8
from seedstego.images import resize_bilinear
from seedstego.keys import KeyMaterial, init_weights
from seedstego.metrics import psnr
from seedstego.nn import decoder_forward, default_decoder_spec
from seedstego.search import SpsConfig


def texture(seed: int, height: int, width: int) -> np.ndarray:
    img = generate_cover(ProceduralCover(cover_seed=seed, height=max(height, 32),
                                         width=max(width, 32)))
    if img.shape[1:] != (height, width):
        img = resize_bilinear(img, (height, width))
    return img


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=96, help="cover side length")
    ap.add_argument("--iters", type=int, default=1500)
    ap.add_argument("--qualities", type=int, nargs="*", default=[75, 90])
    ap.add_argument("--out", default=None, help="optional CSV path")
    args = ap.parse_args(argv)

    plan = plan_capacity(1.5)
    spec = default_decoder_spec(strides=plan.stride_plan)
    keys = KeyMaterial(cover_seed=0x5150, decoder_seeds=(0xBEEF,))
    provider = ProceduralCover(cover_seed=0x5150, height=args.size, width=args.size)
    secret = texture(0x77, args.size // 4, args.size // 4)
    weights = init_weights(spec, 0xBEEF)
    sps = SpsConfig(gamma=0.0, total_iters=args.iters,
                    gamma_start_iter=min(1400, args.iters))

    rows = []
    for q in args.qualities:
        jpeg = JpegProxyConfig(quality=q)
        for label, robustness in (("robust", jpeg), ("plain", None)):
            res = embed(EmbedRequest(keys=keys, secrets=(secret,),
                                     provider=provider, sps=sps,
                                     plan=plan, robustness=robustness))
            compressed = quantize8(jpeg_proxy_forward(res.stego, jpeg))
            rec = quantize8(decoder_forward(compressed - res.cover, spec, weights))
            after = psnr(rec, secret)
            lossless = res.report.recovery_psnr[0]
            rows.append((q, label, after, lossless, res.report.stego_psnr))
            print(f"q={q:3d} {label:6s} after-jpeg {after:6.2f} dB "
                  f"(lossless {lossless:6.2f} dB, stego {res.report.stego_psnr:6.2f} dB)")

    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["quality", "mode", "recovery_after_jpeg_db",
                        "recovery_lossless_db", "stego_psnr_db"])
            for r in rows:
                w.writerow([r[0], r[1], f"{r[2]:.4f}", f"{r[3]:.4f}", f"{r[4]:.4f}"])
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
