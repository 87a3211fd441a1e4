"""Share one stego image among several receivers and audit isolation.

Embeds T secrets into one cover with T independently seeded decoders,
then prints the full recovery matrix: receiver t's decoder output scored
against every secret u.  The diagonal should be high (own secret) and the
off-diagonal low (a sibling's decoder reveals nothing useful).

Usage:
    python3 scripts/multi_receiver_study.py --receivers 1 2 4 --iters 400
"""

import argparse
import csv
import sys

import numpy as np

from seedstego.codec import EmbedRequest, cross_recovery_psnr, embed
from seedstego.cover import ProceduralCover, generate_cover
from seedstego.images import resize_bilinear
from seedstego.keys import KeyMaterial
from seedstego.search import SpsConfig


def texture(seed: int, height: int, width: int) -> np.ndarray:
    img = generate_cover(ProceduralCover(cover_seed=seed, height=max(height, 32),
                                         width=max(width, 32)))
    if img.shape[1:] != (height, width):
        img = resize_bilinear(img, (height, width))
    return img


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=64, help="cover side length")
    ap.add_argument("--iters", type=int, default=400)
    ap.add_argument("--receivers", type=int, nargs="*", default=[1, 2, 4])
    ap.add_argument("--out", default=None, help="optional CSV path")
    args = ap.parse_args(argv)

    provider = ProceduralCover(cover_seed=0xA600, height=args.size, width=args.size)
    sps = SpsConfig(gamma=0.0, total_iters=args.iters, gamma_start_iter=args.iters)
    rows = []
    for t_count in args.receivers:
        keys = KeyMaterial(
            cover_seed=0xA600,
            decoder_seeds=tuple(0xB600 + t for t in range(t_count)),
        )
        secrets = tuple(
            texture(0xC60 + t, args.size // 2, args.size // 2)
            for t in range(t_count)
        )
        res = embed(EmbedRequest(keys=keys, secrets=secrets,
                                 provider=provider, sps=sps))
        mat = cross_recovery_psnr(res, secrets)
        diag = np.diag(mat)
        off = mat[~np.eye(t_count, dtype=bool)]
        print(f"T={t_count}: stego {res.report.stego_psnr:6.2f} dB, "
              f"self recovery mean {diag.mean():6.2f} dB"
              + (f", cross mean {off.mean():6.2f} dB" if off.size else ""))
        for t in range(t_count):
            for u in range(t_count):
                rows.append((t_count, t, u, mat[t, u]))

    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["receivers", "decoder", "secret", "psnr_db"])
            for r in rows:
                w.writerow([r[0], r[1], r[2], f"{r[3]:.4f}"])
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
