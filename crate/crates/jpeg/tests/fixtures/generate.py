"""Regenerates the libjpeg reference fixtures.

    gcc -O2 -o jpeg_oracle jpeg_oracle.c -ljpeg
    python3 generate.py ./jpeg_oracle
"""
import subprocess
import sys

import numpy as np

ORACLE = sys.argv[1] if len(sys.argv) > 1 else "./jpeg_oracle"
rng = np.random.default_rng(20240611)


def document(h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    page = 200 + 30 * np.sin(xx / 13.0) * np.cos(yy / 17.0)
    page += rng.normal(0, 6, size=(h, w))
    for _ in range(max(2, (h * w) // 400)):
        y, x = rng.integers(0, h - 6), rng.integers(0, w - 10)
        page[y : y + rng.integers(2, 6), x : x + rng.integers(3, 10)] = rng.integers(10, 60)
    return np.clip(page, 0, 255).astype(np.uint8)


def write_pnm(path, img):
    if img.ndim == 2:
        header = b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0])
    else:
        header = b"P6\n%d %d\n255\n" % (img.shape[1], img.shape[0])
    with open(path, "wb") as f:
        f.write(header + img.tobytes())


cases = [
    # name, image, quality, restart rows, optimized huffman
    ("gray_q75", document(64, 64), 75, 0, 0),
    ("gray_odd_q50", document(60, 100), 50, 0, 0),
    ("color_q90", np.stack([document(40, 48), document(40, 48)[::-1], document(40, 48)[:, ::-1]], axis=2), 90, 0, 0),
    ("gray_restart_opt_q60", document(72, 80), 60, 2, 1),
]

for name, img, q, rst, opt in cases:
    src = f"{name}.src.pnm"
    write_pnm(src, img)
    subprocess.run([ORACLE, "encode", src, f"{name}.jpg", str(q), str(rst), str(opt)], check=True)
    subprocess.run([ORACLE, "dump", f"{name}.jpg", f"{name}.coeffs.txt"], check=True)
    subprocess.run([ORACLE, "decode", f"{name}.jpg", f"{name}.ref.pnm"], check=True)
