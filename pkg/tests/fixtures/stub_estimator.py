"""Stand-in external estimator for protocol tests.

usage: stub_estimator.py MODE INPUT.pgm OUTPUT.dmap [ARG]

Output size is patch // 8 unless the mode says otherwise.
"""

import shutil
import struct
import sys
import time

import numpy as np


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos)
            continue
        end = pos
        while not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    w, h = int(fields[1]), int(fields[2])
    return np.frombuffer(data[pos + 1 : pos + 1 + w * h], np.uint8).reshape(h, w)


def write(path, values, magic=b"DMAP"):
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(magic + struct.pack("<II", w, h) + values.astype("<f4").tobytes())


def main():
    mode, inp, out = sys.argv[1:4]
    arg = sys.argv[4] if len(sys.argv) > 4 else None
    pixels = read_pgm(inp)
    h, w = pixels.shape[0] // 8, pixels.shape[1] // 8
    if mode == "zero":
        write(out, np.zeros((h, w)))
    elif mode == "uniform":
        write(out, np.full((h, w), float(arg)))
    elif mode == "copy":
        shutil.copyfile(arg, out)
    elif mode == "wrong-dims":
        write(out, np.zeros((h + 1, w)))
    elif mode == "bad-magic":
        write(out, np.zeros((h, w)), magic=b"PAMD")
    elif mode == "negative":
        write(out, np.full((h, w), -1.0))
    elif mode == "nan":
        write(out, np.full((h, w), np.nan))
    elif mode == "truncated":
        with open(out, "wb") as fh:
            fh.write(b"DMAP" + struct.pack("<II", w, h) + b"\0\0")
    elif mode == "no-output":
        pass
    elif mode == "fail":
        print("model exploded", file=sys.stderr)
        sys.exit(3)
    elif mode == "sleep":
        time.sleep(float(arg))
        write(out, np.zeros((h, w)))
    elif mode == "brightness":
        # crude detector: mean brightness above background per 8x8 block
        blocks = pixels[: h * 8, : w * 8].reshape(h, 8, w, 8).astype(float).mean(axis=(1, 3))
        write(out, np.maximum(blocks - 100.0, 0.0) / 155.0)
    else:
        sys.exit(f"unknown mode {mode}")


if __name__ == "__main__":
    main()
