"""Compare the compiled kernels against the numpy fallback.

Run:  python3 benchmarks/bench_kernels.py [--frames N] [--size WxH]

Times SSIM scoring and an RLE encode/decode roundtrip over a batch of
synthetic frames (random noise plus a flat-background frame with a few
rectangles, which is the shape the codec actually sees).
"""

import argparse
import time

import numpy as np

from crosscam._kernels import _native, pure


def _frames(count, width, height, seed=0):
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(count):
        if i % 2:
            img = rng.integers(0, 256, (height, width), dtype=np.uint8)
        else:
            img = np.full((height, width), 64, dtype=np.uint8)
            for _ in range(4):
                x0, y0 = rng.integers(0, width - 8), rng.integers(0, height - 8)
                img[y0 : y0 + 8, x0 : x0 + 8] = rng.integers(0, 256)
        frames.append(img)
    return frames


def _time(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=60)
    parser.add_argument("--size", default="320x240")
    args = parser.parse_args()
    width, height = (int(v) for v in args.size.split("x"))
    frames = _frames(args.frames, width, height)
    pairs = list(zip(frames, frames[1:]))

    def ssim_pure():
        for a, b in pairs:
            pure.ssim(a, b)

    def rle_pure():
        for f in frames:
            payload = pure.rle_encode(f)
            pure.rle_decode(payload, f.size)

    rows = [("pure", _time(ssim_pure), _time(rle_pure))]

    if _native is None:
        print("compiled extension not available; only the fallback was timed")
    else:
        flat = [np.ascontiguousarray(f).reshape(-1) for f in frames]
        flat_pairs = list(zip(flat, flat[1:]))

        def ssim_native():
            for a, b in flat_pairs:
                _native.ssim(a, b, width, height, 8)

        def rle_native():
            for f in flat:
                payload = _native.rle_encode(f)
                _native.rle_decode(np.frombuffer(payload, dtype=np.uint8), f.shape[0])

        rows.append(("native", _time(ssim_native), _time(rle_native)))

    print(f"{args.frames} frames of {width}x{height}")
    print(f"{'backend':<8}{'ssim':>12}{'rle roundtrip':>16}")
    for name, t_ssim, t_rle in rows:
        print(f"{name:<8}{t_ssim * 1e3:>10.1f}ms{t_rle * 1e3:>14.1f}ms")
    if len(rows) == 2:
        print(
            f"{'speedup':<8}{rows[0][1] / rows[1][1]:>11.1f}x{rows[0][2] / rows[1][2]:>15.1f}x"
        )


if __name__ == "__main__":
    main()
