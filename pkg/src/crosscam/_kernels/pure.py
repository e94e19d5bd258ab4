"""Numpy implementations of the hot per-pixel kernels.

These are the fallback used when the compiled extension is unavailable
(and the reference the extension is checked against). All functions
operate on 2-D uint8 arrays or raw byte strings.
"""

import numpy as np

BACKEND = "pure"

# SSIM stabilizers for 8-bit luminance (L = 255).
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2


def ssim(a: np.ndarray, b: np.ndarray, window: int = 8) -> float:
    """Mean SSIM over non-overlapping ``window``-sized blocks.

    Partial blocks at the right/bottom edges are included with their true
    pixel counts. Statistics use population variance, so identical inputs
    score exactly 1.0.
    """
    h, w = a.shape
    row_edges = np.arange(0, h, window)
    col_edges = np.arange(0, w, window)
    af = a.astype(np.float64)
    bf = b.astype(np.float64)

    def block_sum(x):
        return np.add.reduceat(np.add.reduceat(x, row_edges, axis=0), col_edges, axis=1)

    row_counts = np.diff(np.r_[row_edges, h])
    col_counts = np.diff(np.r_[col_edges, w])
    n = row_counts[:, None] * col_counts[None, :]

    mu_a = block_sum(af) / n
    mu_b = block_sum(bf) / n
    var_a = block_sum(af * af) / n - mu_a * mu_a
    var_b = block_sum(bf * bf) / n - mu_b * mu_b
    cov = block_sum(af * bf) / n - mu_a * mu_b

    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    scores = num / den
    # sum window scores sequentially in row-major order (not numpy's
    # pairwise reduction) so both backends produce identical doubles
    total = 0.0
    for value in scores.ravel().tolist():
        total += value
    return total / scores.size


def nmse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared pixel difference normalized by the squared 255 range."""
    diff = a.astype(np.int64) - b.astype(np.int64)
    # the integer sum of squares is exact, so both backends round identically
    total = float(np.sum(diff * diff))
    return total / (diff.size * 255.0 * 255.0)


def rle_encode(data) -> bytes:
    """Run-length encode bytes as (value, varint run) pairs.

    Runs are unbounded; the run length is emitted as a little-endian
    base-128 varint (high bit = continuation), so a constant buffer of any
    size costs a handful of bytes.
    """
    arr = np.frombuffer(bytes(data), dtype=np.uint8) if not isinstance(data, np.ndarray) else data
    arr = np.ascontiguousarray(arr, dtype=np.uint8).ravel()
    size = arr.size
    if size == 0:
        return b""
    starts = np.r_[0, np.flatnonzero(arr[1:] != arr[:-1]) + 1]
    runs = np.diff(np.r_[starts, size])
    values = arr[starts]
    if runs.max() < 128:
        # common case: every run fits a single varint byte
        out = np.empty((len(runs), 2), dtype=np.uint8)
        out[:, 0] = values
        out[:, 1] = runs
        return out.tobytes()
    parts = bytearray()
    for value, run in zip(values.tolist(), runs.tolist()):
        parts.append(value)
        while True:
            low = run & 0x7F
            run >>= 7
            parts.append(low | (0x80 if run else 0))
            if not run:
                break
    return bytes(parts)


def rle_decode(payload: bytes, out_len: int) -> bytes:
    """Inverse of :func:`rle_encode`; raises ValueError on malformed input."""
    out = np.empty(out_len, dtype=np.uint8)
    buf = bytes(payload)
    total = len(buf)
    pos = 0
    i = 0
    while i < total:
        value = buf[i]
        i += 1
        run = 0
        shift = 0
        while True:
            if i >= total:
                raise ValueError("truncated payload: run length cut short")
            byte = buf[i]
            i += 1
            run |= (byte & 0x7F) << shift
            shift += 7
            if not byte & 0x80:
                break
        if run == 0:
            raise ValueError("malformed payload: zero-length run")
        if pos + run > out_len:
            raise ValueError("malformed payload: runs exceed output size")
        out[pos : pos + run] = value
        pos += run
    if pos != out_len:
        raise ValueError(f"short payload: decoded {pos} of {out_len} bytes")
    return out.tobytes()
