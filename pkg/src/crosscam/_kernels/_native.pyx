# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the per-pixel kernels (see pure.py for reference)."""

from libc.stdint cimport uint8_t, int64_t, uint64_t

BACKEND = "native"

cdef double SSIM_C1 = (0.01 * 255.0) ** 2
cdef double SSIM_C2 = (0.03 * 255.0) ** 2


def ssim(const uint8_t[::1] a, const uint8_t[::1] b,
         Py_ssize_t width, Py_ssize_t height, Py_ssize_t window=8):
    cdef Py_ssize_t by, bx, y, x, bh, bw, base
    cdef int64_t sa, sb, saa, sbb, sab
    cdef double n, mu_a, mu_b, var_a, var_b, cov, num, den
    cdef double total = 0.0
    cdef Py_ssize_t blocks = 0
    cdef int64_t va, vb

    by = 0
    while by < height:
        bh = window if height - by >= window else height - by
        bx = 0
        while bx < width:
            bw = window if width - bx >= window else width - bx
            sa = sb = saa = sbb = sab = 0
            for y in range(by, by + bh):
                base = y * width
                for x in range(bx, bx + bw):
                    va = a[base + x]
                    vb = b[base + x]
                    sa += va
                    sb += vb
                    saa += va * va
                    sbb += vb * vb
                    sab += va * vb
            n = <double> (bh * bw)
            mu_a = sa / n
            mu_b = sb / n
            var_a = saa / n - mu_a * mu_a
            var_b = sbb / n - mu_b * mu_b
            cov = sab / n - mu_a * mu_b
            num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
            den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
            total += num / den
            blocks += 1
            bx += window
        by += window
    return total / blocks


def nmse(const uint8_t[::1] a, const uint8_t[::1] b):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef int64_t d
    cdef double acc = 0.0
    for i in range(n):
        d = <int64_t> a[i] - <int64_t> b[i]
        acc += d * d
    return acc / (n * 255.0 * 255.0)


def rle_encode(const uint8_t[::1] data):
    cdef Py_ssize_t n = data.shape[0]
    if n == 0:
        return b""
    # worst case is alternating values: 2 bytes per input byte
    out = bytearray(2 * n)
    cdef uint8_t[::1] ov = out
    cdef Py_ssize_t i = 0, pos = 0
    cdef uint8_t value
    cdef uint64_t run
    while i < n:
        value = data[i]
        run = 1
        i += 1
        while i < n and data[i] == value:
            run += 1
            i += 1
        ov[pos] = value
        pos += 1
        while True:
            if run >= 128:
                ov[pos] = <uint8_t> ((run & 0x7F) | 0x80)
                run >>= 7
                pos += 1
            else:
                ov[pos] = <uint8_t> run
                pos += 1
                break
    return bytes(out[:pos])


def rle_decode(const uint8_t[::1] payload, Py_ssize_t out_len):
    out = bytearray(out_len)
    cdef uint8_t[::1] ov = out
    cdef Py_ssize_t total = payload.shape[0]
    cdef Py_ssize_t i = 0, pos = 0, j
    cdef uint8_t value, byte
    cdef uint64_t run
    cdef int shift
    while i < total:
        value = payload[i]
        i += 1
        run = 0
        shift = 0
        while True:
            if i >= total:
                raise ValueError("truncated payload: run length cut short")
            byte = payload[i]
            i += 1
            run |= (<uint64_t> (byte & 0x7F)) << shift
            shift += 7
            if not byte & 0x80:
                break
        if run == 0:
            raise ValueError("malformed payload: zero-length run")
        if pos + <Py_ssize_t> run > out_len:
            raise ValueError("malformed payload: runs exceed output size")
        for j in range(pos, pos + <Py_ssize_t> run):
            ov[j] = value
        pos += <Py_ssize_t> run
    if pos != out_len:
        raise ValueError(f"short payload: decoded {pos} of {out_len} bytes")
    return bytes(out)
