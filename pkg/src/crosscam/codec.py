"""Byte-exact transmission cost model.

The toy codec is lossless: intra frames code horizontal-predictor
residuals, delta frames code the pixelwise difference against an earlier
frame, both through the same (value, varint run) run-length stage; the
smaller payload wins. An analytic size model covers the bitrate
arithmetic for real encoders that the toy codec makes no attempt to
match. KB means 1000 bytes and kbps means 1000 bits per second
throughout.
"""

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from crosscam import _kernels
from crosscam.errors import ConfigError, DecodeError, ProtocolError, ShapeError
from crosscam.scenario import Frame

INTRA = "intra"
DELTA = "delta"

STREAM_MAGIC = b"CCST"
STREAM_VERSION = 1
_HEADER = struct.Struct("<4sBHHII")  # magic, version, width, height, camera_id, frame count
_RECORD = struct.Struct("<IBII")  # t, mode, reference offset (records back), payload length
_CRC = struct.Struct("<I")
RECORD_OVERHEAD = _RECORD.size + _CRC.size


@dataclass
class EncodedFrame:
    camera_id: int
    t: int
    payload: bytes
    mode: str  # intra | delta
    reference_t: int | None
    checksum: int  # crc32 of the source pixels
    width: int
    height: int

    @property
    def payload_bytes(self) -> int:
        return len(self.payload)


@dataclass
class LinkModel:
    uplink_kbps: float = 5000.0
    fps: float = 30.0
    frame_width: int = 160
    frame_height: int = 120

    def validate(self) -> None:
        if self.uplink_kbps <= 0:
            raise ConfigError("uplink_kbps must be > 0")
        if self.fps <= 0:
            raise ConfigError("fps must be > 0")


@dataclass
class TransmissionReport:
    total_bytes: int
    duration_s: float
    bitrate_kbps: float
    utilization_pct: float
    per_stage_bytes: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "total_bytes": self.total_bytes,
            "duration_s": self.duration_s,
            "bitrate_kbps": self.bitrate_kbps,
            "utilization_pct": self.utilization_pct,
            "per_stage_bytes": dict(self.per_stage_bytes),
        }


def _residuals_intra(pixels: np.ndarray) -> np.ndarray:
    res = pixels.copy()
    res[:, 1:] = pixels[:, 1:] - pixels[:, :-1]  # uint8 wraparound is the mod-256 predictor
    return res


def _reconstruct_intra(res: np.ndarray) -> np.ndarray:
    return (res.astype(np.uint64).cumsum(axis=1) % 256).astype(np.uint8)


def encode_frame(frame: Frame, reference: Frame | None = None) -> EncodedFrame:
    """Losslessly encode a frame, choosing the smaller of intra and delta."""
    pixels = frame.pixels
    intra_payload = _kernels.rle_encode(_residuals_intra(pixels))
    mode = INTRA
    payload = intra_payload
    reference_t = None
    if reference is not None:
        if reference.pixels.shape != pixels.shape:
            raise ShapeError(
                f"reference shape {reference.pixels.shape} != frame shape {pixels.shape}"
            )
        delta_payload = _kernels.rle_encode(pixels - reference.pixels)
        if len(delta_payload) < len(intra_payload):
            mode = DELTA
            payload = delta_payload
            reference_t = reference.t
    return EncodedFrame(
        camera_id=frame.camera_id,
        t=frame.t,
        payload=payload,
        mode=mode,
        reference_t=reference_t,
        checksum=zlib.crc32(pixels.tobytes()),
        width=pixels.shape[1],
        height=pixels.shape[0],
    )


def decode_frame(enc: EncodedFrame, reference: Frame | None = None) -> Frame:
    """Exact inverse of encode_frame; checksum guards the reference chain."""
    n = enc.width * enc.height
    try:
        flat = np.frombuffer(_kernels.rle_decode(enc.payload, n), dtype=np.uint8)
    except ValueError as exc:
        raise DecodeError(str(exc)) from exc
    plane = flat.reshape(enc.height, enc.width)
    if enc.mode == INTRA:
        pixels = _reconstruct_intra(plane)
    elif enc.mode == DELTA:
        if reference is None:
            raise ProtocolError(f"delta frame t={enc.t} needs its reference frame")
        if reference.pixels.shape != (enc.height, enc.width):
            raise ShapeError("reference dimensions do not match encoded frame")
        pixels = plane + reference.pixels  # uint8 wraparound inverts the difference
    else:
        raise DecodeError(f"unknown mode {enc.mode!r}")
    if zlib.crc32(pixels.tobytes()) != enc.checksum:
        raise DecodeError(f"checksum mismatch on frame t={enc.t} (wrong or corrupt reference?)")
    return Frame(camera_id=enc.camera_id, t=enc.t, pixels=pixels)


def encode_stream(frames) -> list:
    """Encode a time-ordered single-camera sequence with delta chaining."""
    encoded = []
    previous = None
    for frame in frames:
        encoded.append(encode_frame(frame, previous))
        previous = frame
    return encoded


def decode_stream(encoded) -> list:
    frames = []
    by_t = {}
    for enc in encoded:
        reference = None
        if enc.mode == DELTA:
            if enc.reference_t not in by_t:
                raise ProtocolError(f"delta frame t={enc.t} references missing t={enc.reference_t}")
            reference = by_t[enc.reference_t]
        frame = decode_frame(enc, reference)
        by_t[frame.t] = frame
        frames.append(frame)
    return frames


def stream_bytes(encoded) -> int:
    """Container size of an encoded stream: header plus framed records."""
    return _HEADER.size + sum(RECORD_OVERHEAD + len(e.payload) for e in encoded)


def write_stream(encoded, path) -> None:
    """Container: magic, version, dims, then length-prefixed checksummed records."""
    if not encoded:
        raise ConfigError("refusing to write an empty stream")
    width, height, camera_id = encoded[0].width, encoded[0].height, encoded[0].camera_id
    index_by_t = {e.t: i for i, e in enumerate(encoded)}
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(STREAM_MAGIC, STREAM_VERSION, width, height, camera_id, len(encoded)))
        for i, enc in enumerate(encoded):
            offset = 0
            if enc.mode == DELTA:
                offset = i - index_by_t[enc.reference_t]
            fh.write(_RECORD.pack(enc.t, 1 if enc.mode == DELTA else 0, offset, len(enc.payload)))
            fh.write(enc.payload)
            fh.write(_CRC.pack(enc.checksum))


def read_stream(path) -> list:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise DecodeError("stream header truncated")
        magic, version, width, height, camera_id, count = _HEADER.unpack(header)
        if magic != STREAM_MAGIC:
            raise DecodeError(f"bad magic {magic!r}")
        if version != STREAM_VERSION:
            raise DecodeError(f"unsupported stream version {version}")
        encoded = []
        ts = []
        for _ in range(count):
            rec = fh.read(_RECORD.size)
            if len(rec) < _RECORD.size:
                raise DecodeError("record header truncated")
            t, mode_byte, offset, length = _RECORD.unpack(rec)
            payload = fh.read(length)
            crc_raw = fh.read(_CRC.size)
            if len(payload) < length or len(crc_raw) < _CRC.size:
                raise DecodeError(f"record t={t} truncated")
            reference_t = None
            if mode_byte == 1:
                if not 0 < offset <= len(ts):
                    raise DecodeError(f"record t={t} has invalid reference offset {offset}")
                reference_t = ts[len(ts) - offset]
            encoded.append(
                EncodedFrame(
                    camera_id=camera_id,
                    t=t,
                    payload=payload,
                    mode=DELTA if mode_byte == 1 else INTRA,
                    reference_t=reference_t,
                    checksum=_CRC.unpack(crc_raw)[0],
                    width=width,
                    height=height,
                )
            )
            ts.append(t)
    return encoded


def analytic_size(width: int, height: int, fps: float, duration_s: float, quality_factor: float) -> float:
    """Modeled stream size in bytes.

    ``quality_factor`` is bits per pixel, so size is linear in it:
    bytes = width * height * fps * duration_s * quality_factor / 8.
    """
    if width <= 0 or height <= 0 or fps <= 0 or quality_factor <= 0:
        raise ConfigError("analytic_size arguments must be positive")
    if duration_s < 0:
        raise ConfigError("duration_s must be >= 0")
    return width * height * fps * duration_s * quality_factor / 8.0


def transmission_report(total_bytes, duration_s: float, link: LinkModel, per_stage_bytes=None) -> TransmissionReport:
    """Bitrate and uplink utilization for a transmitted byte count."""
    link.validate()
    if duration_s <= 0:
        raise ConfigError("duration_s must be > 0")
    bitrate_kbps = total_bytes * 8.0 / 1000.0 / duration_s
    return TransmissionReport(
        total_bytes=total_bytes,
        duration_s=duration_s,
        bitrate_kbps=bitrate_kbps,
        utilization_pct=100.0 * bitrate_kbps / link.uplink_kbps,
        per_stage_bytes=dict(per_stage_bytes or {}),
    )


def reduction_pct(before: float, after: float) -> float:
    """Percent reduction from before to after (bytes, kbps, anything linear)."""
    if before <= 0:
        raise ConfigError("baseline must be > 0")
    return 100.0 * (before - after) / before
