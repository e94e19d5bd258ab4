"""Deterministic synthetic multi-camera world.

A scenario is a 2-D arena observed top-down by cameras with overlapping
rectangular fields of view. Identities follow seeded random walks; frames
are rendered as seeded value-noise backgrounds plus one filled rectangle
per visible identity. Everything is a pure function of (config, seed), so
double runs are byte-identical.
"""

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from crosscam.errors import ConfigError

# seed-sequence tags keeping the per-purpose RNG streams independent
_TAG_TRAJ = 1
_TAG_START = 2
_TAG_APPEAR = 3
_TAG_STATIC = 4
_TAG_BACKGROUND = 5

_NOISE_CELL = 16  # value-noise lattice spacing in pixels
_BG_LO, _BG_HI = 32, 223  # background intensity band; identities render above it


@dataclass(frozen=True)
class Identity:
    id: int
    trajectory: tuple  # ((x, y), ...) of length duration_steps
    body_size: float  # half-extent of the rendered square, world units
    appearance_seed: int


@dataclass(frozen=True)
class CameraModel:
    id: int
    image_width: int
    image_height: int
    world_to_image: tuple  # 2x3 affine, ((a, b, tx), (c, d, ty)), pixels per world unit
    fov_polygon: tuple  # convex polygon in world coordinates, >= 3 vertices

    def __post_init__(self):
        (a, b, _), (c, d, _) = self.world_to_image
        if abs(a * d - b * c) < 1e-12:
            raise ConfigError(f"camera {self.id}: affine transform is singular")
        if len(self.fov_polygon) < 3:
            raise ConfigError(f"camera {self.id}: fov polygon needs >= 3 vertices")
        if not _is_convex(self.fov_polygon):
            raise ConfigError(f"camera {self.id}: fov polygon is not convex")


@dataclass
class Frame:
    camera_id: int
    t: int
    pixels: np.ndarray  # uint8, shape (height, width)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()


@dataclass(frozen=True)
class GroundTruthRecord:
    camera_id: int
    t: int
    identity_id: int
    bbox: tuple  # (x_min, y_min, x_max, y_max) in pixels, clipped to the image
    fully_visible: bool


@dataclass(frozen=True)
class WorldScenario:
    arena_width: float
    arena_height: float
    duration_steps: int
    identities: tuple
    cameras: tuple
    seed: int

    def camera(self, camera_id: int) -> CameraModel:
        for cam in self.cameras:
            if cam.id == camera_id:
                return cam
        raise KeyError(f"unknown camera id {camera_id}")


@dataclass
class ScenarioConfig:
    arena_width: float = 100.0
    arena_height: float = 60.0
    duration_steps: int = 50
    num_identities: int = 3
    num_cameras: int = 2
    overlap_fraction: float = 0.25
    image_width: int = 160
    image_height: int = 120
    walk_speed: float = 1.5
    body_size: float = 2.5
    static_step_fraction: float = 0.0
    camera_windows: list = field(default_factory=list)  # optional explicit (x0, y0, x1, y1)

    def validate(self) -> None:
        if self.arena_width <= 0 or self.arena_height <= 0:
            raise ConfigError("arena must have positive area")
        if self.duration_steps < 1:
            raise ConfigError("duration_steps must be >= 1")
        if self.num_identities < 0:
            raise ConfigError("num_identities must be >= 0")
        if not self.camera_windows and self.num_cameras < 1:
            raise ConfigError("need at least one camera")
        if self.image_width < 1 or self.image_height < 1:
            raise ConfigError("image dimensions must be >= 1")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ConfigError("overlap_fraction must be in [0, 1)")
        if not 0.0 <= self.static_step_fraction <= 1.0:
            raise ConfigError("static_step_fraction must be in [0, 1]")
        if self.walk_speed < 0:
            raise ConfigError("walk_speed must be >= 0")
        if self.body_size <= 0:
            raise ConfigError("body_size must be > 0")


def _is_convex(poly) -> bool:
    n = len(poly)
    sign = 0
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        cx, cy = poly[(i + 2) % n]
        cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if abs(cross) < 1e-12:
            continue
        s = 1 if cross > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return True


def point_in_fov(polygon, x: float, y: float) -> bool:
    """Inclusive membership test for a convex polygon."""
    n = len(polygon)
    sign = 0
    for i in range(n):
        ax, ay = polygon[i]
        bx, by = polygon[(i + 1) % n]
        cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
        if abs(cross) < 1e-9:
            continue
        s = 1 if cross > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return True


def _auto_camera_windows(config: ScenarioConfig):
    """Horizontal band layout: n windows spanning the arena with the given overlap."""
    n = config.num_cameras
    f = config.overlap_fraction
    width = config.arena_width / (1.0 + (n - 1) * (1.0 - f)) if n > 1 else config.arena_width
    step = width * (1.0 - f)
    return [(i * step, 0.0, i * step + width, config.arena_height) for i in range(n)]


def _camera_from_window(cam_id: int, window, config: ScenarioConfig) -> CameraModel:
    x0, y0, x1, y1 = window
    if x1 <= x0 or y1 <= y0:
        raise ConfigError(f"camera {cam_id}: degenerate view window {window}")
    sx = config.image_width / (x1 - x0)
    sy = config.image_height / (y1 - y0)
    return CameraModel(
        id=cam_id,
        image_width=config.image_width,
        image_height=config.image_height,
        world_to_image=((sx, 0.0, -x0 * sx), (0.0, sy, -y0 * sy)),
        fov_polygon=((x0, y0), (x1, y0), (x1, y1), (x0, y1)),
    )


def generate_scenario(config: ScenarioConfig, seed: int) -> WorldScenario:
    """Build a scenario deterministically from (config, seed)."""
    config.validate()
    windows = config.camera_windows or _auto_camera_windows(config)
    cameras = tuple(_camera_from_window(i, w, config) for i, w in enumerate(windows))

    T = config.duration_steps
    static_steps = frozenset()
    if config.static_step_fraction > 0 and T > 1:
        k = int(round(config.static_step_fraction * (T - 1)))
        order = np.random.default_rng(
            np.random.SeedSequence([seed, _TAG_STATIC])
        ).permutation(np.arange(1, T))
        static_steps = frozenset(int(s) for s in order[:k])

    mx = config.body_size if config.arena_width > 2 * config.body_size else 0.0
    my = config.body_size if config.arena_height > 2 * config.body_size else 0.0

    identities = []
    for i in range(config.num_identities):
        start_rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_START, i]))
        walk_rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_TRAJ, i]))
        x = float(start_rng.uniform(mx, config.arena_width - mx))
        y = float(start_rng.uniform(my, config.arena_height - my))
        traj = [(x, y)]
        for t in range(1, T):
            if t not in static_steps:
                dx, dy = walk_rng.normal(0.0, config.walk_speed, 2)
                x = float(min(max(x + dx, mx), config.arena_width - mx))
                y = float(min(max(y + dy, my), config.arena_height - my))
            traj.append((x, y))
        appearance = int(
            np.random.default_rng(np.random.SeedSequence([seed, _TAG_APPEAR, i])).integers(
                0, 2**63
            )
        )
        identities.append(
            Identity(id=i, trajectory=tuple(traj), body_size=config.body_size, appearance_seed=appearance)
        )

    return WorldScenario(
        arena_width=config.arena_width,
        arena_height=config.arena_height,
        duration_steps=T,
        identities=tuple(identities),
        cameras=cameras,
        seed=seed,
    )


def _project(camera: CameraModel, position, body_size: float):
    """Clipped integer bbox plus a fully-visible flag; None when out of view."""
    x, y = position
    if not point_in_fov(camera.fov_polygon, x, y):
        return None
    (a, b, tx), (c, d, ty) = camera.world_to_image
    xs = []
    ys = []
    for wx, wy in ((x - body_size, y - body_size), (x + body_size, y - body_size),
                   (x + body_size, y + body_size), (x - body_size, y + body_size)):
        xs.append(a * wx + b * wy + tx)
        ys.append(c * wx + d * wy + ty)
    x0 = int(np.floor(min(xs)))
    y0 = int(np.floor(min(ys)))
    x1 = int(np.ceil(max(xs)))
    y1 = int(np.ceil(max(ys)))
    cx0 = max(x0, 0)
    cy0 = max(y0, 0)
    cx1 = min(x1, camera.image_width)
    cy1 = min(y1, camera.image_height)
    if cx0 >= cx1 or cy0 >= cy1:
        return None
    bbox = (cx0, cy0, cx1, cy1)
    return bbox, bbox == (x0, y0, x1, y1)


def project_to_camera(camera: CameraModel, position, body_size: float):
    """Pixel bbox of a body at ``position``, or None when outside the FoV."""
    projected = _project(camera, position, body_size)
    return projected[0] if projected else None


@lru_cache(maxsize=64)
def _background(seed: int, camera_id: int, width: int, height: int) -> np.ndarray:
    """Per-camera value noise, constant over time. Cached; callers must copy."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_BACKGROUND, camera_id]))
    gw = width // _NOISE_CELL + 2
    gh = height // _NOISE_CELL + 2
    lattice = rng.random((gh, gw))
    ys = np.arange(height) / _NOISE_CELL
    xs = np.arange(width) / _NOISE_CELL
    iy = ys.astype(int)
    ix = xs.astype(int)
    fy = (ys - iy)[:, None]
    fx = (xs - ix)[None, :]
    v00 = lattice[np.ix_(iy, ix)]
    v01 = lattice[np.ix_(iy, ix + 1)]
    v10 = lattice[np.ix_(iy + 1, ix)]
    v11 = lattice[np.ix_(iy + 1, ix + 1)]
    out = v00 * (1 - fy) * (1 - fx) + v01 * (1 - fy) * fx + v10 * fy * (1 - fx) + v11 * fy * fx
    plane = (_BG_LO + np.round(out * (_BG_HI - _BG_LO))).astype(np.uint8)
    plane.setflags(write=False)
    return plane


def identity_intensity(appearance_seed: int) -> int:
    """Render intensity for an identity; always above the background band."""
    return _BG_HI + 1 + appearance_seed % (255 - _BG_HI)


def render_frame(scenario: WorldScenario, camera_id: int, t: int) -> Frame:
    """Raster for (camera, t): seeded background plus visible identity boxes."""
    camera = scenario.camera(camera_id)
    if not 0 <= t < scenario.duration_steps:
        raise IndexError(f"step {t} outside 0..{scenario.duration_steps - 1}")
    pixels = _background(scenario.seed, camera_id, camera.image_width, camera.image_height).copy()
    for ident in sorted(scenario.identities, key=lambda i: i.id):
        projected = _project(camera, ident.trajectory[t], ident.body_size)
        if projected is None:
            continue
        (x0, y0, x1, y1), _ = projected
        pixels[y0:y1, x0:x1] = identity_intensity(ident.appearance_seed)
    return Frame(camera_id=camera_id, t=t, pixels=pixels)


def render_background(scenario: WorldScenario, camera_id: int) -> Frame:
    """The identity-free raster for a camera (same at every step)."""
    camera = scenario.camera(camera_id)
    pixels = _background(scenario.seed, camera_id, camera.image_width, camera.image_height).copy()
    return Frame(camera_id=camera_id, t=0, pixels=pixels)


def ground_truth(scenario: WorldScenario):
    """One record per visible (camera, t, identity), sorted by that key."""
    records = []
    for camera in sorted(scenario.cameras, key=lambda c: c.id):
        for t in range(scenario.duration_steps):
            for ident in sorted(scenario.identities, key=lambda i: i.id):
                projected = _project(camera, ident.trajectory[t], ident.body_size)
                if projected is None:
                    continue
                bbox, fully = projected
                records.append(
                    GroundTruthRecord(
                        camera_id=camera.id,
                        t=t,
                        identity_id=ident.id,
                        bbox=bbox,
                        fully_visible=fully,
                    )
                )
    return records


# -- serialization ----------------------------------------------------------

def scenario_to_text(scenario: WorldScenario) -> str:
    """Stable human-readable document; identical seeds give identical text."""
    doc = {
        "format": "crosscam-scenario",
        "version": 1,
        "seed": scenario.seed,
        "arena_width": scenario.arena_width,
        "arena_height": scenario.arena_height,
        "duration_steps": scenario.duration_steps,
        "identities": [
            {
                "id": ident.id,
                "body_size": ident.body_size,
                "appearance_seed": ident.appearance_seed,
                "trajectory": [[x, y] for x, y in ident.trajectory],
            }
            for ident in scenario.identities
        ],
        "cameras": [
            {
                "id": cam.id,
                "image_width": cam.image_width,
                "image_height": cam.image_height,
                "world_to_image": [list(row) for row in cam.world_to_image],
                "fov_polygon": [[x, y] for x, y in cam.fov_polygon],
            }
            for cam in scenario.cameras
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def scenario_from_text(text: str) -> WorldScenario:
    doc = json.loads(text)
    if doc.get("format") != "crosscam-scenario":
        raise ConfigError("not a scenario document")
    identities = tuple(
        Identity(
            id=d["id"],
            trajectory=tuple((float(x), float(y)) for x, y in d["trajectory"]),
            body_size=float(d["body_size"]),
            appearance_seed=int(d["appearance_seed"]),
        )
        for d in doc["identities"]
    )
    cameras = tuple(
        CameraModel(
            id=d["id"],
            image_width=int(d["image_width"]),
            image_height=int(d["image_height"]),
            world_to_image=tuple(tuple(float(v) for v in row) for row in d["world_to_image"]),
            fov_polygon=tuple((float(x), float(y)) for x, y in d["fov_polygon"]),
        )
        for d in doc["cameras"]
    )
    return WorldScenario(
        arena_width=float(doc["arena_width"]),
        arena_height=float(doc["arena_height"]),
        duration_steps=int(doc["duration_steps"]),
        identities=identities,
        cameras=cameras,
        seed=int(doc["seed"]),
    )


def scenario_digest(scenario: WorldScenario) -> str:
    return hashlib.sha256(scenario_to_text(scenario).encode()).hexdigest()


def write_pgm(pixels, path) -> None:
    """Binary PGM (P5), bit-exact."""
    arr = np.ascontiguousarray(pixels.pixels if isinstance(pixels, Frame) else pixels, dtype=np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(arr.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ConfigError(f"{path}: not a binary PGM")
        dims = fh.readline().split()
        maxval = fh.readline().strip()
        if maxval != b"255":
            raise ConfigError(f"{path}: unsupported maxval {maxval!r}")
        w, h = int(dims[0]), int(dims[1])
        data = fh.read(w * h)
    if len(data) != w * h:
        raise ConfigError(f"{path}: truncated pixel data")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w)
