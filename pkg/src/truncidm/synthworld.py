"""Deterministic planar two-arm world with camera-crop truncation.

Geometry is in canvas pixels with ``(x, y)`` pairs and y pointing down, so a
joint angle of -pi/2 points a link straight up.  Images are indexed
``[row, col]``.  Each episode draws a static clutter scene, smooth joint and
gripper trajectories, and a per-frame crop window whose placement controls
how much of the arms stays in view.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ParameterError, ShapeError
from .fmap import load_fmap, save_fmap

LINK_COLORS = (
    ((225, 60, 60), (235, 150, 40), (230, 225, 70), (245, 120, 180)),
    ((60, 120, 235), (60, 205, 215), (165, 95, 235), (90, 220, 120)),
)
JAW_COLORS = ((250, 250, 250), (190, 255, 190))
BACKGROUND = (40, 40, 48)


@dataclass(frozen=True)
class ArmConfig:
    num_arms: int = 2
    joints_per_arm: int = 3
    link_lengths: tuple = (16.0, 14.0, 10.0)
    link_thickness: float = 8.0
    gripper_dims_per_arm: int = 1
    bases: tuple = ((52.0, 100.0), (76.0, 100.0))
    nominal: tuple = ((-1.85, 0.30, 0.30), (-1.29, -0.30, -0.30))
    jaw_length: float = 6.0
    jaw_thickness: float = 3.0
    jaw_min_gap: float = 2.0
    jaw_max_gap: float = 10.0

    def __post_init__(self):
        if self.num_arms not in (1, 2):
            raise ConfigError(f"num_arms must be 1 or 2, got {self.num_arms}")
        if self.joints_per_arm < 1 or len(self.link_lengths) != self.joints_per_arm:
            raise ConfigError("link_lengths must list one positive length per joint")
        if any(v <= 0 for v in self.link_lengths) or self.link_thickness <= 0:
            raise ConfigError("link lengths and thickness must be positive")
        if self.gripper_dims_per_arm not in (0, 1):
            raise ConfigError("gripper_dims_per_arm must be 0 or 1")
        if len(self.bases) < self.num_arms or len(self.nominal) < self.num_arms:
            raise ConfigError("need a base position and nominal pose per arm")

    @property
    def action_dim(self):
        return self.num_arms * (self.joints_per_arm + self.gripper_dims_per_arm)

    @property
    def dim_kinds(self):
        per_arm = ["rotation"] * self.joints_per_arm + ["gripper"] * self.gripper_dims_per_arm
        return per_arm * self.num_arms

    def split_action(self, action):
        """Per-arm (joint angles, gripper opening or None)."""
        out = []
        step = self.joints_per_arm + self.gripper_dims_per_arm
        for a in range(self.num_arms):
            block = action[a * step:(a + 1) * step]
            grip = block[self.joints_per_arm] if self.gripper_dims_per_arm else None
            out.append((block[:self.joints_per_arm], grip))
        return out


@dataclass(frozen=True)
class CameraCrop:
    origin: tuple  # (x, y) canvas pixels
    extent: tuple = (64.0, 64.0)  # (width, height) canvas pixels
    resolution: tuple = (64, 64)  # (width, height) output pixels

    def validate(self, canvas):
        ex, ey = self.extent
        if ex <= 0 or ey <= 0 or self.resolution[0] <= 0 or self.resolution[1] <= 0:
            raise ParameterError(f"degenerate crop {self}")
        ox, oy = self.origin
        if ox < -1e-9 or oy < -1e-9 or ox + ex > canvas[0] + 1e-9 or oy + ey > canvas[1] + 1e-9:
            raise ParameterError(f"crop {self} leaves the {canvas} canvas")

    def pixel_centers(self):
        """Canvas (x, y) of every output pixel centre, each (H, W)."""
        rw, rh = self.resolution
        xs = self.origin[0] + (np.arange(rw) + 0.5) * (self.extent[0] / rw)
        ys = self.origin[1] + (np.arange(rh) + 0.5) * (self.extent[1] / rh)
        return np.meshgrid(xs, ys, indexing="xy")


@dataclass(frozen=True)
class CameraPolicy:
    """How the crop window moves over an episode.

    ``full-view`` keeps the crop on the arm workspace.  ``pan`` slides it by
    up to ``truncation`` of the full travel toward ``direction`` and back
    with period ``pan_period``.  ``mixed`` draws truncation and direction
    per episode.  With ``target_occupancy`` set, the truncation level is
    searched so the mean occupancy lands near the target.
    """

    mode: str = "mixed"
    truncation: float = 0.0
    direction: str = "up"
    pan_period: float = 28.0
    target_occupancy: float | None = None
    target_tolerance: float = 0.02
    mixed_range: tuple = (0.3, 1.0)

    def __post_init__(self):
        if self.mode not in ("full-view", "pan", "mixed"):
            raise ConfigError(f"unknown camera mode {self.mode!r}")
        if self.direction not in PAN_DIRECTIONS:
            raise ConfigError(f"unknown pan direction {self.direction!r}")
        if not 0.0 <= self.truncation <= 1.0:
            raise ConfigError("truncation must lie in [0, 1]")


PAN_DIRECTIONS = {"up": (0.0, -1.0), "down": (0.0, 1.0), "left": (-1.0, 0.0), "right": (1.0, 0.0)}


@dataclass(frozen=True)
class WorldConfig:
    arm: ArmConfig = field(default_factory=ArmConfig)
    camera: CameraPolicy = field(default_factory=CameraPolicy)
    canvas: tuple = (128, 128)
    crop_extent: tuple = (64.0, 64.0)
    resolution: tuple = (64, 64)
    home_origin: tuple = (32.0, 44.0)
    length: int = 32
    max_step_delta: float = 0.08
    amplitude: float = 0.45
    nominal_jitter: float = 0.15
    clutter_range: tuple = (3, 8)
    eval_fraction: float = 0.25

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown world config keys: {sorted(unknown)}")
        try:
            if "arm" in d:
                d["arm"] = ArmConfig(**_tuplify(d["arm"]))
            if "camera" in d:
                d["camera"] = CameraPolicy(**_tuplify(d["camera"]))
            return cls(**_tuplify(d))
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def to_dict(self):
        return asdict(self)


def _tuplify(d):
    return {k: (tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v)
            for k, v in d.items()}


# ---------------------------------------------------------------- geometry

def forward_kinematics(joint_angles, link_lengths, base):
    """Joint positions of a planar chain, base first.

    Point k is ``base + sum_{i<=k} L_i (cos phi_i, sin phi_i)`` with
    ``phi_i`` the cumulative angle; returns a (n+1, 2) array.
    """
    th = np.asarray(joint_angles, dtype=np.float64)
    ls = np.asarray(link_lengths, dtype=np.float64)
    if th.shape != ls.shape or th.ndim != 1:
        raise ParameterError(f"got {th.size} joint angles for {ls.size} links")
    phi = np.cumsum(th)
    steps = np.stack([ls * np.cos(phi), ls * np.sin(phi)], axis=1)
    pts = np.vstack([np.zeros((1, 2)), np.cumsum(steps, axis=0)])
    return pts + np.asarray(base, dtype=np.float64)


def arm_capsules(action, arm: ArmConfig):
    """List of (start, end, radius, color) capsules for every arm part."""
    caps = []
    r = arm.link_thickness / 2
    for a, (angles, grip) in enumerate(arm.split_action(np.asarray(action, dtype=np.float64))):
        pts = forward_kinematics(angles, arm.link_lengths, arm.bases[a])
        for k in range(arm.joints_per_arm):
            caps.append((pts[k], pts[k + 1], r, LINK_COLORS[a][k % len(LINK_COLORS[a])]))
        if grip is not None:
            phi = float(np.sum(angles))
            u = np.array([math.cos(phi), math.sin(phi)])
            nrm = np.array([-u[1], u[0]])
            gap = arm.jaw_min_gap + float(np.clip(grip, 0.0, 1.0)) * (arm.jaw_max_gap - arm.jaw_min_gap)
            for sgn in (-1.0, 1.0):
                s = pts[-1] + sgn * gap / 2 * nrm
                caps.append((s, s + arm.jaw_length * u, arm.jaw_thickness / 2, JAW_COLORS[a]))
    return caps


def _capsule_cover(px, py, a, b, radius):
    d = b - a
    dd = float(d @ d)
    if dd == 0.0:
        t = np.zeros_like(px)
    else:
        t = np.clip(((px - a[0]) * d[0] + (py - a[1]) * d[1]) / dd, 0.0, 1.0)
    qx = px - (a[0] + t * d[0])
    qy = py - (a[1] + t * d[1])
    return qx * qx + qy * qy <= radius * radius


def render_mask(action, arm: ArmConfig, camera: CameraCrop, canvas=(128, 128)):
    camera.validate(canvas)
    px, py = camera.pixel_centers()
    mask = np.zeros(px.shape, dtype=bool)
    for a, b, r, _ in arm_capsules(action, arm):
        mask |= _capsule_cover(px, py, a, b, r)
    return mask.astype(np.uint8)


def render_frame(action, arm: ArmConfig, clutter, camera: CameraCrop, canvas=(128, 128)):
    """Rasterize one view; returns (uint8 RGB image, uint8 binary mask).

    ``clutter`` is a list of ``(x0, y0, w, h, (r, g, b))`` canvas rectangles;
    they only ever touch the image.
    """
    camera.validate(canvas)
    px, py = camera.pixel_centers()
    img = np.empty(px.shape + (3,), dtype=np.uint8)
    img[:] = BACKGROUND
    for x0, y0, w, h, color in clutter:
        inside = (px >= x0) & (px < x0 + w) & (py >= y0) & (py < y0 + h)
        img[inside] = color
    mask = np.zeros(px.shape, dtype=bool)
    for a, b, r, color in arm_capsules(action, arm):
        cov = _capsule_cover(px, py, a, b, r)
        img[cov] = color
        mask |= cov
    return img, mask.astype(np.uint8)


def occupancy(mask):
    m = np.asarray(mask)
    if m.size == 0:
        raise ParameterError("occupancy of an empty grid")
    return float(np.count_nonzero(m)) / m.size


# ---------------------------------------------------------------- episodes

@dataclass
class EpisodeRecord:
    episode_id: str
    frames: np.ndarray  # (T, H, W, 3) uint8
    masks: np.ndarray  # (T, H, W) uint8
    actions: np.ndarray  # (T, D) float64, float32-representable
    occupancy: np.ndarray  # (T,)
    split: str = "unassigned"
    seed: int = 0
    crops: np.ndarray | None = None  # (T, 2) crop origins
    clutter: list = field(default_factory=list)
    dim_kinds: list = field(default_factory=list)
    warning: str | None = None

    def __post_init__(self):
        t = len(self.frames)
        if t < 2 or not (len(self.masks) == len(self.actions) == len(self.occupancy) == t):
            raise DataError(f"episode {self.episode_id}: frames/masks/actions/occupancy must share a length >= 2")
        if self.split not in ("light", "heavy", "unassigned"):
            raise DataError(f"episode {self.episode_id}: bad truncation split {self.split!r}")

    def __len__(self):
        return len(self.frames)

    @property
    def action_dim(self):
        return self.actions.shape[1]


def truncation_label(occ, threshold=0.15):
    return "light" if occ >= threshold else "heavy"


def _trajectories(rng, cfg: WorldConfig, t_len):
    arm = cfg.arm
    ts = np.arange(t_len, dtype=np.float64)
    cols = []
    budget = cfg.max_step_delta * 0.95
    for a in range(arm.num_arms):
        for j in range(arm.joints_per_arm):
            nom = arm.nominal[a][j] + rng.uniform(-cfg.nominal_jitter, cfg.nominal_jitter)
            share = rng.dirichlet([2.0, 2.0])
            amps = cfg.amplitude * rng.uniform(0.6, 1.0) * share
            omegas = rng.uniform(0.04, 0.16, size=2)
            phases = rng.uniform(0, 2 * np.pi, size=2)
            speed = float(np.sum(amps * omegas))
            if speed > budget:
                amps = amps * (budget / speed)
            cols.append(nom + sum(amps[m] * np.sin(omegas[m] * ts + phases[m]) for m in range(2)))
        if arm.gripper_dims_per_arm:
            omega = rng.uniform(0.05, 0.15)
            amp = min(0.5, budget / omega)
            cols.append(0.5 + amp * np.sin(omega * ts + rng.uniform(0, 2 * np.pi)))
    acts = np.stack(cols, axis=1)
    return acts.astype(np.float32).astype(np.float64)


def _clutter(rng, cfg: WorldConfig):
    lo, hi = cfg.clutter_range
    out = []
    for _ in range(int(rng.integers(lo, hi + 1))):
        w, h = rng.uniform(8, 32, size=2)
        x0 = rng.uniform(0, cfg.canvas[0] - w)
        y0 = rng.uniform(0, cfg.canvas[1] - h)
        color = tuple(int(c) for c in rng.integers(30, 256, size=3))
        out.append((float(x0), float(y0), float(w), float(h), color))
    return out


def _crop_origins(cfg: WorldConfig, level, direction, phase, t_len):
    hx, hy = cfg.home_origin
    dx, dy = PAN_DIRECTIONS[direction]
    max_x = cfg.canvas[0] - cfg.crop_extent[0]
    max_y = cfg.canvas[1] - cfg.crop_extent[1]
    travel_x = (max_x - hx) if dx > 0 else hx
    travel_y = (max_y - hy) if dy > 0 else hy
    ts = np.arange(t_len, dtype=np.float64)
    s = level * (1 - np.cos(2 * np.pi * ts / cfg.camera.pan_period + phase)) / 2
    ox = np.clip(hx + dx * travel_x * s, 0, max_x)
    oy = np.clip(hy + dy * travel_y * s, 0, max_y)
    return np.round(np.stack([ox, oy], axis=1), 6)


def _crop(cfg, origin):
    return CameraCrop(tuple(float(v) for v in origin), tuple(cfg.crop_extent), tuple(cfg.resolution))


def _mean_occupancy(cfg, actions, origins):
    return float(np.mean([occupancy(render_mask(a, cfg.arm, _crop(cfg, o), cfg.canvas))
                          for a, o in zip(actions, origins)]))


def generate_episode(cfg: WorldConfig, seed, episode_id=None, length=None):
    """Render one episode; identical ``seed`` gives an identical record."""
    t_len = cfg.length if length is None else length
    if t_len < 2:
        raise ParameterError(f"episode length must be >= 2, got {t_len}")
    rng = np.random.default_rng([seed, 0x5EED])
    actions = _trajectories(rng, cfg, t_len)
    clutter = _clutter(rng, cfg)
    cam = cfg.camera
    phase = float(rng.uniform(0, 2 * np.pi))
    if cam.mode == "full-view":
        level, direction = 0.0, cam.direction
    elif cam.mode == "pan":
        level, direction = cam.truncation, cam.direction
    else:
        level = float(rng.uniform(*cam.mixed_range))
        direction = str(rng.choice(["up", "left", "right"]))
    warning = None
    if cam.target_occupancy is not None:
        best = None
        for lv in np.linspace(0.0, 1.0, 21):
            occ = _mean_occupancy(cfg, actions, _crop_origins(cfg, lv, direction, phase, t_len))
            if best is None or abs(occ - cam.target_occupancy) < best[0]:
                best = (abs(occ - cam.target_occupancy), float(lv))
        level = best[1]
        if best[0] > cam.target_tolerance:
            warning = (f"target occupancy {cam.target_occupancy:.3f} unreachable; "
                       f"closest mean differs by {best[0]:.3f}")
    origins = _crop_origins(cfg, level, direction, phase, t_len)
    frames, masks = [], []
    for a, o in zip(actions, origins):
        img, m = render_frame(a, cfg.arm, clutter, _crop(cfg, o), cfg.canvas)
        frames.append(img)
        masks.append(m)
    masks = np.stack(masks)
    occ = np.array([occupancy(m) for m in masks])
    return EpisodeRecord(
        episode_id=episode_id or f"ep{seed:05d}",
        frames=np.stack(frames), masks=masks, actions=actions, occupancy=occ,
        split=truncation_label(float(occ.mean())), seed=int(seed), crops=origins,
        clutter=clutter, dim_kinds=cfg.arm.dim_kinds, warning=warning,
    )


def rerender_masks(rec: EpisodeRecord, cfg: WorldConfig):
    return np.stack([render_mask(a, cfg.arm, _crop(cfg, o), cfg.canvas) for a, o in zip(rec.actions, rec.crops)])


# ---------------------------------------------------------------- archive I/O

def save_episode(rec: EpisodeRecord, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_fmap(rec.frames, d / "frames.fmap", np.uint8)
    save_fmap(rec.masks, d / "masks.fmap", np.uint8)
    save_fmap(rec.actions, d / "actions.fmap", np.float32)
    meta = {
        "episode_id": rec.episode_id,
        "seed": rec.seed,
        "occupancy": [float(v) for v in rec.occupancy],
        "split": rec.split,
        "dim_kinds": list(rec.dim_kinds),
        "crops": None if rec.crops is None else [[float(v) for v in row] for row in rec.crops],
        "clutter": [list(c[:4]) + [list(c[4])] for c in rec.clutter],
        "warning": rec.warning,
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def load_episode(directory):
    d = Path(directory)
    try:
        meta = json.loads((d / "meta.json").read_text())
    except FileNotFoundError:
        raise DataError(f"{d}: missing meta.json") from None
    frames = load_fmap(d / "frames.fmap")
    masks = load_fmap(d / "masks.fmap")
    actions = load_fmap(d / "actions.fmap").astype(np.float64)
    if frames.shape[:3] != masks.shape:
        raise ShapeError(f"{d}: frames {frames.shape} and masks {masks.shape} disagree")
    return EpisodeRecord(
        episode_id=meta["episode_id"], frames=frames, masks=masks, actions=actions,
        occupancy=np.asarray(meta["occupancy"], dtype=np.float64), split=meta.get("split", "unassigned"),
        seed=meta.get("seed", 0),
        crops=None if meta.get("crops") is None else np.asarray(meta["crops"], dtype=np.float64),
        clutter=[tuple(c[:4]) + (tuple(c[4]),) for c in meta.get("clutter", [])],
        dim_kinds=meta.get("dim_kinds") or [], warning=meta.get("warning"),
    )
