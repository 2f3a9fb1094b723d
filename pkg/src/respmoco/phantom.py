"""Randomized 4D torso phantoms with analytically known breathing motion.

The anatomy is a layered analytic torso: an elliptical body with a chest-wall
shell, two ellipsoidal lungs cut below by a dome-shaped diaphragm surface,
liver below the dome, heart, spine, and a spherical lung lesion. Breathing is
a backward displacement field applied to the end-exhale reference: the axial
component ramps smoothly from zero at the lung apex to the full diaphragm
excursion at the dome and back to zero below the liver; the
anterior-posterior component implements chest expansion decaying from the
anterior wall to the spine. Each component depends on a single axis, so the
warp Jacobian is triangular and invertibility reduces to keeping every ramp
slope below one voxel per voxel; ground-truth flows between any two
amplitudes are exact by construction (composition with the fixed-point
inverse).

All operations are pure functions of (spec, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from . import warp
from .errors import ConfigurationError, DimensionError, DomainError, SpecificationError
from .volumes import DEFAULT_SHAPE, DEFAULT_SPACING_MM, FlowField, Volume3D

# organ labels
BACKGROUND, CHEST_WALL, LUNG, LIVER, HEART, SPINE, LESION = range(7)
LABEL_NAMES = {
    BACKGROUND: "background",
    CHEST_WALL: "chest_wall",
    LUNG: "lung",
    LIVER: "liver",
    HEART: "heart",
    SPINE: "spine",
    LESION: "lesion",
}

DEFAULT_ACTIVITY_RANGES = {
    # lesion : soft tissue : lung roughly 8 : 2 : 1
    "chest_wall": (1.6, 2.4),
    "lung": (0.8, 1.2),
    "liver": (2.0, 3.0),
    "heart": (2.4, 3.6),
    "spine": (1.2, 1.8),
    "lesion": (6.0, 10.0),
}


@dataclass
class ParameterRanges:
    """Sampling ranges for phantom randomization (defaults: published table)."""

    body_scale_axial: tuple[float, float] = (0.7, 1.3)
    body_scale_transaxial: tuple[float, float] = (0.8, 1.2)
    shift_y_mm: tuple[float, float] = (-40.0, 40.0)
    shift_x_mm: tuple[float, float] = (-40.0, 40.0)
    fov_offset_mm: tuple[float, float] = (-15.0, 15.0)
    lesion_diameter_mm: tuple[float, float] = (10.0, 30.0)
    diaphragm_motion_mm: tuple[float, float] = (9.0, 21.0)
    activity: dict = field(default_factory=lambda: dict(DEFAULT_ACTIVITY_RANGES))
    shape: tuple[int, int, int] = DEFAULT_SHAPE
    spacing_mm: tuple[float, float, float] = DEFAULT_SPACING_MM

    def __post_init__(self):
        for name in ("body_scale_axial", "body_scale_transaxial", "shift_y_mm",
                     "shift_x_mm", "fov_offset_mm", "lesion_diameter_mm",
                     "diaphragm_motion_mm"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigurationError(f"range {name} has min {lo} > max {hi}")
        for organ, (lo, hi) in self.activity.items():
            if lo > hi:
                raise ConfigurationError(f"activity range for {organ} has min > max")

    @classmethod
    def desk_scale(cls) -> "ParameterRanges":
        """Small grid for fast end-to-end runs: (32,48,48) voxels, 3-6 voxel
        diaphragm excursion, no axial offset (the short FOV has no slack)."""
        return cls(
            body_scale_axial=(0.9, 1.1),
            body_scale_transaxial=(0.9, 1.1),
            shift_y_mm=(-10.0, 10.0),
            shift_x_mm=(-10.0, 10.0),
            fov_offset_mm=(0.0, 0.0),
            lesion_diameter_mm=(10.0, 16.0),
            diaphragm_motion_mm=(6.0, 12.0),
            shape=(32, 48, 48),
            spacing_mm=DEFAULT_SPACING_MM,
        )


@dataclass
class PhantomSpec:
    body_scale_axial: float
    body_scale_transaxial: float
    shift_y_mm: float
    shift_x_mm: float
    fov_offset_mm: float
    lesion_diameter_mm: float
    lesion_center: tuple[float, float, float]  # (z, y, x) mm
    diaphragm_motion_mm: float
    chest_expansion_mm: float
    organ_activities: dict
    seed: int
    shape: tuple[int, int, int] = DEFAULT_SHAPE
    spacing_mm: tuple[float, float, float] = DEFAULT_SPACING_MM

    def __post_init__(self):
        if abs(self.chest_expansion_mm - 0.7 * self.diaphragm_motion_mm) > 1e-9:
            raise SpecificationError("chest expansion must be 0.7 x diaphragm motion")
        if self.lesion_diameter_mm <= 0:
            raise SpecificationError("lesion diameter must be positive")
        self.shape = tuple(int(s) for s in self.shape)
        self.spacing_mm = tuple(float(s) for s in self.spacing_mm)
        self.lesion_center = tuple(float(c) for c in self.lesion_center)

    def to_dict(self) -> dict:
        return {
            "body_scale_axial": self.body_scale_axial,
            "body_scale_transaxial": self.body_scale_transaxial,
            "shift_y_mm": self.shift_y_mm,
            "shift_x_mm": self.shift_x_mm,
            "fov_offset_mm": self.fov_offset_mm,
            "lesion_diameter_mm": self.lesion_diameter_mm,
            "lesion_center": list(self.lesion_center),
            "diaphragm_motion_mm": self.diaphragm_motion_mm,
            "chest_expansion_mm": self.chest_expansion_mm,
            "organ_activities": dict(self.organ_activities),
            "seed": self.seed,
            "shape": list(self.shape),
            "spacing_mm": list(self.spacing_mm),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        d = dict(d)
        d["lesion_center"] = tuple(d["lesion_center"])
        d["shape"] = tuple(d["shape"])
        d["spacing_mm"] = tuple(d["spacing_mm"])
        return cls(**d)


@dataclass
class LabelVolume:
    data: np.ndarray
    spacing_mm: tuple[float, float, float] = DEFAULT_SPACING_MM

    def mask(self, label: int) -> np.ndarray:
        return self.data == label


@dataclass
class MotionModel:
    """Axial bump plus anterior expansion ramp, both single-axis.

    The axial weight rises from 0 at ``z_apex_mm`` to 1 at the dome, holds
    over a short plateau, and decays to 0 over ``axial_decay_length_mm``
    (ending below the liver). The expansion weight is 1 anterior of the chest
    wall and decays to 0 at the spine. Slopes are validated against the
    excursion so the warp stays invertible with margin.
    """

    diaphragm_motion_mm: float
    chest_expansion_mm: float
    axial_decay_length_mm: float
    expansion_center: tuple[float, float]  # (y_spine, x_center) mm
    z_apex_mm: float
    z_dome_mm: float
    plateau_mm: float
    y_anterior_mm: float

    MAX_SLOPE = 0.90  # voxel per voxel, keeps fixed-point inversion contracting

    def __post_init__(self):
        ramp_up = self.z_dome_mm - self.z_apex_mm
        for name, length in (("apex ramp", ramp_up), ("liver decay", self.axial_decay_length_mm)):
            slope = math.pi * self.diaphragm_motion_mm / (2.0 * length)
            if slope > self.MAX_SLOPE:
                raise ConfigurationError(
                    f"{name} of {length:.1f} mm too short for {self.diaphragm_motion_mm:.1f} mm "
                    f"motion (slope {slope:.2f} > {self.MAX_SLOPE})")
        y_ramp = self.expansion_center[0] - self.y_anterior_mm
        slope = math.pi * self.chest_expansion_mm / (2.0 * y_ramp)
        if slope > self.MAX_SLOPE:
            raise ConfigurationError(f"chest expansion ramp too steep (slope {slope:.2f})")

    def axial_weight(self, z_mm: np.ndarray) -> np.ndarray:
        z0, z1 = self.z_apex_mm, self.z_dome_mm
        z2 = z1 + self.plateau_mm
        z3 = z2 + self.axial_decay_length_mm
        w = np.zeros_like(z_mm)
        rising = (z_mm > z0) & (z_mm < z1)
        w[rising] = 0.5 * (1.0 - np.cos(np.pi * (z_mm[rising] - z0) / (z1 - z0)))
        w[(z_mm >= z1) & (z_mm <= z2)] = 1.0
        falling = (z_mm > z2) & (z_mm < z3)
        w[falling] = 0.5 * (1.0 + np.cos(np.pi * (z_mm[falling] - z2) / (z3 - z2)))
        return w

    def expansion_weight(self, y_mm: np.ndarray) -> np.ndarray:
        y0, y1 = self.y_anterior_mm, self.expansion_center[0]
        v = np.zeros_like(y_mm)
        v[y_mm <= y0] = 1.0
        ramp = (y_mm > y0) & (y_mm < y1)
        v[ramp] = 0.5 * (1.0 + np.cos(np.pi * (y_mm[ramp] - y0) / (y1 - y0)))
        return v


@dataclass
class Anatomy:
    """Geometry of the analytic torso in mm, derived from a spec."""

    extent_mm: tuple[float, float, float]
    body_center: tuple[float, float]  # (cy, cx)
    body_semi: tuple[float, float]  # (ry, rx)
    cavity_scale: float
    z_apex: float
    z_dome: float
    dome_height: float
    plateau: float
    decay_length: float
    lung_centers: list  # [(z, y, x)]
    lung_semi: tuple[float, float, float]
    heart_center: tuple[float, float, float]
    heart_semi: tuple[float, float, float]
    liver_depth: float
    spine_center_yx: tuple[float, float]
    spine_radius: float

    def dome_surface(self, y_mm, x_mm):
        cy, cx = self.body_center
        ry, rx = self.body_semi
        rho2 = ((y_mm - cy) / ry) ** 2 + ((x_mm - cx) / rx) ** 2
        return self.z_dome + self.dome_height * rho2


def derive_anatomy(spec: PhantomSpec) -> Anatomy:
    ez, ey, ex = (s * p for s, p in zip(spec.shape, spec.spacing_mm))
    sa, st = spec.body_scale_axial, spec.body_scale_transaxial
    cy = 0.5 * ey + spec.shift_y_mm
    cx = 0.5 * ex + spec.shift_x_mm
    ry = 0.28 * ey * st
    rx = 0.36 * ex * st

    z_apex = max(0.02 * ez, 0.09 * ez + spec.fov_offset_mm)
    lung_height = 0.44 * ez * sa
    z_dome = z_apex + lung_height
    plateau = 0.05 * ez
    decay = min(0.38 * ez, 0.97 * ez - z_dome - plateau)
    if decay <= 0:
        raise ConfigurationError("axial offset leaves no room for the liver decay ramp")

    lung_semi = (0.60 * lung_height, 0.62 * ry, 0.38 * rx)
    lung_z = 0.5 * (z_apex + z_dome)
    lung_y = cy - 0.06 * ry
    lung_dx = 0.40 * rx
    heart_center = (z_apex + 0.62 * lung_height, cy - 0.12 * ry, cx + 0.10 * rx)
    heart_semi = (0.20 * lung_height, 0.30 * ry, 0.22 * rx)

    return Anatomy(
        extent_mm=(ez, ey, ex),
        body_center=(cy, cx),
        body_semi=(ry, rx),
        cavity_scale=0.82,
        z_apex=z_apex,
        z_dome=z_dome,
        dome_height=0.09 * ez * sa,
        plateau=plateau,
        decay_length=decay,
        lung_centers=[(lung_z, lung_y, cx - lung_dx), (lung_z, lung_y, cx + lung_dx)],
        lung_semi=lung_semi,
        heart_center=heart_center,
        heart_semi=heart_semi,
        liver_depth=0.30 * ez,
        spine_center_yx=(cy + 0.62 * ry, cx),
        spine_radius=0.045 * min(ey, ex) * st,
    )


def motion_model(spec: PhantomSpec) -> MotionModel:
    a = derive_anatomy(spec)
    return MotionModel(
        diaphragm_motion_mm=spec.diaphragm_motion_mm,
        chest_expansion_mm=spec.chest_expansion_mm,
        axial_decay_length_mm=a.decay_length,
        expansion_center=(a.spine_center_yx[0], a.body_center[1]),
        z_apex_mm=a.z_apex,
        z_dome_mm=a.z_dome,
        plateau_mm=a.plateau,
        y_anterior_mm=a.body_center[0] - a.body_semi[0],
    )


def _labels_at(anatomy: Anatomy, spec: PhantomSpec, z_mm, y_mm, x_mm,
               with_lesion: bool = True) -> np.ndarray:
    """Evaluate organ labels at broadcastable mm coordinates."""
    cy, cx = anatomy.body_center
    ry, rx = anatomy.body_semi

    body = ((y_mm - cy) / ry) ** 2 + ((x_mm - cx) / rx) ** 2 <= 1.0
    labels = np.where(body, CHEST_WALL, BACKGROUND).astype(np.uint8)
    labels = np.broadcast_to(labels, np.broadcast_shapes(z_mm.shape, y_mm.shape, x_mm.shape)).copy()

    cav = anatomy.cavity_scale
    interior = ((y_mm - cy) / (cav * ry)) ** 2 + ((x_mm - cx) / (cav * rx)) ** 2 <= 1.0
    dome = anatomy.dome_surface(y_mm, x_mm)
    liver = interior & (z_mm >= dome) & (z_mm <= dome + anatomy.liver_depth)
    labels[liver] = LIVER

    sz, sy, sx = anatomy.lung_semi
    for lz, ly, lx in anatomy.lung_centers:
        lung = (((z_mm - lz) / sz) ** 2 + ((y_mm - ly) / sy) ** 2
                + ((x_mm - lx) / sx) ** 2 <= 1.0) & (z_mm < dome) & interior
        labels[lung] = LUNG

    hz, hy, hx = anatomy.heart_center
    hsz, hsy, hsx = anatomy.heart_semi
    heart = (((z_mm - hz) / hsz) ** 2 + ((y_mm - hy) / hsy) ** 2
             + ((x_mm - hx) / hsx) ** 2 <= 1.0) & interior
    labels[heart] = HEART

    spy, spx = anatomy.spine_center_yx
    spine = ((y_mm - spy) ** 2 + (x_mm - spx) ** 2 <= anatomy.spine_radius ** 2) & body
    labels[spine] = SPINE

    if with_lesion:
        lz, ly, lx = spec.lesion_center
        r = 0.5 * spec.lesion_diameter_mm
        lesion = (z_mm - lz) ** 2 + (y_mm - ly) ** 2 + (x_mm - lx) ** 2 <= r ** 2
        labels[lesion] = LESION
    return labels


def _axis_centers(n: int, spacing: float, supersample: int = 1) -> np.ndarray:
    return (np.arange(n * supersample) + 0.5) * (spacing / supersample)


def build_reference(spec: PhantomSpec) -> tuple[Volume3D, LabelVolume]:
    """End-exhale activity and label volumes for a spec.

    The activity map is rasterized with 2x supersampling and box-averaged to
    soften thin boundaries; labels are evaluated at voxel centers. Raises
    when the lesion sphere does not lie fully inside the lung region.
    """
    anatomy = derive_anatomy(spec)
    d, h, w = spec.shape
    sz, sy, sx = spec.spacing_mm
    zc = _axis_centers(d, sz).reshape(-1, 1, 1)
    yc = _axis_centers(h, sy).reshape(1, -1, 1)
    xc = _axis_centers(w, sx).reshape(1, 1, -1)

    pre = _labels_at(anatomy, spec, zc, yc, xc, with_lesion=False)
    lz, ly, lx = spec.lesion_center
    r = 0.5 * spec.lesion_diameter_mm
    lesion_mask = (zc - lz) ** 2 + (yc - ly) ** 2 + (xc - lx) ** 2 <= r ** 2
    if not lesion_mask.any():
        raise SpecificationError("lesion smaller than one voxel at this grid")
    if np.any(lesion_mask & (pre != LUNG)):
        raise SpecificationError("lesion does not fit inside the lung region")
    labels = np.where(lesion_mask, LESION, pre).astype(np.uint8)

    activities = np.zeros(len(LABEL_NAMES), dtype=np.float64)
    for label, name in LABEL_NAMES.items():
        if name != "background":
            activities[label] = float(spec.organ_activities.get(name, 0.0))
    if activities[LESION] <= activities[LUNG] and activities[LESION] > 0:
        raise SpecificationError("lesion activity must exceed lung background")

    zs = _axis_centers(d, sz, 2).reshape(-1, 1, 1)
    ys = _axis_centers(h, sy, 2).reshape(1, -1, 1)
    xs = _axis_centers(w, sx, 2).reshape(1, 1, -1)
    fine = activities[_labels_at(anatomy, spec, zs, ys, xs)]
    activity = fine.reshape(d, 2, h, 2, w, 2).mean(axis=(1, 3, 5))

    vol = Volume3D(activity.astype(np.float32), spec.spacing_mm, "activity",
                   {"seed": spec.seed, "spec": spec.to_dict()})
    return vol, LabelVolume(labels, spec.spacing_mm)


def motion_displacement(model: MotionModel, amplitude_fraction: float,
                        shape=DEFAULT_SHAPE, spacing_mm=DEFAULT_SPACING_MM) -> FlowField:
    """Backward displacement (voxel units) for one breathing amplitude.

    Zero at amplitude 0; peak |axial| displacement equals the diaphragm
    excursion; chest expansion appears in the anterior-posterior component.
    """
    if not 0.0 <= amplitude_fraction <= 1.0:
        raise DomainError(f"amplitude fraction must be in [0,1], got {amplitude_fraction}")
    d, h, w = shape
    sz, sy, sx = spacing_mm
    u = np.zeros((3, d, h, w), dtype=np.float64)
    a = float(amplitude_fraction)
    if a > 0.0:
        z_w = model.axial_weight(_axis_centers(d, sz))
        y_w = model.expansion_weight(_axis_centers(h, sy))
        u[0] = (-a * model.diaphragm_motion_mm / sz) * z_w.reshape(-1, 1, 1)
        u[1] = (a * model.chest_expansion_mm / sy) * y_w.reshape(1, -1, 1)
    return FlowField(u, spacing_mm)


def render_frame(reference: Volume3D, flow: FlowField) -> Volume3D:
    """Frame(x) = reference(x + u(x)) by trilinear sampling, zeros padding."""
    if reference.shape != flow.shape:
        raise DimensionError(f"reference {reference.shape} vs flow {flow.shape}")
    out = warp.warp_with_flow(reference.tensor(torch.float64), flow.tensor(torch.float64))
    return reference.like(out.numpy().astype(np.float32))


def ground_truth_flow(model: MotionModel, a_from: float, a_to: float,
                      shape=DEFAULT_SHAPE, spacing_mm=DEFAULT_SPACING_MM,
                      max_iters: int = 100, tol: float = 1e-4) -> FlowField:
    """Flow v with warp(frame(a_from), v) == frame(a_to).

    v composes the target displacement with the fixed-point inverse of the
    source displacement: v(x) = u_to(x) + w_from(x + u_to(x)).
    """
    u_to = motion_displacement(model, a_to, shape, spacing_mm)
    if a_from == 0.0:
        return u_to  # inverse of the zero field is zero
    u_from = motion_displacement(model, a_from, shape, spacing_mm)
    w_from = warp.invert_flow(u_from.tensor(torch.float64), max_iters=max_iters, tol=tol)
    v = warp.compose_flow(u_to.tensor(torch.float64), w_from)
    return FlowField(v.numpy(), spacing_mm)


def sample_counts(activity: Volume3D, n_counts: int, rng_seed) -> Volume3D:
    """Multinomial draw of exactly ``n_counts`` events, p proportional to activity."""
    if n_counts < 0:
        raise DomainError(f"n_counts must be >= 0, got {n_counts}")
    total = activity.data.sum(dtype=np.float64)
    if n_counts == 0:
        return activity.like(np.zeros(activity.shape, dtype=np.int64), units="counts")
    if total <= 0:
        raise DomainError("cannot sample counts from an all-zero activity volume")
    p = activity.data.reshape(-1).astype(np.float64) / total
    rng = np.random.default_rng(rng_seed)
    counts = rng.multinomial(int(n_counts), p).reshape(activity.shape)
    return activity.like(counts, units="counts")


def sample_spec(rng_seed, ranges: ParameterRanges | None = None) -> PhantomSpec:
    """Draw a phantom spec from the configured parameter distributions."""
    ranges = ranges or ParameterRanges()
    rng = np.random.default_rng(rng_seed)

    def draw(lo_hi):
        lo, hi = lo_hi
        return float(rng.uniform(lo, hi)) if hi > lo else float(lo)

    diaphragm = draw(ranges.diaphragm_motion_mm)
    spec = PhantomSpec(
        body_scale_axial=draw(ranges.body_scale_axial),
        body_scale_transaxial=draw(ranges.body_scale_transaxial),
        shift_y_mm=draw(ranges.shift_y_mm),
        shift_x_mm=draw(ranges.shift_x_mm),
        fov_offset_mm=draw(ranges.fov_offset_mm),
        lesion_diameter_mm=draw(ranges.lesion_diameter_mm),
        lesion_center=(0.0, 0.0, 0.0),
        diaphragm_motion_mm=diaphragm,
        chest_expansion_mm=0.7 * diaphragm,
        organ_activities={organ: draw(r) for organ, r in ranges.activity.items()},
        seed=int(rng_seed) if np.isscalar(rng_seed) else 0,
        shape=ranges.shape,
        spacing_mm=ranges.spacing_mm,
    )
    center = _draw_lesion_center(rng, spec)
    return replace(spec, lesion_center=center)


def _lesion_fits(spec: PhantomSpec, anatomy: Anatomy, center, radius: float) -> bool:
    """Analytic check that a sphere stays inside the (pre-lesion) lung region."""
    lz, ly, lx = center
    dirs = np.array([(0, 0, 0)] + [(dz, dy, dx)
                                   for dz in (-1, 0, 1) for dy in (-1, 0, 1) for dx in (-1, 0, 1)
                                   if (dz, dy, dx) != (0, 0, 0)], dtype=np.float64)
    norms = np.linalg.norm(dirs[1:], axis=1, keepdims=True)
    dirs[1:] /= norms
    for scale in (1.0, 0.5):
        pts = np.array([lz, ly, lx]) + dirs * radius * scale
        labels = _labels_at(anatomy, spec, pts[:, 0:1], pts[:, 1:2], pts[:, 2:3],
                            with_lesion=False)
        if not np.all(np.diagonal(labels) == LUNG):
            return False
    return True


def _draw_lesion_center(rng: np.random.Generator, spec: PhantomSpec,
                        max_tries: int = 2000) -> tuple[float, float, float]:
    anatomy = derive_anatomy(spec)
    r = 0.5 * spec.lesion_diameter_mm
    sz, sy, sx = anatomy.lung_semi
    for _ in range(max_tries):
        lung_c = anatomy.lung_centers[int(rng.integers(len(anatomy.lung_centers)))]
        offset = rng.uniform(-1.0, 1.0, size=3) * (np.array([sz, sy, sx]) - r)
        candidate = tuple(np.array(lung_c) + offset)
        if _lesion_fits(spec, anatomy, candidate, r + 0.5):
            return candidate
    raise SpecificationError(
        f"no admissible lesion position for diameter {spec.lesion_diameter_mm:.1f} mm")


def frame_amplitudes(n_frames: int = 10) -> np.ndarray:
    """Amplitude fractions for frames spaced across one breathing cycle.

    Cosine spacing concentrates frames near end-exhale, like real breathing:
    a_k = (1 - cos(2 pi k / n)) / 2.
    """
    k = np.arange(n_frames)
    return (1.0 - np.cos(2.0 * np.pi * k / n_frames)) / 2.0


class Phantom:
    """A realized phantom: reference volumes plus its motion model."""

    def __init__(self, spec: PhantomSpec):
        self.spec = spec
        self.reference, self.labels = build_reference(spec)
        self.motion = motion_model(spec)

    def displacement(self, amplitude_fraction: float) -> FlowField:
        return motion_displacement(self.motion, amplitude_fraction,
                                   self.spec.shape, self.spec.spacing_mm)

    def frame(self, amplitude_fraction: float) -> Volume3D:
        if amplitude_fraction == 0.0:
            return self.reference
        return render_frame(self.reference, self.displacement(amplitude_fraction))

    def gt_flow(self, a_from: float, a_to: float) -> FlowField:
        return ground_truth_flow(self.motion, a_from, a_to,
                                 self.spec.shape, self.spec.spacing_mm)

    def counts(self, amplitude_fraction: float, n_counts: int, rng_seed) -> Volume3D:
        return sample_counts(self.frame(amplitude_fraction), n_counts, rng_seed)

    def lesion_mask_at(self, amplitude_fraction: float) -> np.ndarray:
        """Lesion voxels transported to the given amplitude (tracked pixels)."""
        if amplitude_fraction == 0.0:
            return self.labels.mask(LESION)
        indicator = torch.as_tensor(self.labels.mask(LESION).astype(np.float64))
        moved = warp.warp_with_flow(indicator, self.displacement(amplitude_fraction).tensor(torch.float64))
        return moved.numpy() >= 0.5
