"""Sample geometry simulation and stochastic emitter placement.

Three sub-cellular structure families are simulated in a bounded 3D scene:
actin filaments (spline curves labeled along their length), mitochondria
(tubes of fixed radius swept along spline curves, labeled on the surface),
and vesicles (spheres with radius drawn per instance, labeled on the
surface). Emitter counts follow a Poisson law with mean density x measure.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = [
    "SceneBounds",
    "StructureKind",
    "StructureSpec",
    "EmitterSet",
    "Curve",
    "TubeSurface",
    "SphereSurface",
    "sample_spline_curve",
    "label_curve",
    "build_mitochondrion",
    "label_surface",
    "generate_scene",
]

ARC_TABLE_RESOLUTION_UM = 0.001  # 1 nm arc-length table
_RETRY_LIMIT = 100


class GeometryError(RuntimeError):
    pass


class SelfIntersectionError(GeometryError):
    """Tube radius exceeds the local curvature radius of its center curve."""


class StructureKind(enum.Enum):
    ACTIN_FILAMENT = "actin"
    MITOCHONDRION = "mitochondria"
    VESICLE = "vesicles"


@dataclass(frozen=True)
class SceneBounds:
    """Axis-aligned simulation volume in micrometers; z = 0 is the focal plane."""

    x_range: tuple[float, float] = (-2.5, 2.5)
    y_range: tuple[float, float] = (-2.5, 2.5)
    z_range: tuple[float, float] = (-0.5, 0.5)

    def __post_init__(self):
        for lo, hi in (self.x_range, self.y_range, self.z_range):
            if not hi > lo:
                raise ValueError("scene bounds must be nonempty intervals")

    def shrunk(self, margin_um: float) -> "SceneBounds":
        ranges = []
        for lo, hi in (self.x_range, self.y_range, self.z_range):
            if hi - lo <= 2 * margin_um:
                raise GeometryError(
                    f"margin {margin_um} um leaves no room inside [{lo}, {hi}] um"
                )
            ranges.append((lo + margin_um, hi - margin_um))
        return SceneBounds(*ranges)

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        p = np.atleast_2d(points)
        ok = np.ones(len(p), dtype=bool)
        for axis, (lo, hi) in enumerate((self.x_range, self.y_range, self.z_range)):
            ok &= (p[:, axis] >= lo - tol) & (p[:, axis] <= hi + tol)
        return ok

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lows = np.array([self.x_range[0], self.y_range[0], self.z_range[0]])
        highs = np.array([self.x_range[1], self.y_range[1], self.z_range[1]])
        return rng.uniform(lows, highs, size=(n, 3))


@dataclass(frozen=True)
class StructureSpec:
    """Per-kind geometry parameters and labeling densities.

    Densities are emitters per micrometer for curves (actin) and emitters
    per square micrometer for surfaces (mitochondria, vesicles).
    """

    kind: StructureKind
    count_range: tuple[int, int] = (1, 1)
    control_point_range: tuple[int, int] = (3, 6)
    max_filament_length_um: float = 5.0
    tube_radius_nm: float = 150.0
    vesicle_radius_range_nm: tuple[float, float] = (25.0, 500.0)
    density: float = 100.0

    def __post_init__(self):
        if self.density <= 0:
            raise ValueError("emitter density must be positive")
        if self.count_range[0] < 1 or self.count_range[1] < self.count_range[0]:
            raise ValueError("count_range must be a nonempty positive integer interval")
        if self.control_point_range[0] < 3:
            raise ValueError("need at least 3 spline control points")

    @classmethod
    def default(cls, kind: StructureKind) -> "StructureSpec":
        if kind is StructureKind.ACTIN_FILAMENT:
            return cls(kind=kind, count_range=(3, 10), density=100.0)
        if kind is StructureKind.MITOCHONDRION:
            return cls(kind=kind, count_range=(1, 4), density=500.0)
        return cls(kind=kind, count_range=(10, 30), density=2000.0)


@dataclass
class EmitterSet:
    """3D fluorophore positions labeling one simulated scene."""

    positions: np.ndarray  # (N, 3) um
    structure_id: np.ndarray  # (N,) int
    kind: StructureKind
    seed: int | None = None

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float)).reshape(-1, 3)
        self.structure_id = np.asarray(self.structure_id, dtype=int).reshape(-1)
        if len(self.positions) != len(self.structure_id):
            raise ValueError("positions and structure ids must align")

    def __len__(self) -> int:
        return len(self.positions)

    @staticmethod
    def merge(sets: list["EmitterSet"], kind: StructureKind, seed=None) -> "EmitterSet":
        if not sets:
            return EmitterSet(np.empty((0, 3)), np.empty(0, dtype=int), kind, seed)
        pos = np.concatenate([s.positions for s in sets])
        sid = np.concatenate(
            [np.full(len(s), i, dtype=int) for i, s in enumerate(sets)]
        )
        return EmitterSet(pos, sid, kind, seed)

    def to_table(self, path) -> None:
        """Plain-text export: x_um y_um z_um structure_id."""
        with open(path, "w") as fh:
            fh.write("# x_um\ty_um\tz_um\tstructure_id\n")
            for (x, y, z), sid in zip(self.positions, self.structure_id):
                fh.write(f"{x:.9f}\t{y:.9f}\t{z:.9f}\t{sid}\n")


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass
class Curve:
    """Densely sampled smooth curve with an arc-length parametrization."""

    points: np.ndarray  # (M, 3) um, ~1 nm arc spacing
    arclen: np.ndarray  # (M,) cumulative arc length, arclen[0] == 0
    control_points: np.ndarray | None = None

    @property
    def length(self) -> float:
        return float(self.arclen[-1])

    def at(self, s) -> np.ndarray:
        """Position(s) at arc length s (clamped to [0, length])."""
        s = np.clip(np.atleast_1d(np.asarray(s, dtype=float)), 0.0, self.length)
        out = np.empty((len(s), 3))
        for axis in range(3):
            out[:, axis] = np.interp(s, self.arclen, self.points[:, axis])
        return out

    def tangents(self) -> np.ndarray:
        t = np.gradient(self.points, self.arclen, axis=0)
        return t / np.linalg.norm(t, axis=1, keepdims=True)

    def curvature(self) -> np.ndarray:
        """|dT/ds| from the dense sampling (coarsened to limit noise)."""
        step = max(1, int(round(0.02 / max(ARC_TABLE_RESOLUTION_UM, 1e-9))))
        pts = self.points[::step]
        s = self.arclen[::step]
        if len(pts) < 3:
            return np.zeros(len(self.points))
        d1 = np.gradient(pts, s, axis=0)
        d2 = np.gradient(d1, s, axis=0)
        cross = np.cross(d1, d2)
        denom = np.linalg.norm(d1, axis=1) ** 3
        kappa = np.linalg.norm(cross, axis=1) / np.maximum(denom, 1e-12)
        return np.interp(self.arclen, s, kappa)


def sample_spline_curve(
    n_control: int,
    bounds: SceneBounds,
    max_length_um: float = 5.0,
    rng=None,
) -> Curve:
    """Interpolating natural cubic spline through random control points.

    The curve is truncated so its arc length never exceeds max_length_um.
    Coincident control points are resampled internally up to a retry limit.
    """
    if n_control < 3:
        raise ValueError("need at least 3 control points")
    rng = _as_rng(rng)
    for _ in range(_RETRY_LIMIT):
        ctrl = bounds.sample(n_control, rng)
        chord = np.linalg.norm(np.diff(ctrl, axis=0), axis=1)
        if np.all(chord > 1e-6):
            return _spline_through(ctrl, max_length_um)
    raise GeometryError(
        f"failed to draw {n_control} distinct control points in {_RETRY_LIMIT} attempts"
    )


def _spline_through(ctrl: np.ndarray, max_length_um: float) -> Curve:
    chord = np.linalg.norm(np.diff(ctrl, axis=0), axis=1)
    t = np.concatenate([[0.0], np.cumsum(chord)])
    spline = CubicSpline(t, ctrl, axis=0, bc_type="natural")

    # Dense evaluation, then resample the arc-length table at ~1 nm.
    n_dense = max(int(t[-1] / (ARC_TABLE_RESOLUTION_UM / 2)), 64)
    u = np.linspace(0.0, t[-1], n_dense)
    pts = spline(u)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    if arc[-1] > max_length_um:
        keep = arc <= max_length_um
        last = np.count_nonzero(keep)
        pts = pts[:last]
        arc = arc[:last]
    return Curve(points=pts, arclen=arc, control_points=ctrl)


def label_curve(curve: Curve, density_per_um: float, rng=None) -> EmitterSet:
    """Poisson(density x length) emitters placed uniformly in arc length."""
    if density_per_um <= 0:
        raise ValueError("density must be positive")
    rng = _as_rng(rng)
    if curve.length <= 0:
        warnings.warn("zero-length curve: empty emitter set")
        return EmitterSet(np.empty((0, 3)), np.empty(0, dtype=int), StructureKind.ACTIN_FILAMENT)
    n = rng.poisson(density_per_um * curve.length)
    s = rng.uniform(0.0, curve.length, size=n)
    return EmitterSet(curve.at(s), np.zeros(n, dtype=int), StructureKind.ACTIN_FILAMENT)


@dataclass
class TubeSurface:
    """Tube of constant radius swept along a curve, with hemispherical caps."""

    curve: Curve
    radius_um: float
    normals: np.ndarray = field(default=None, repr=False)  # (M, 3) rotation-minimizing
    binormals: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.normals is None:
            self._build_frames()

    def _build_frames(self):
        tangents = self.curve.tangents()
        m = len(tangents)
        normals = np.empty((m, 3))
        # Initial normal: any vector orthogonal to the first tangent.
        t0 = tangents[0]
        ref = np.array([1.0, 0.0, 0.0])
        if abs(t0 @ ref) > 0.9:
            ref = np.array([0.0, 1.0, 0.0])
        n = np.cross(t0, ref)
        normals[0] = n / np.linalg.norm(n)
        # Propagate by projecting out the new tangent (rotation minimizing).
        step = max(1, m // 4000)
        prev = normals[0]
        idx = list(range(0, m, step))
        if idx[-1] != m - 1:
            idx.append(m - 1)
        coarse = np.empty((len(idx), 3))
        for j, i in enumerate(idx):
            v = prev - (prev @ tangents[i]) * tangents[i]
            nv = np.linalg.norm(v)
            if nv < 1e-12:
                v = np.cross(tangents[i], prev)
                nv = np.linalg.norm(v)
            prev = v / nv
            coarse[j] = prev
        s_coarse = self.curve.arclen[idx]
        for axis in range(3):
            normals[:, axis] = np.interp(self.curve.arclen, s_coarse, coarse[:, axis])
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        # Re-orthogonalize against the tangents after interpolation.
        dots = np.einsum("ij,ij->i", normals, tangents)
        normals -= dots[:, None] * tangents
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        self.normals = normals
        self.binormals = np.cross(tangents, normals)

    @property
    def lateral_area(self) -> float:
        # Tube lateral area is exactly 2*pi*r*L for r below the curvature radius.
        return 2.0 * np.pi * self.radius_um * self.curve.length

    @property
    def cap_area(self) -> float:
        return 4.0 * np.pi * self.radius_um**2  # two hemispheres

    @property
    def area(self) -> float:
        return self.lateral_area + self.cap_area

    def sample_points(self, n: int, rng: np.random.Generator) -> np.ndarray:
        n_lat = rng.binomial(n, self.lateral_area / self.area) if n else 0
        pts = []
        if n_lat:
            pts.append(self._sample_lateral(n_lat, rng))
        n_cap = n - n_lat
        if n_cap:
            pts.append(self._sample_caps(n_cap, rng))
        return np.concatenate(pts) if pts else np.empty((0, 3))

    def _sample_lateral(self, n: int, rng: np.random.Generator) -> np.ndarray:
        # Area element dA = r (1 - kappa r cos(phi)) ds dphi: rejection-weight
        # the (s, phi) proposal so labeling stays uniform per unit area.
        kappa = self.curve.curvature()
        kr_max = float(np.max(kappa) * self.radius_um)
        out = np.empty((n, 3))
        got = 0
        while got < n:
            batch = max(2 * (n - got), 64)
            s = rng.uniform(0.0, self.curve.length, size=batch)
            phi = rng.uniform(0.0, 2 * np.pi, size=batch)
            kr = np.interp(s, self.curve.arclen, kappa) * self.radius_um
            w = (1.0 - kr * np.cos(phi)) / (1.0 + min(kr_max, 1.0))
            accept = rng.random(batch) < w
            s, phi = s[accept], phi[accept]
            take = min(len(s), n - got)
            if take == 0:
                continue
            s, phi = s[:take], phi[:take]
            idx = np.searchsorted(self.curve.arclen, s).clip(0, len(self.curve.arclen) - 1)
            center = self.curve.at(s)
            nrm = self.normals[idx]
            bnm = self.binormals[idx]
            out[got : got + take] = center + self.radius_um * (
                np.cos(phi)[:, None] * nrm + np.sin(phi)[:, None] * bnm
            )
            got += take
        return out

    def _sample_caps(self, n: int, rng: np.random.Generator) -> np.ndarray:
        tangents = self.curve.tangents()
        ends = [(self.curve.points[0], -tangents[0]), (self.curve.points[-1], tangents[-1])]
        which = rng.integers(0, 2, size=n)
        dirs = rng.normal(size=(n, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        out = np.empty((n, 3))
        for i, (center, axis) in enumerate(ends):
            sel = which == i
            d = dirs[sel]
            # Fold onto the outward hemisphere of this end cap.
            proj = d @ axis
            d = np.where(proj[:, None] < 0, d - 2 * proj[:, None] * axis, d)
            out[sel] = center + self.radius_um * d
        return out


@dataclass
class SphereSurface:
    center: np.ndarray
    radius_um: float

    @property
    def area(self) -> float:
        return 4.0 * np.pi * self.radius_um**2

    def sample_points(self, n: int, rng: np.random.Generator) -> np.ndarray:
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return np.asarray(self.center) + self.radius_um * d


def build_mitochondrion(curve: Curve, radius_nm: float = 150.0) -> TubeSurface:
    """Sweep a tube of the given radius along the curve.

    Rejects curves whose curvature radius drops below the tube radius
    anywhere (the swept surface would self-intersect).
    """
    if radius_nm <= 0:
        raise ValueError("tube radius must be positive")
    radius_um = radius_nm * 1e-3
    kappa_max = float(np.max(curve.curvature()))
    if kappa_max * radius_um >= 1.0:
        raise SelfIntersectionError(
            f"curvature radius {1.0 / kappa_max:.4f} um below tube radius {radius_um:.4f} um"
        )
    return TubeSurface(curve=curve, radius_um=radius_um)


def label_surface(surface, density_per_um2: float, rng=None, kind: StructureKind | None = None) -> EmitterSet:
    """Poisson(density x area) emitters placed uniformly on the surface."""
    if density_per_um2 <= 0:
        raise ValueError("density must be positive")
    rng = _as_rng(rng)
    kind = kind or (
        StructureKind.VESICLE if isinstance(surface, SphereSurface) else StructureKind.MITOCHONDRION
    )
    if surface.area <= 0:
        warnings.warn("zero-area surface: empty emitter set")
        return EmitterSet(np.empty((0, 3)), np.empty(0, dtype=int), kind)
    n = rng.poisson(density_per_um2 * surface.area)
    pts = surface.sample_points(n, rng)
    return EmitterSet(pts, np.zeros(n, dtype=int), kind)


def generate_scene(spec: StructureSpec, bounds: SceneBounds, rng=None) -> EmitterSet:
    """Instance-count draw, per-instance build, merged labeled emitter set.

    Control points (and sphere centers) are drawn inside bounds shrunk by
    the structure's own radius so every emitter respects the scene bounds.
    """
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = _as_rng(rng)
    lo, hi = spec.count_range
    count = int(rng.integers(lo, hi + 1))
    instances: list[EmitterSet] = []
    for i in range(count):
        try:
            instances.append(_build_instance(spec, bounds, rng))
        except GeometryError as exc:
            raise GeometryError(f"{spec.kind.value} instance {i}: {exc}") from exc
    merged = EmitterSet.merge(instances, spec.kind, seed)
    inside = bounds.contains(merged.positions)
    if not inside.all():
        # Spline interpolation may overshoot the control hull slightly;
        # clip the rare stragglers back onto the boundary.
        lows = np.array([bounds.x_range[0], bounds.y_range[0], bounds.z_range[0]])
        highs = np.array([bounds.x_range[1], bounds.y_range[1], bounds.z_range[1]])
        merged.positions = np.clip(merged.positions, lows, highs)
    return merged


def _build_instance(spec: StructureSpec, bounds: SceneBounds, rng: np.random.Generator) -> EmitterSet:
    if spec.kind is StructureKind.ACTIN_FILAMENT:
        n_ctrl = int(rng.integers(spec.control_point_range[0], spec.control_point_range[1] + 1))
        curve = sample_spline_curve(n_ctrl, bounds, spec.max_filament_length_um, rng)
        return label_curve(curve, spec.density, rng)

    if spec.kind is StructureKind.MITOCHONDRION:
        radius_um = spec.tube_radius_nm * 1e-3
        inner = bounds.shrunk(radius_um)
        n_ctrl = int(rng.integers(spec.control_point_range[0], spec.control_point_range[1] + 1))
        for _ in range(_RETRY_LIMIT):
            curve = sample_spline_curve(n_ctrl, inner, spec.max_filament_length_um, rng)
            try:
                tube = build_mitochondrion(curve, spec.tube_radius_nm)
            except SelfIntersectionError:
                continue
            return label_surface(tube, spec.density, rng, StructureKind.MITOCHONDRION)
        raise GeometryError(f"no self-intersection-free tube in {_RETRY_LIMIT} attempts")

    # Vesicle: cap the radius so a valid center position exists in bounds.
    half_extents = [
        (hi - lo) / 2 for lo, hi in (bounds.x_range, bounds.y_range, bounds.z_range)
    ]
    r_lo = spec.vesicle_radius_range_nm[0] * 1e-3
    r_hi = min(spec.vesicle_radius_range_nm[1] * 1e-3, min(half_extents) - 1e-3)
    if r_hi <= r_lo:
        raise GeometryError("vesicle radius range infeasible for scene bounds")
    radius = rng.uniform(r_lo, r_hi)
    center = bounds.shrunk(radius).sample(1, rng)[0]
    sphere = SphereSurface(center=center, radius_um=radius)
    return label_surface(sphere, spec.density, rng, StructureKind.VESICLE)
