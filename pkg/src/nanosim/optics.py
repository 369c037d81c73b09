"""Scalar diffraction model of the microscope imaging kernel.

The point spread function follows the Gibson-Lanni layered-medium model:
the intensity at lateral offset r and emitter depth z is the squared
magnitude of a pupil integral over the normalized aperture coordinate,
with an optical-path-difference term accounting for the sample medium,
the glass coverslip, and the immersion medium (design vs. actual).

A dense (r, z) lookup table is precomputed once per parameter set so that
frame rendering and MUSICAL test-point evaluation are cheap gather +
bilinear interpolation operations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import math

import numpy as np
from scipy.special import j0

try:  # optional JIT for the hot footprint kernel; numpy fallback below
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

__all__ = [
    "OpticsParams",
    "PsfModel",
    "build_psf",
    "psf_at",
    "default_window_size",
]

# Table resolution: well below the smallest simulated structure (25 nm).
RADIAL_STEP_UM = 0.002
AXIAL_STEP_UM = 0.010
RADIAL_EXTENT_UM = 3.0
AXIAL_EXTENT_UM = 1.0

_QUAD_NODES = 1200


@dataclass(frozen=True)
class OpticsParams:
    """Microscope and camera parameters for PSF simulation.

    Design (nominal) counterparts default to the actual values, i.e. no
    aberration mismatch between the as-built and as-designed system.
    """

    na: float = 1.49
    wavelength_nm: float = 660.0
    pixel_size_nm: float = 65.0
    coverslip_thickness_um: float = 170.0
    n_sample: float = 1.33
    n_coverslip: float = 1.515
    n_immersion: float = 1.515
    design_coverslip_thickness_um: float | None = None
    design_n_coverslip: float | None = None
    design_n_immersion: float | None = None

    def __post_init__(self):
        if not (0.0 < self.na < self.n_immersion):
            raise ValueError(
                f"numerical aperture {self.na} must lie in (0, n_immersion="
                f"{self.n_immersion}); larger values are outside the validity "
                "of the scalar layered-medium model"
            )
        if self.wavelength_nm <= 0 or self.pixel_size_nm <= 0:
            raise ValueError("wavelength and pixel size must be positive")

    @property
    def wavelength_um(self) -> float:
        return self.wavelength_nm * 1e-3

    @property
    def pixel_size_um(self) -> float:
        return self.pixel_size_nm * 1e-3

    def design(self) -> tuple[float, float, float]:
        """(coverslip thickness, n_coverslip, n_immersion) of the design."""
        return (
            self.design_coverslip_thickness_um
            if self.design_coverslip_thickness_um is not None
            else self.coverslip_thickness_um,
            self.design_n_coverslip if self.design_n_coverslip is not None else self.n_coverslip,
            self.design_n_immersion if self.design_n_immersion is not None else self.n_immersion,
        )


def _pupil_factor(n: float, na: float, rho: np.ndarray) -> np.ndarray:
    """sqrt(n^2 - NA^2 rho^2) as a complex array (principal branch).

    Beyond the critical aperture coordinate the root is imaginary; those
    pupil components are treated as evanescent and decay with axial
    distance instead of accumulating phase.
    """
    return np.sqrt((n**2 - (na * rho) ** 2).astype(complex))


def psf_field_integrand_phase(params: OpticsParams, rho: np.ndarray, z_um: np.ndarray) -> np.ndarray:
    """Complex pupil term exp(i k OPD) on a (rho, z) grid.

    The OPD combines the emitter-depth term in the sample medium with the
    coverslip/immersion mismatch terms; with matched design parameters the
    latter cancel exactly. Supercritical (evanescent) components decay as
    exp(-k |z| |Im sqrt|) so the field stays bounded on both sides of the
    focal plane.
    """
    k = 2.0 * np.pi / params.wavelength_um
    rho = np.asarray(rho, dtype=float)
    z = np.atleast_1d(np.asarray(z_um, dtype=float))

    cs = _pupil_factor(params.n_sample, params.na, rho)  # sample-depth term
    phase = k * np.multiply.outer(cs.real, z)
    damp = -k * np.multiply.outer(np.abs(cs.imag), np.abs(z))

    # Static mismatch terms (zero when design == actual).
    t_g0, n_g0, n_i0 = params.design()
    static = (
        params.coverslip_thickness_um * _pupil_factor(params.n_coverslip, params.na, rho)
        - t_g0 * _pupil_factor(n_g0, params.na, rho)
    )
    # Immersion thickness difference is not modeled independently; index
    # mismatch enters through the coverslip-equivalent term only.
    if params.n_immersion != n_i0:
        static = static + params.coverslip_thickness_um * (
            _pupil_factor(params.n_immersion, params.na, rho)
            - _pupil_factor(n_i0, params.na, rho)
        )
    phase = phase + k * static.real[:, None]
    damp = damp - k * np.abs(static.imag)[:, None]
    return np.exp(1j * phase + damp)


def psf_intensity_quadrature(
    params: OpticsParams,
    r_um: np.ndarray,
    z_um: np.ndarray,
    nodes: int = _QUAD_NODES,
) -> np.ndarray:
    """Evaluate |pupil integral|^2 on the outer grid r x z by Gauss-Legendre.

    This is the single evaluation path; the lookup table is built from it
    and the test oracle re-evaluates it with an independent adaptive rule.
    """
    r = np.atleast_1d(np.asarray(r_um, dtype=float))
    z = np.atleast_1d(np.asarray(z_um, dtype=float))
    x, w = np.polynomial.legendre.leggauss(nodes)
    rho = 0.5 * (x + 1.0)  # map [-1, 1] -> [0, 1]
    wgt = 0.5 * w

    k = 2.0 * np.pi / params.wavelength_um
    bessel = j0(k * params.na * np.multiply.outer(r, rho))  # (nr, nodes)
    pupil = psf_field_integrand_phase(params, rho, z)  # (nodes, nz)
    field = bessel @ (pupil * (rho * wgt)[:, None])  # (nr, nz)
    return np.abs(field) ** 2


@dataclass
class PsfModel:
    """Peak-normalized |PSF|^2 sampled on a regular (z, r) grid."""

    params: OpticsParams
    table: np.ndarray  # (nz, nr), peak-normalized
    r_axis_um: np.ndarray
    z_axis_um: np.ndarray
    normalization: float  # raw table maximum before normalization
    out_of_range_count: int = 0

    @property
    def r_step(self) -> float:
        return float(self.r_axis_um[1] - self.r_axis_um[0])

    @property
    def z_step(self) -> float:
        return float(self.z_axis_um[1] - self.z_axis_um[0])

    def radial_profile(self, z_um: float = 0.0) -> np.ndarray:
        iz = int(round((z_um - self.z_axis_um[0]) / self.z_step))
        return self.table[np.clip(iz, 0, len(self.z_axis_um) - 1)]

    def lateral_fwhm_um(self, z_um: float = 0.0) -> float:
        """Full width at half maximum of the radial profile at depth z."""
        prof = self.radial_profile(z_um)
        half = prof[0] / 2.0
        below = np.nonzero(prof < half)[0]
        if len(below) == 0:
            raise ValueError("profile never falls below half maximum within the table")
        i = below[0]
        # linear interpolation of the half crossing between samples i-1 and i
        r0, r1 = self.r_axis_um[i - 1], self.r_axis_um[i]
        p0, p1 = prof[i - 1], prof[i]
        r_half = r0 + (half - p0) / (p1 - p0) * (r1 - r0)
        return 2.0 * r_half


def build_psf(params: OpticsParams) -> PsfModel:
    """Tabulate the PSF on r in [0, 3 um], z in [-1, 1] um."""
    r_axis = np.arange(0.0, RADIAL_EXTENT_UM + RADIAL_STEP_UM / 2, RADIAL_STEP_UM)
    z_axis = np.arange(-AXIAL_EXTENT_UM, AXIAL_EXTENT_UM + AXIAL_STEP_UM / 2, AXIAL_STEP_UM)
    intensity = psf_intensity_quadrature(params, r_axis, z_axis)  # (nr, nz)
    table = intensity.T.copy()  # (nz, nr)
    peak = float(table.max())
    if peak <= 0:
        raise ValueError("degenerate PSF: zero peak intensity")
    table /= peak
    return PsfModel(params=params, table=table, r_axis_um=r_axis, z_axis_um=z_axis, normalization=peak)


def psf_at(model: PsfModel, dx_nm, dy_nm, z_nm):
    """Bilinear interpolation of the table in (r, z); nm offsets.

    Out-of-table points contribute zero intensity; occurrences are counted
    on the model for diagnostics.
    """
    dx = np.asarray(dx_nm, dtype=float) * 1e-3
    dy = np.asarray(dy_nm, dtype=float) * 1e-3
    z = np.asarray(z_nm, dtype=float) * 1e-3
    r = np.hypot(dx, dy)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    z = np.broadcast_to(np.atleast_1d(z), r.shape)

    out = _interp_r_z(model, r, z)
    oob = (r > model.r_axis_um[-1]) | (z < model.z_axis_um[0]) | (z > model.z_axis_um[-1])
    if oob.any():
        model.out_of_range_count += int(oob.sum())
        out = np.where(oob, 0.0, out)
    return float(out[0]) if scalar else out


def _interp_r_z(model: PsfModel, r: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Vectorized bilinear lookup; callers handle out-of-range masking."""
    fr = np.clip(r / model.r_step, 0.0, len(model.r_axis_um) - 1.000001)
    fz = np.clip((z - model.z_axis_um[0]) / model.z_step, 0.0, len(model.z_axis_um) - 1.000001)
    ir = fr.astype(np.intp)
    iz = fz.astype(np.intp)
    wr = fr - ir
    wz = fz - iz
    t = model.table
    v00 = t[iz, ir]
    v01 = t[iz, ir + 1]
    v10 = t[iz + 1, ir]
    v11 = t[iz + 1, ir + 1]
    return (1 - wz) * ((1 - wr) * v00 + wr * v01) + wz * ((1 - wr) * v10 + wr * v11)


def _lerp_rows_numpy(rows, dx, dy, inv_rstep, r_max, out):
    """Radial lerp of per-emitter profiles; returns the r-overflow count."""
    nr = rows.shape[1]
    r = np.sqrt(dx * dx + dy * dy)
    fr = np.clip(r * inv_rstep, 0.0, nr - 1.0)
    ir = np.minimum(fr.astype(np.intp), nr - 2)
    wr = fr - ir
    flat = np.ascontiguousarray(rows).reshape(-1)
    idx = ir + (np.arange(rows.shape[0], dtype=np.intp) * nr)[:, None]
    v0 = flat[idx]
    v1 = flat[idx + 1]
    np.multiply(v1 - v0, wr, out=out)
    out += v0
    oob = r > r_max
    if oob.any():
        out[oob] = 0.0
        return int(oob.sum())
    return 0


if numba is not None:

    @numba.njit(cache=True, fastmath=True)
    def _lerp_rows(rows, dx, dy, inv_rstep, r_max, out):  # pragma: no cover
        n_emitters, n_px = out.shape
        nr = rows.shape[1]
        oob = 0
        for e in range(n_emitters):
            for p in range(n_px):
                r = math.sqrt(dx[e, p] * dx[e, p] + dy[e, p] * dy[e, p])
                if r > r_max:
                    out[e, p] = 0.0
                    oob += 1
                    continue
                fr = r * inv_rstep
                i = int(fr)
                if i > nr - 2:
                    i = nr - 2
                w = fr - i
                out[e, p] = rows[e, i] + w * (rows[e, i + 1] - rows[e, i])
        return oob

else:  # pragma: no cover - exercised only without numba
    _lerp_rows = _lerp_rows_numpy


def sample_image(
    model: PsfModel,
    dx_um: np.ndarray,
    dy_um: np.ndarray,
    z_um: np.ndarray,
) -> np.ndarray:
    """PSF intensity for per-emitter pixel offset grids.

    dx_um, dy_um: (n_emitters, n_pixels) offsets emitter -> pixel center.
    z_um: (n_emitters,) emitter depths. Returns (n_emitters, n_pixels) in
    the offsets' floating dtype.

    Each emitter sits at one depth, so the axial interpolation collapses
    to a per-emitter radial profile up front; the per-pixel work is then
    a single 1-D lerp with gathers from a cache-resident row (JIT compiled
    when numba is available).
    """
    dx = np.asarray(dx_um)
    dy = np.asarray(dy_um)
    dtype = np.result_type(dx.dtype, dy.dtype, np.float32)
    dx = np.ascontiguousarray(dx, dtype=dtype)
    dy = np.ascontiguousarray(dy, dtype=dtype)
    t = model.table
    nz, nr = t.shape

    z = np.atleast_1d(np.asarray(z_um, dtype=float))
    fz = np.clip((z - model.z_axis_um[0]) / model.z_step, 0.0, nz - 1.000001)
    iz = fz.astype(np.intp)
    wz = fz - iz
    rows = ((1.0 - wz)[:, None] * t[iz] + wz[:, None] * t[iz + 1]).astype(dtype)

    # Depth outside the table: the whole emitter contributes nothing.
    z_oob = (z < model.z_axis_um[0]) | (z > model.z_axis_um[-1])
    if z_oob.any():
        rows[z_oob] = 0.0
        model.out_of_range_count += int(z_oob.sum()) * dx.shape[1]

    out = np.empty(dx.shape, dtype=dtype)
    r_oob = _lerp_rows(
        rows, dx, dy, 1.0 / model.r_step, float(model.r_axis_um[-1]), out
    )
    model.out_of_range_count += int(r_oob)
    return out


def default_window_size(model: PsfModel) -> int:
    """Smallest odd window (pixels) spanning twice the in-focus FWHM."""
    fwhm = model.lateral_fwhm_um(0.0)
    need = 2.0 * fwhm / model.params.pixel_size_um
    w = int(np.ceil(need))
    if w % 2 == 0:
        w += 1
    return max(w, 3)


def export_table(model: PsfModel, path) -> None:
    """Write the raw float32 table plus a metadata sidecar."""
    from . import stackio

    stackio.save_array(
        path,
        model.table.astype(np.float32),
        {
            "kind": "psf_table",
            "r_step_um": model.r_step,
            "z_step_um": model.z_step,
            "r_extent_um": float(model.r_axis_um[-1]),
            "z_min_um": float(model.z_axis_um[0]),
            "normalization": model.normalization,
            "optics": optics_metadata(model.params),
        },
    )


def optics_metadata(params: OpticsParams) -> dict:
    return {
        "na": params.na,
        "wavelength_nm": params.wavelength_nm,
        "pixel_size_nm": params.pixel_size_nm,
        "coverslip_thickness_um": params.coverslip_thickness_um,
        "n_sample": params.n_sample,
        "n_coverslip": params.n_coverslip,
        "n_immersion": params.n_immersion,
    }


def optics_from_metadata(meta: dict) -> OpticsParams:
    return OpticsParams(
        na=meta["na"],
        wavelength_nm=meta["wavelength_nm"],
        pixel_size_nm=meta["pixel_size_nm"],
        coverslip_thickness_um=meta.get("coverslip_thickness_um", 170.0),
        n_sample=meta.get("n_sample", 1.33),
        n_coverslip=meta.get("n_coverslip", 1.515),
        n_immersion=meta.get("n_immersion", 1.515),
    )
