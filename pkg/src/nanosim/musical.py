"""Eigen-subspace super-resolution reconstruction of blinking-emitter stacks.

A window slides over the camera image; the windowed patch-over-time matrix
is decomposed into orthonormal eigenimages. Eigenimages with large singular
values span the signal subspace (linear combinations of PSFs at emitter
locations), the rest span the noise subspace. For every test point on a
subpixel grid, the ratio of the projections of the local PSF vector onto
the two subspaces, raised to a contrast exponent, forms the indicator
value. High values mark emitter locations well below the diffraction limit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .imaging import ImageStack
from .optics import OpticsParams, PsfModel, build_psf, default_window_size, sample_image

__all__ = [
    "MusicalParams",
    "SubspaceSplit",
    "NanoscopyImage",
    "decompose_window",
    "select_signal_dimension",
    "indicator",
    "reconstruct",
]

# Relative floor on the noise-subspace projection; the indicator is capped
# at (1/floor)^alpha to avoid division blow-up at exact signal vectors.
NOISE_FLOOR = 1e-12

_ROW_BLOCK = 8  # window rows processed per batch (memory bound)


@dataclass(frozen=True)
class MusicalParams:
    optics: OpticsParams
    alpha: float = 4.0
    subpixels: int = 10
    window_size: int | None = None  # None: derived from the PSF width
    threshold: float | None = None  # None: automatic (largest log-gap)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.subpixels < 1:
            raise ValueError("subpixels must be >= 1")
        if self.window_size is not None and (self.window_size < 3 or self.window_size % 2 == 0):
            raise ValueError("window_size must be odd and >= 3")

    def metadata(self) -> dict:
        return {
            "alpha": self.alpha,
            "subpixels": self.subpixels,
            "window_size": self.window_size,
            "threshold": self.threshold,
            "indicator_convention": "norm-ratio",
        }


@dataclass
class SubspaceSplit:
    """Orthonormal eigenimages with nonincreasing singular values."""

    eigenimages: np.ndarray  # (w^2, n) columns orthonormal
    singular_values: np.ndarray  # (n,) descending
    signal_count: int | None = None


@dataclass
class NanoscopyImage:
    """Subpixelated indicator-function image with provenance."""

    pixels: np.ndarray  # (H*subpixels, W*subpixels) nonnegative
    subpixels: int
    pixel_size_nm: float  # camera pixel size of the source stack
    params: MusicalParams | None = None
    capped_points: int = 0

    @property
    def subpixel_size_nm(self) -> float:
        return self.pixel_size_nm / self.subpixels


def decompose_window(patches: np.ndarray) -> SubspaceSplit:
    """Eigenimages and singular values of the (w^2 x T) patch matrix.

    No temporal mean subtraction: the static component belongs to the
    signal subspace. The decomposition is done through the w^2 x w^2 Gram
    matrix, which always yields a complete orthonormal basis even when
    T < w^2 (the tail carries zero singular values).
    """
    m = np.asarray(patches, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("patches must be a (w^2, T) matrix")
    if m.shape[1] < 2:
        raise ValueError("need at least 2 frames")
    gram = m @ m.T
    eigvals, vecs = np.linalg.eigh(gram)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    vecs = vecs[:, order]
    return SubspaceSplit(eigenimages=vecs, singular_values=np.sqrt(eigvals))


def select_signal_dimension(singular_values: np.ndarray, threshold: float | None = None) -> int:
    """Signal-subspace dimension k in [1, n-1].

    threshold=None: largest drop in log singular values. The dominant
    component (static background plus mean signal) always belongs to the
    signal subspace, so the drop is searched strictly below it; otherwise
    the background gap absorbs the split and buries the blinking
    components in the noise subspace. First index wins on ties; a
    featureless spectrum (constant log-gap, i.e. geometric decay) has no
    distinguished drop and yields k=1. A fixed threshold counts the
    values at or above it.
    """
    sv = np.asarray(singular_values, dtype=float)
    if len(sv) < 2:
        raise ValueError("need at least 2 singular values")
    if threshold is not None:
        k = int(np.count_nonzero(sv >= threshold))
        return min(max(k, 1), len(sv) - 1)
    if np.allclose(sv, sv[0]):
        warnings.warn("all singular values equal: defaulting to k=1")
        return 1
    if len(sv) == 2:
        return 1
    floor = max(sv[0], np.finfo(float).tiny) * 1e-15
    logs = np.log(np.maximum(sv, floor))
    all_gaps = logs[:-1] - logs[1:]
    if np.allclose(all_gaps, all_gaps[0], rtol=1e-9, atol=1e-12):
        return 1
    gaps = all_gaps[1:]  # drop below index i+1, i >= 1
    return int(np.argmax(gaps)) + 2


def indicator(test_psf: np.ndarray, split: SubspaceSplit, alpha: float = 4.0) -> float:
    """(|P_signal g| / |P_noise g|)^alpha for the normalized PSF vector g."""
    g = np.asarray(test_psf, dtype=float).reshape(-1)
    norm = np.linalg.norm(g)
    if norm == 0:
        raise ValueError("test PSF vector must be nonzero")
    g = g / norm
    if split.signal_count is None:
        raise ValueError("subspace split has no signal_count; select one first")
    k = split.signal_count
    coeff = split.eigenimages.T @ g
    ps = np.linalg.norm(coeff[:k])
    pn = np.linalg.norm(coeff[k:])
    if pn < NOISE_FLOOR:
        return (1.0 / NOISE_FLOOR) ** alpha
    return float((ps / pn) ** alpha)


def _test_psf_matrix(psf: PsfModel, window: int, subpixels: int) -> np.ndarray:
    """Normalized in-focus PSF vectors for the central-pixel subpixel grid.

    Returns (w^2, subpixels^2); identical for every window position since
    the grid is defined relative to the window center.
    """
    px = psf.params.pixel_size_um
    half = window // 2
    centers = np.arange(-half, half + 1) * px  # window pixel centers
    cy, cx = np.meshgrid(centers, centers, indexing="ij")
    # Test points inside the central pixel, subpixel-center convention.
    t = ((np.arange(subpixels) + 0.5) / subpixels - 0.5) * px
    ty, tx = np.meshgrid(t, t, indexing="ij")
    dx = cx.reshape(-1, 1) - tx.reshape(1, -1)
    dy = cy.reshape(-1, 1) - ty.reshape(1, -1)
    g = sample_image(psf, dx.T, dy.T, np.zeros(subpixels * subpixels)).T  # (w^2, S^2)
    norms = np.linalg.norm(g, axis=0)
    if (norms == 0).any():
        raise ValueError("degenerate test PSF vector (window outside PSF support)")
    return g / norms


def _signal_counts_auto(sv: np.ndarray) -> np.ndarray:
    """Vectorized largest-log-gap rule over stacked singular value rows."""
    floor = np.maximum(sv[:, :1], np.finfo(float).tiny) * 1e-15
    logs = np.log(np.maximum(sv, floor))
    all_gaps = logs[:, :-1] - logs[:, 1:]
    k = np.argmax(all_gaps[:, 1:], axis=1) + 2  # dominant is always signal
    flat = np.all(np.abs(sv - sv[:, :1]) <= 1e-12 * np.abs(sv[:, :1]), axis=1)
    geometric = np.all(
        np.abs(all_gaps - all_gaps[:, :1]) <= 1e-9 * np.abs(all_gaps[:, :1]) + 1e-12,
        axis=1,
    )
    k[flat | geometric] = 1
    return k


def reconstruct(
    stack: ImageStack,
    params: MusicalParams,
    psf: PsfModel | None = None,
) -> NanoscopyImage:
    """Full-image reconstruction: one window per camera pixel (stride 1).

    Each window contributes the subpixel block of its central pixel, so the
    output tiles seamlessly to subpixels x the input dimensions. Borders
    are handled by zero padding.
    """
    if stack.n_frames < 2:
        raise ValueError("MUSICAL needs at least 2 frames of temporal variation")
    if psf is None:
        psf = build_psf(params.optics)
    elif psf.params.pixel_size_nm != params.optics.pixel_size_nm:
        raise ValueError("PSF model pixel size disagrees with MUSICAL params")
    if abs(stack.pixel_size_nm - params.optics.pixel_size_nm) > 1e-9:
        raise ValueError(
            f"stack pixel size {stack.pixel_size_nm} nm does not match optics "
            f"{params.optics.pixel_size_nm} nm"
        )
    w = params.window_size or default_window_size(psf)
    T, H, W = stack.shape
    if w > min(H, W):
        raise ValueError(f"window {w} exceeds image size {H}x{W}")
    s = params.subpixels
    alpha = params.alpha
    half = w // 2
    w2 = w * w

    g_test = _test_psf_matrix(psf, w, s).astype(np.float32)  # (w^2, S^2)
    padded = np.zeros((T, H + 2 * half, W + 2 * half), dtype=np.float32)
    padded[:, half : half + H, half : half + W] = stack.frames
    windows = np.lib.stride_tricks.sliding_window_view(padded, (w, w), axis=(1, 2))
    # windows: (T, H, W, w, w)

    out = np.empty((H * s, W * s), dtype=np.float64)
    capped = 0
    cap_value = (1.0 / NOISE_FLOOR) ** alpha
    for r0 in range(0, H, _ROW_BLOCK):
        r1 = min(r0 + _ROW_BLOCK, H)
        block = windows[:, r0:r1]  # (T, rb, W, w, w)
        a = np.ascontiguousarray(
            block.transpose(1, 2, 3, 4, 0).reshape((r1 - r0) * W, w2, T)
        )
        # Single precision carries the bulk algebra (Gram, eigh, projection);
        # the ratio/power finalization below is done in double so extreme
        # signal-to-noise ratios do not overflow.
        gram = a @ a.transpose(0, 2, 1)
        eigvals, vecs = np.linalg.eigh(gram)  # ascending
        eigvals = np.clip(eigvals[:, ::-1].astype(np.float64), 0.0, None)
        vecs = vecs[:, :, ::-1]
        sv = np.sqrt(eigvals)
        if params.threshold is None:
            k = _signal_counts_auto(sv)
        else:
            k = np.clip((sv >= params.threshold).sum(axis=1), 1, w2 - 1)
        coeff = np.matmul(vecs.transpose(0, 2, 1), g_test)  # (n_win, w^2, S^2)
        energy = np.cumsum(np.square(coeff, dtype=np.float32), axis=1)
        ps2 = np.take_along_axis(energy, (k - 1)[:, None, None], axis=1)[:, 0, :].astype(
            np.float64
        )
        total = energy[:, -1, :].astype(np.float64)
        pn2 = np.clip(total - ps2, 0.0, None)
        hit_floor = pn2 < NOISE_FLOOR**2
        capped += int(hit_floor.sum())
        ratio = ps2 / np.maximum(pn2, NOISE_FLOOR**2)
        f = np.minimum(ratio ** (alpha / 2.0), cap_value)
        f[hit_floor] = cap_value
        # (n_win, S^2) -> tile central blocks into the output grid
        f = f.reshape(r1 - r0, W, s, s).transpose(0, 2, 1, 3).reshape((r1 - r0) * s, W * s)
        out[r0 * s : r1 * s] = f
    return NanoscopyImage(
        pixels=out,
        subpixels=s,
        pixel_size_nm=stack.pixel_size_nm,
        params=replace(params, window_size=w),
        capped_points=capped,
    )
