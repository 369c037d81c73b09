"""Independent reference implementations used only by the tests.

Deliberately written with different tools than the package: adaptive
scalar quadrature instead of fixed Gauss-Legendre for the PSF, explicit
per-window Python loops instead of FFT convolution for SSIM/MS-SSIM.
"""

import numpy as np
from scipy.integrate import quad
from scipy.special import j0


def psf_intensity_oracle(params, r_um: float, z_um: float) -> float:
    """|pupil integral|^2 by adaptive quadrature of the real/imag parts.

    Same physical model as the package: layered-medium optical path with
    the principal-branch root; supercritical pupil components decay
    exponentially with |z| instead of accumulating phase.
    """
    k = 2.0 * np.pi / (params.wavelength_nm * 1e-3)
    na = params.na
    n_s = params.n_sample

    def integrand(rho, part):
        root = complex(n_s**2 - (na * rho) ** 2) ** 0.5
        phase = k * root.real * z_um
        damp = -k * abs(root.imag) * abs(z_um)
        value = j0(k * na * r_um * rho) * np.exp(damp) * rho
        return value * (np.cos(phase) if part == "re" else np.sin(phase))

    re = quad(lambda t: integrand(t, "re"), 0.0, 1.0, limit=400)[0]
    im = quad(lambda t: integrand(t, "im"), 0.0, 1.0, limit=400)[0]
    return re**2 + im**2


def gaussian_kernel_oracle(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim_components_oracle(x, y, window=11, sigma=1.5):
    """Per-window luminance and contrast-structure maps via explicit loops."""
    kernel = gaussian_kernel_oracle(window, sigma)
    c1 = 0.01**2
    c2 = 0.03**2
    nh = x.shape[0] - window + 1
    nw = x.shape[1] - window + 1
    lum = np.empty((nh, nw))
    cs = np.empty((nh, nw))
    for i in range(nh):
        for j in range(nw):
            wx = x[i : i + window, j : j + window]
            wy = y[i : i + window, j : j + window]
            mx = float((kernel * wx).sum())
            my = float((kernel * wy).sum())
            vx = float((kernel * (wx - mx) ** 2).sum())
            vy = float((kernel * (wy - my) ** 2).sum())
            cov = float((kernel * (wx - mx) * (wy - my)).sum())
            lum[i, j] = (2 * mx * my + c1) / (mx**2 + my**2 + c1)
            cs[i, j] = (2 * cov + c2) / (vx + vy + c2)
    return lum, cs


def ssim_oracle(x, y, window=11, sigma=1.5) -> float:
    lum, cs = ssim_components_oracle(x, y, window, sigma)
    return float(np.mean(lum * cs))


def downsample2_oracle(img: np.ndarray) -> np.ndarray:
    h, w = (img.shape[0] // 2) * 2, (img.shape[1] // 2) * 2
    t = img[:h, :w]
    return 0.25 * (t[0::2, 0::2] + t[1::2, 0::2] + t[0::2, 1::2] + t[1::2, 1::2])


def ms_ssim_oracle(x, y, levels: int, window=11, sigma=1.5) -> float:
    value = 1.0
    for m in range(levels):
        lum, cs = ssim_components_oracle(x, y, window, sigma)
        if m == levels - 1:
            value *= float(np.mean(lum * cs))
        else:
            value *= float(np.mean(cs))
            x = downsample2_oracle(x)
            y = downsample2_oracle(y)
    return value


def psnr_oracle(x, y) -> float:
    mse = float(np.mean((x - y) ** 2))
    return float("inf") if mse == 0 else 10.0 * np.log10(1.0 / mse)
