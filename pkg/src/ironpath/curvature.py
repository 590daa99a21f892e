"""Curvature scan: find smooth height bumps via the Hessian shape-index rule.

Pipeline: optional Gaussian pre-smooth, per-pixel Hessian eigenvalues, shape
index, threshold to bump points, 8-connected components, volume ranking and
per-bump Gaussian parameter estimates (center, principal axes, orientation).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .gridio import FloatGrid

log = logging.getLogger(__name__)

# Half-open shape-index interval accepted as bump points.
BUMP_INDEX_LO = -1.0 / 8.0
BUMP_INDEX_HI = 5.0 / 8.0

_S8 = np.ones((3, 3), bool)   # 8-connectivity structuring element


@dataclass
class CurvatureField:
    """Per-pixel Hessian eigenvalues (lambda1 >= lambda2) and shape index.

    ``shape_index`` holds the limit value +-1 at umbilic pixels (equal
    eigenvalues, nonzero trace) and NaN where the surface is locally flat;
    ``defined`` is False at both kinds of umbilic pixel.
    """

    lambda1: np.ndarray
    lambda2: np.ndarray
    shape_index: np.ndarray
    defined: np.ndarray
    sigma_px: float = 0.0


@dataclass
class HeightBump:
    """A segmented smooth bump: pixel support plus fitted Gaussian parameters."""

    id: int
    pixels: np.ndarray            # (N, 2) array of (u, v) pixel coords
    center: tuple[float, float]   # world meters
    volume: float                 # m^3, relative to the component boundary minimum
    d1: float                     # 1-sigma length along the major axis, meters
    d2: float                     # minor axis, meters
    orientation: float            # radians, major axis direction, in [0, pi)


@dataclass
class BumpParams:
    smooth_sigma_px: float = 2.0
    polarity: str = "up"          # "up": bumps are height maxima; "down": minima
    eps_umbilic_rel: float = 1e-9
    min_volume_m3: float = 1e-6
    min_pixels: int = 5
    close_iterations: int = 2     # morphological closing passes on the bump mask
    fit_floor: float = 0.05       # relative-height floor for the Gaussian fit
    min_minor_axis_m: float = 0.008   # thinner components are ridge ghosts, not bumps


def smooth(grid: FloatGrid, sigma_px: float) -> FloatGrid:
    """Gaussian blur truncated at 3 sigma with reflect boundaries; 0 = identity."""
    if sigma_px < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma_px}")
    if sigma_px == 0:
        return grid
    out = ndimage.gaussian_filter(np.asarray(grid.data, np.float64),
                                  sigma_px, mode="reflect", truncate=3.0)
    return FloatGrid(grid.width, grid.height, grid.cell_size, grid.origin, data=out)


def _hessian_components(z: np.ndarray, cell: float):
    zp = np.pad(z, 1, mode="symmetric")
    fxx = (zp[1:-1, 2:] - 2.0 * z + zp[1:-1, :-2]) / cell**2
    fyy = (zp[2:, 1:-1] - 2.0 * z + zp[:-2, 1:-1]) / cell**2
    fxy = (zp[2:, 2:] - zp[2:, :-2] - zp[:-2, 2:] + zp[:-2, :-2]) / (4.0 * cell**2)
    return fxx, fyy, fxy


def hessian(grid: FloatGrid, eps_umbilic_rel: float = 1e-9,
            sigma_px: float = 0.0) -> CurvatureField:
    """Central-difference Hessian eigenvalues and shape index over the grid."""
    z = np.asarray(grid.data, np.float64)
    fxx, fyy, fxy = _hessian_components(z, grid.cell_size)
    tr = fxx + fyy
    disc = np.sqrt((fxx - fyy) ** 2 + 4.0 * fxy**2)
    l1 = 0.5 * (tr + disc)
    l2 = 0.5 * (tr - disc)
    lmax = max(np.abs(l1).max(), np.abs(l2).max())
    eps = eps_umbilic_rel * lmax
    den = l1 - l2
    s = np.full(l1.shape, np.nan)
    defined = den >= eps if eps > 0 else den > 0
    s[defined] = (2.0 / np.pi) * np.arctan(tr[defined] / den[defined])
    umbilic = ~defined & (np.abs(tr) > 0)
    s[umbilic] = np.sign(tr[umbilic])
    return CurvatureField(l1, l2, s, defined, sigma_px)


def shape_index(l1: float, l2: float, eps_umbilic_rel: float = 1e-9) -> float:
    """(2/pi) * atan((l1+l2)/(l1-l2)); +-1 in the umbilic limit, NaN when flat."""
    if l2 > l1:
        raise ValueError("requires lambda1 >= lambda2")
    eps = eps_umbilic_rel * max(abs(l1), abs(l2))
    if l1 - l2 < eps or l1 == l2:
        tr = l1 + l2
        return math.copysign(1.0, tr) if tr != 0.0 else math.nan
    return (2.0 / math.pi) * math.atan((l1 + l2) / (l1 - l2))


def _fit_gaussian(x, y, w):
    """Weighted LSQ fit of log(w) to a 2D quadratic; returns (center, cov)."""
    lw = np.log(w)
    x0, y0 = x.mean(), y.mean()
    xs, ys = x - x0, y - y0
    A = np.stack([np.ones_like(xs), xs, ys, xs * xs, xs * ys, ys * ys], axis=1)
    Aw = A * w[:, None]
    c = np.linalg.solve(A.T @ Aw, Aw.T @ lw)
    prec = -np.array([[2.0 * c[3], c[4]], [c[4], 2.0 * c[5]]])   # Sigma^-1
    ev, evec = np.linalg.eigh(prec)
    if ev[0] <= 0:
        return None
    center = np.array([x0, y0]) + np.linalg.solve(prec, c[1:3])
    d1, d2 = 1.0 / math.sqrt(ev[0]), 1.0 / math.sqrt(ev[1])      # d1 >= d2
    orientation = math.atan2(evec[1, 0], evec[0, 0]) % math.pi   # major axis
    return center, d1, d2, orientation


def _pca_moments(x, y, w):
    """Fallback: weighted position covariance (biased by region truncation)."""
    W = w.sum()
    mx, my = (w * x).sum() / W, (w * y).sum() / W
    dx, dy = x - mx, y - my
    C = np.array([[(w * dx * dx).sum(), (w * dx * dy).sum()],
                  [(w * dx * dy).sum(), (w * dy * dy).sum()]]) / W
    ev, evec = np.linalg.eigh(C)
    if ev[0] <= 0:
        return None
    d1, d2 = math.sqrt(ev[1]), math.sqrt(ev[0])
    orientation = math.atan2(evec[1, 1], evec[0, 1]) % math.pi
    return np.array([mx, my]), d1, d2, orientation


def detect_bumps(grid: FloatGrid, params: BumpParams | None = None) -> list[HeightBump]:
    """Detect smooth height bumps, sorted by volume descending.

    The shape-index rule is evaluated on the negated (polarity "up") smoothed
    height so that dome-like bumps fall on the ridge side of the index range.
    Components are closed and hole-filled before labeling; per-component
    heights are measured against the boundary minimum of the smoothed field.
    Axis lengths come from a Gaussian fit to the relative heights, which is
    unbiased by the annular shape of the in-range region.
    """
    p = params or BumpParams()
    if p.polarity not in ("up", "down"):
        raise ValueError(f"polarity must be 'up' or 'down', got {p.polarity!r}")
    cell = grid.cell_size
    smoothed = smooth(grid, p.smooth_sigma_px)
    hs = np.asarray(smoothed.data, np.float64)
    if p.polarity == "down":
        hs = -hs
    field_ = hessian(FloatGrid(grid.width, grid.height, cell, grid.origin, data=-hs),
                     p.eps_umbilic_rel, p.smooth_sigma_px)
    s = field_.shape_index
    mask = (s >= BUMP_INDEX_LO) & (s < BUMP_INDEX_HI)
    if p.close_iterations > 0:
        mask = ndimage.binary_closing(mask, structure=_S8,
                                      iterations=p.close_iterations, border_value=0)
    mask = ndimage.binary_fill_holes(mask)
    labels, ncomp = ndimage.label(mask, structure=_S8.astype(int))
    n_degenerate = 0
    bumps = []
    ox, oy = grid.origin
    for k in range(1, ncomp + 1):
        comp = labels == k
        npx = int(comp.sum())
        if npx < p.min_pixels:
            n_degenerate += 1
            continue
        interior = ndimage.binary_erosion(comp, structure=_S8, border_value=0)
        boundary = comp & ~interior
        base = hs[boundary].min()
        rel = hs - base
        volume = float(rel[comp].sum() * cell * cell)
        if volume < p.min_volume_m3:
            continue
        vv, uu = np.nonzero(comp)
        w = np.maximum(rel[vv, uu], 0.0)
        peak = w.max()
        if peak <= 0:
            n_degenerate += 1
            continue
        sel = w >= p.fit_floor * peak
        x = ox + uu[sel] * cell
        y = oy + vv[sel] * cell
        fit = None
        if sel.sum() >= 6:
            try:
                fit = _fit_gaussian(x, y, w[sel])
            except np.linalg.LinAlgError:
                fit = None
        if fit is None:
            fit = _pca_moments(x, y, w[sel])
        if fit is None:
            n_degenerate += 1
            continue
        center, d1, d2, orientation = fit
        if d2 < p.min_minor_axis_m:
            # a sharp ridge leaves a long sliver of in-range pixels; a real
            # bump cannot be thinner than the smoothing scale
            n_degenerate += 1
            continue
        bumps.append(HeightBump(
            id=-1, pixels=np.column_stack([uu, vv]),
            center=(float(center[0]), float(center[1])),
            volume=volume, d1=float(d1), d2=float(d2),
            orientation=float(orientation)))
    if n_degenerate:
        log.debug("discarded %d degenerate bump component(s)", n_degenerate)
    bumps.sort(key=lambda b: -b.volume)
    for i, b in enumerate(bumps):
        b.id = i
    return bumps
