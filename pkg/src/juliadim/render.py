"""Raster renders of Julia and Julia--Lavaurs sets.

Membership is decided by the escape-time distance estimator: a pixel
belongs to the set when its estimated distance to the boundary is below
the pixel size.  Julia--Lavaurs rendering alternates plain iteration with
Lavaurs-map applications; pixels whose budget runs out before a verdict
are marked undetermined and excluded from box counts.

Rendering works in the oriented coordinates used by the rest of the
package (the m-fold oriented map is sign * f^m for even d, so escape
moduli, derivatives, and the Julia set itself match the plain family).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dynamics import Family
from .fatou import FatouEvaluator
from .lavaurs import LavaursMap
from .parabolic import ParabolicData

__all__ = [
    "GridSpec",
    "Grid",
    "centered_spec",
    "render_julia",
    "render_julia_lavaurs",
    "write_png",
    "write_ppm",
    "write_mask_csv",
    "read_mask_csv",
]

_DEM_RADIUS = 1e8  # escape radius for distance estimates (far field)


def worker_count() -> int:
    """Row-parallelism width; JULIADIM_WORKERS caps/overrides (default 1)."""
    raw = os.environ.get("JULIADIM_WORKERS", "").strip()
    if not raw:
        return 1
    n = int(raw)
    if n < 1:
        raise ValueError("JULIADIM_WORKERS must be a positive integer")
    return n


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a raster: origin is the center of the top-left pixel;
    the point of pixel (row, col) is origin + pixel_size*(col - 1j*row)."""

    origin: complex
    pixel_size: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.pixel_size > 0):
            raise ValueError("pixel_size must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must be at least 1x1")

    def points(self) -> np.ndarray:
        cols = np.arange(self.width)
        rows = np.arange(self.height)
        return (self.origin + self.pixel_size * cols[None, :]
                - 1j * self.pixel_size * rows[:, None])


def centered_spec(center: complex, half_extent: float, n: int) -> GridSpec:
    """Square n x n spec symmetric about center (rotation/conjugation tests
    map pixel centers onto pixel centers)."""
    if n < 2:
        raise ValueError("need at least a 2x2 grid")
    px = 2.0 * half_extent / n
    origin = center + px * (-(n - 1) / 2.0 + 1j * (n - 1) / 2.0)
    return GridSpec(origin=origin, pixel_size=px, width=n, height=n)


@dataclass
class Grid:
    """A rendered raster: member mask, iteration counts, distance field.

    cells is the 0/1 membership mask consumed by box counting;
    undetermined pixels are flagged separately and are never members.
    """

    origin: complex
    pixel_size: float
    width: int
    height: int
    cells: np.ndarray
    iters: np.ndarray
    dist: np.ndarray
    undetermined: np.ndarray

    def __post_init__(self):
        shape = (self.height, self.width)
        for name in ("cells", "iters", "dist", "undetermined"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}")
        if not (self.pixel_size > 0):
            raise ValueError("pixel_size must be positive")

    @property
    def undetermined_fraction(self) -> float:
        return float(np.count_nonzero(self.undetermined)) / self.undetermined.size


def _row_blocks(height: int, workers: int):
    per = max(1, -(-height // max(1, workers * 4)))
    return [(lo, min(height, lo + per)) for lo in range(0, height, per)]


def _dem_distance(z, dz):
    """Milnor's estimate 2|z| log|z| / |z'| for far-field escape values."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        az = np.abs(z)
        dist = 2.0 * az * np.log(az) / np.abs(dz)
    return np.where(np.isfinite(dist), dist, np.inf)


def render_julia(fam: Family, spec: GridSpec, max_iter: int = 256,
                 workers: int | None = None) -> Grid:
    """Escape-time render with distance-estimator membership.

    A pixel is a member when its orbit escapes and the distance estimate
    is below the pixel size; bounded pixels are plain non-members.
    """
    if max_iter < 100:
        raise ValueError("max_iter must be at least 100")
    if workers is None:
        workers = worker_count()
    pts = spec.points()
    esc_r = max(_DEM_RADIUS, fam.escape_radius)
    cells = np.zeros(pts.shape, dtype=np.uint8)
    iters = np.zeros(pts.shape, dtype=np.int32)
    dist = np.full(pts.shape, np.inf)
    undet = np.zeros(pts.shape, dtype=bool)

    def run(lo, hi):
        st, it, zf, dzf = kernels.escape_dem(
            pts[lo:hi], fam.d, fam.c, 1.0, max_iter, esc_r)
        iters[lo:hi] = it
        esc = st == 1
        dd = _dem_distance(zf[esc], dzf[esc])
        dist[lo:hi][esc] = dd
        cells[lo:hi] = (esc & (dist[lo:hi] < spec.pixel_size)).astype(np.uint8)

    blocks = _row_blocks(spec.height, workers)
    if workers <= 1 or len(blocks) == 1:
        for lo, hi in blocks:
            run(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(lambda b: run(*b), blocks))
    return Grid(origin=spec.origin, pixel_size=spec.pixel_size,
                width=spec.width, height=spec.height, cells=cells,
                iters=iters, dist=dist, undetermined=undet)


def render_julia_lavaurs(pd: ParabolicData, sigma: float, spec: GridSpec,
                         m_max: int, max_iter: int = 400,
                         ev: FatouEvaluator | None = None,
                         workers: int | None = None) -> Grid:
    """Julia--Lavaurs render: plain iteration alternated with Lavaurs steps.

    Orbits run in oriented coordinates; entry into the forward-invariant
    petal disk hands the point to g_sigma (up to m_max applications, each
    followed by more plain iteration).  Escape at any stage applies the
    distance-estimator membership test with the chain-rule derivative of
    the whole composition; pixels still unresolved after the last stage
    are undetermined.  Escaping orbits never meet the petal disk, so with
    m_max = 0 the member set matches render_julia on escaping pixels, and
    the Julia-set members are always contained in the members here.
    """
    if max_iter < 100:
        raise ValueError("max_iter must be at least 100")
    if m_max < 0:
        raise ValueError("m_max must be nonnegative")
    if workers is None:
        workers = worker_count()
    if ev is None:
        # renders tolerate a looser orbit limit than the 1e-10 default;
        # 1e-9 keeps Lavaurs values far below pixel scale at a ~5x saving
        ev = FatouEvaluator(pd, tol=1e-9)
    lm = LavaursMap(ev, float(sigma))
    pc = complex(pd.alpha - ev.delta)
    esc_r = max(_DEM_RADIUS, pd.family.escape_radius)

    cells = np.zeros((spec.height, spec.width), dtype=np.uint8)
    iters = np.zeros((spec.height, spec.width), dtype=np.int32)
    dist = np.full((spec.height, spec.width), np.inf)
    undet = np.zeros((spec.height, spec.width), dtype=bool)

    def run(lo, hi):
        pts = spec.points()[lo:hi]
        shape = pts.shape
        z = pts.reshape(-1).copy()
        dz = np.ones_like(z)
        idx = np.arange(z.size)
        it_acc = np.zeros(z.size, dtype=np.int32)
        member = np.zeros(z.size, dtype=bool)
        dvals = np.full(z.size, np.inf)
        undecided = np.zeros(z.size, dtype=bool)
        for stage in range(m_max + 1):
            if idx.size == 0:
                break
            st, it, zf, dzf = kernels.escape_dem(
                z, pd.d, pd.c0, pd.sign, max_iter, esc_r,
                petal_center=pc, petal_rad=ev.delta, check_petal=True,
                petal_stride=1)
            it_acc[idx] += it
            dz = dz * dzf
            esc = st == 1
            if esc.any():
                dd = _dem_distance(zf[esc], dz[esc])
                dvals[idx[esc]] = dd
                member[idx[esc]] = dd < spec.pixel_size
            stuck = st == 0
            undecided[idx[stuck]] = True
            pet = st == 2
            if stage == m_max or not pet.any():
                undecided[idx[pet]] = True
                break
            # one Lavaurs application on the petal points
            sel = idx[pet]
            zp = zf[pet]
            dzp = dz[pet]
            phi, dphi, st_a, _ = ev.phi_minus_batch(zp, want_deriv=True)
            ok_a = st_a == 0
            undecided[sel[~ok_a]] = True
            zg, dpsi, st_b = ev.psi_plus_batch(phi[ok_a] + lm.sigma,
                                               want_deriv=True)
            ok_b = st_b == 0
            undecided[sel[ok_a][~ok_b]] = True
            keep = sel[ok_a][ok_b]
            z = zg[ok_b]
            dz = (dzp[ok_a][ok_b] * dphi[ok_a][ok_b] * dpsi[ok_b])
            idx = keep
        cells[lo:hi] = member.reshape(shape).astype(np.uint8)
        iters[lo:hi] = it_acc.reshape(shape)
        dist[lo:hi] = dvals.reshape(shape)
        undet[lo:hi] = undecided.reshape(shape)

    blocks = _row_blocks(spec.height, workers)
    if workers <= 1 or len(blocks) == 1:
        for lo, hi in blocks:
            run(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(lambda b: run(*b), blocks))
    return Grid(origin=spec.origin, pixel_size=spec.pixel_size,
                width=spec.width, height=spec.height, cells=cells,
                iters=iters, dist=dist, undetermined=undet)


# ----------------------------------------------------------------------
# output formats


def _composite(grid: Grid) -> np.ndarray:
    """8-bit image: members black, undetermined mid-gray, rest white."""
    img = np.full((grid.height, grid.width), 255, dtype=np.uint8)
    img[grid.undetermined] = 180
    img[grid.cells != 0] = 0
    return img


def write_png(grid: Grid, path: str) -> None:
    """Grayscale PNG of the membership composite."""
    from PIL import Image

    Image.fromarray(_composite(grid), mode="L").save(path, format="PNG")


def write_ppm(grid: Grid, path: str) -> None:
    """Binary P6 PPM of the membership composite."""
    img = _composite(grid)
    rgb = np.repeat(img[:, :, None], 3, axis=2)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{grid.width} {grid.height}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def write_mask_csv(grid: Grid, path: str) -> None:
    """0/1 membership rows (undetermined pixels are 0 here; their fraction
    lives on the Grid)."""
    np.savetxt(path, grid.cells, fmt="%d", delimiter=",")


def read_mask_csv(path: str) -> np.ndarray:
    mask = np.loadtxt(path, delimiter=",", dtype=np.uint8, ndmin=2)
    return mask
