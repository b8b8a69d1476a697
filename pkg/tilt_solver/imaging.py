"""Image I/O, bilinear patch sampling and synthetic test data.

Image coordinates are (x, y) = (column, row). A window grid point (i, j) has
local coordinates (u, v) = (j - (w-1)/2, i - (h-1)/2) and is sampled at the
image point centre + H(u, v).
"""
import json
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from PIL import Image
from scipy import ndimage

from tilt_solver.errors import WindowEscapeError
from tilt_solver.models import CorpusCase, CorruptionSpec, GrayImage, TransformKind, TransformParams, WindowSpec
from tilt_solver.transforms import checkerboard_ground_truth, map_points, rotation_shear

logger = logging.getLogger("tilt_solver")

LUMINANCE_WEIGHTS = (0.299, 0.587, 0.114)
RNG_ALGORITHM = "numpy.random.PCG64"
SUPERSAMPLE = 4
BACKGROUND = 0.5

PathLike = Union[str, Path]
Texture = Callable[[np.ndarray, np.ndarray], np.ndarray]


def make_rng(seed) -> np.random.Generator:
    """Seeded generator with a fixed, recorded bit generator."""
    return np.random.Generator(np.random.PCG64(seed))


# -- I/O ---------------------------------------------------------------------

def load_png(path: PathLike) -> GrayImage:
    """Load an 8-bit gray or RGB(A) PNG as intensities in [0, 1]."""
    with Image.open(path) as img:
        if img.mode in ("L", "LA", "P", "RGB", "RGBA", "1"):
            if img.mode in ("L", "LA", "1"):
                pixels = np.asarray(img.convert("L"), dtype=float)
            else:
                rgb = np.asarray(img.convert("RGB"), dtype=float)
                pixels = rgb @ np.array(LUMINANCE_WEIGHTS)
            return GrayImage(pixels / 255.0)
        # 16-bit gray and other integer modes
        raw = np.asarray(img, dtype=float)
        if raw.ndim == 3:
            raw = raw[..., :3] @ np.array(LUMINANCE_WEIGHTS)
        return GrayImage(raw / 65535.0 if raw.max() > 255 else raw / 255.0)


def save_png(pixels: np.ndarray, path: PathLike, rescale: bool = False) -> None:
    """Write a matrix as an 8-bit gray PNG.

    With ``rescale`` the values are mapped linearly onto [0, 1] first (used for
    the normalized A and E patches); otherwise they are clipped to [0, 1].
    """
    pixels = np.asarray(pixels, dtype=float)
    if rescale:
        low, high = float(pixels.min()), float(pixels.max())
        pixels = (pixels - low) / (high - low) if high > low else np.zeros_like(pixels)
    data = np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path)


# -- sampling ----------------------------------------------------------------

def local_grid(window: WindowSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Centred local coordinates (u, v) of the window grid, each of the patch shape."""
    v, u = np.mgrid[0:window.height, 0:window.width].astype(float)
    return u - (window.width - 1) / 2.0, v - (window.height - 1) / 2.0


def warp_coordinates(tau: TransformParams, window: WindowSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Image coordinates (x, y) sampled for every grid point of the window."""
    u, v = local_grid(window)
    x, y = map_points(tau, u, v)
    cx, cy = window.center
    return x + cx, y + cy


def check_bounds(x: np.ndarray, y: np.ndarray, shape: Tuple[int, int], margin: float = 0.0) -> None:
    """Raise WindowEscapeError unless every point lies inside the image by ``margin`` pixels."""
    rows, cols = shape
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise WindowEscapeError("Warped window has non-finite coordinates")
    x_lo, x_hi, y_lo, y_hi = float(x.min()), float(x.max()), float(y.min()), float(y.max())
    if x_lo < margin or y_lo < margin or x_hi > cols - 1 - margin or y_hi > rows - 1 - margin:
        raise WindowEscapeError(
            f"Warped window spans x=[{x_lo:.2f}, {x_hi:.2f}], y=[{y_lo:.2f}, {y_hi:.2f}], "
            f"outside a {cols}x{rows} image (margin {margin})"
        )


def sample(pixels: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear samples at (x, y)."""
    return ndimage.map_coordinates(pixels, [y, x], order=1, mode="nearest")


def sample_gradients(
    pixels: np.ndarray, x: np.ndarray, y: np.ndarray, mode: str = "bilinear"
) -> Tuple[np.ndarray, np.ndarray]:
    """Spatial derivatives of the sampled intensities at (x, y).

    ``bilinear`` is the exact derivative of the bilinear interpolant (one-sided
    at integer coordinates): the forward difference of the enclosing cell,
    interpolated along the other axis. ``central`` interpolates central
    difference gradient images.
    """
    rows, cols = pixels.shape
    if mode == "central":
        grad_y, grad_x = np.gradient(pixels)
        return sample(grad_x, x, y), sample(grad_y, x, y)
    if mode != "bilinear":
        raise ValueError(f"Unknown gradient mode: {mode}")

    diff_x = np.diff(pixels, axis=1)
    diff_y = np.diff(pixels, axis=0)
    cell_x = np.clip(np.floor(x), 0, cols - 2)
    cell_y = np.clip(np.floor(y), 0, rows - 2)
    gx = ndimage.map_coordinates(diff_x, [y, cell_x], order=1, mode="nearest")
    gy = ndimage.map_coordinates(diff_y, [cell_y, x], order=1, mode="nearest")
    return gx, gy


def warp_patch(image: GrayImage, tau: TransformParams, window: WindowSpec, margin: float = 0.0) -> np.ndarray:
    """Sample the window under ``tau``; entry (i, j) is the bilinear value at the warped grid point.

    Raises:
        WindowEscapeError: if any sample point leaves the image
    """
    x, y = warp_coordinates(tau, window)
    check_bounds(x, y, image.pixels.shape, margin)
    return sample(image.pixels, x, y)


# -- corruption --------------------------------------------------------------

def corrupted_count(fraction: float, total: int) -> int:
    """round(fraction * total), with halves rounded up."""
    return int(np.floor(fraction * total + 0.5))


def corrupt(image: GrayImage, spec: CorruptionSpec) -> GrayImage:
    """Replace a fixed number of distinct pixels with uniform noise.

    Noise is drawn uniformly on (0, 255), scaled to [0, 1] and clipped. The
    result depends only on the image size and ``spec``.
    """
    pixels = image.pixels.copy()
    total = pixels.size
    count = corrupted_count(spec.fraction, total)
    if count == 0:
        return GrayImage(pixels)
    rng = make_rng(spec.seed)
    index = rng.choice(total, size=count, replace=False)
    values = np.clip(rng.uniform(0.0, 255.0, size=count) / 255.0, 0.0, 1.0)
    flat = pixels.reshape(-1)
    flat[index] = values
    return GrayImage(flat.reshape(pixels.shape))


# -- synthetic textures ------------------------------------------------------

def _square(x: np.ndarray, period: float, duty: float = 0.5, phase: float = 0.0) -> np.ndarray:
    return (np.mod(x / period + phase, 1.0) < duty).astype(float)


def _checker(x, y, cell):
    return np.mod(np.floor(x / cell) + np.floor(y / cell), 2.0)


def _bricks(x, y, period):
    row = np.floor(y / (period / 2.0))
    offset = np.where(np.mod(row, 2.0) == 0, 0.0, 0.5)
    mortar = np.maximum(_square(y, period / 2.0, 0.15), _square(x, period, 0.1, offset))
    return 0.75 - 0.5 * mortar


_BARCODE = np.array([1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0, 1, 0, 0, 1], dtype=float)


def _barcode(x, y, period):
    module = period / 4.0
    index = np.mod(np.floor(x / module), _BARCODE.size).astype(int)
    return 0.15 + 0.7 * _BARCODE[index] * _square(y, 4 * period, 0.85)


TEXTURES: Dict[str, Callable[[np.ndarray, np.ndarray, float], np.ndarray]] = {
    "checkerboard": lambda x, y, p: _checker(x, y, p),
    "stripes": lambda x, y, p: 0.2 + 0.6 * _square(x, p) * _square(y, 4 * p, 0.8),
    "bars": lambda x, y, p: np.maximum(_square(x, p, 0.3), 0.6 * _square(y, 2 * p, 0.25)),
    "grid_lines": lambda x, y, p: 1.0 - 0.8 * np.maximum(_square(x, p, 0.2), _square(y, p, 0.2)),
    "bricks": _bricks,
    "facade": lambda x, y, p: 0.8 - 0.6 * _square(x, p, 0.5) * _square(y, 1.5 * p, 0.6),
    "barcode": _barcode,
    "plaid": lambda x, y, p: 0.5 * (_square(x, p, 0.4) + _square(y, p, 0.4)),
    "tartan": lambda x, y, p: 0.1 + 0.2 * (_square(x, p, 0.3) + _square(x, p / 2, 0.2, 0.25)
                                           + _square(y, p, 0.3) + _square(y, p / 2, 0.2, 0.25)),
    "steps": lambda x, y, p: np.mod(np.floor(x / p) + 2 * np.floor(y / p), 4.0) / 3.0,
}


def render(
    texture: Texture, size: Tuple[int, int], deformation: np.ndarray, supersample: int = SUPERSAMPLE
) -> GrayImage:
    """Render ``texture`` deformed by y = A x + b, with b the image centre.

    Each output pixel averages ``supersample``^2 evaluations of the texture at
    A^{-1}(y - b).
    """
    rows, cols = size
    inverse = np.linalg.inv(np.asarray(deformation, dtype=float))
    offsets = (np.arange(supersample) + 0.5) / supersample - 0.5
    yy, xx = np.mgrid[0:rows, 0:cols].astype(float)
    yy -= (rows - 1) / 2.0
    xx -= (cols - 1) / 2.0
    total = np.zeros((rows, cols))
    for dy in offsets:
        for dx in offsets:
            px, py = xx + dx, yy + dy
            tx = inverse[0, 0] * px + inverse[0, 1] * py
            ty = inverse[1, 0] * px + inverse[1, 1] * py
            total += texture(tx, ty)
    return GrayImage(total / supersample**2)


def gen_checkerboard(
    cells: int = 8, cell_px: int = 12, theta: float = 0.0, t: float = 0.0, margin: Optional[int] = None
) -> GrayImage:
    """Checkerboard deformed by R(theta) @ [[1, t], [0, 1]] about the image centre.

    The board has ``cells`` x ``cells`` squares of ``cell_px`` pixels on a mid-gray
    background. The canvas is square with an even side so that even-sized
    centred windows share the board centre.
    """
    board = cells * cell_px
    if margin is None:
        margin = board // 4
    spread = np.abs(rotation_shear(theta, t)).sum(axis=1).max()
    side = int(np.ceil(board * max(1.0, spread))) + 2 * margin
    side += side % 2
    half = board / 2.0

    def texture(x, y):
        inside = (np.abs(x) < half) & (np.abs(y) < half)
        return np.where(inside, _checker(x + half, y + half, cell_px), BACKGROUND)

    return render(texture, (side, side), rotation_shear(theta, t))


def range_grid(theta_steps: int = 11, t_steps: int = 21) -> Tuple[np.ndarray, np.ndarray]:
    """Deformation sweep: theta in [0, pi/6] step pi/60, t in [0, 1] step 0.05 by default."""
    return np.linspace(0.0, np.pi / 6, theta_steps), np.linspace(0.0, 1.0, t_steps)


# -- corpus ------------------------------------------------------------------

def synthetic_corpus(
    size: int = 128, window: int = 48, period: float = 12.0, theta: float = np.deg2rad(10.0),
    kind: TransformKind = TransformKind.AFFINE,
) -> List[CorpusCase]:
    """The ten procedural textures rotated by ``theta``, with centred windows and ground truth."""
    size += size % 2
    window += window % 2
    deformation = rotation_shear(theta, 0.0)
    truth = checkerboard_ground_truth(theta, 0.0)
    spec = WindowSpec.centered((size, size), window, window)
    tau0 = TransformParams.identity(kind)
    cases = []
    for name, texture in TEXTURES.items():
        image = render(lambda x, y, fn=texture: fn(x, y, period), (size, size), deformation)
        cases.append(CorpusCase(name=name, image=image, window=spec, tau0=tau0, ground_truth=truth))
    return cases


def sidecar_path(png: PathLike) -> Path:
    """``texture.png`` -> ``texture.json``."""
    return Path(png).with_suffix(".json")


def read_sidecar(png: PathLike) -> Optional[dict]:
    path = sidecar_path(png)
    if not path.exists():
        return None
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def case_from_sidecar(name: str, image: GrayImage, sidecar: dict) -> CorpusCase:
    """Build a corpus case from an image and its parsed sidecar."""
    kind = TransformKind(sidecar.get("kind", "affine"))
    tau0 = sidecar.get("tau0")
    truth = sidecar.get("ground_truth")
    return CorpusCase(
        name=name,
        image=image,
        window=WindowSpec(*sidecar["window"]),
        tau0=TransformParams(kind, np.array(tau0)) if tau0 is not None else TransformParams.identity(kind),
        ground_truth=params_from_list(truth) if truth is not None else None,
    )


def params_from_list(values: List[float]) -> TransformParams:
    """Transform from a bare parameter list; the kind follows from its length."""
    kind = TransformKind.PROJECTIVE if len(values) == TransformKind.PROJECTIVE.n_params else TransformKind.AFFINE
    return TransformParams(kind, np.array(values, dtype=float))


def load_corpus(directory: PathLike) -> List[CorpusCase]:
    """Load every PNG with a JSON sidecar in ``directory``, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"Corpus directory not found: {directory}")
    cases = []
    for png in sorted(directory.glob("*.png")):
        sidecar = read_sidecar(png)
        if sidecar is None:
            logger.warning(f"Skipping {png.name}: no sidecar {sidecar_path(png).name}")
            continue
        cases.append(case_from_sidecar(png.stem, load_png(png), sidecar))
    logger.info(f"Loaded {len(cases)} corpus images from {directory}")
    return cases


def write_corpus(directory: PathLike, cases: Optional[List[CorpusCase]] = None) -> List[Path]:
    """Write corpus PNGs and sidecars; returns the PNG paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cases = cases if cases is not None else synthetic_corpus()
    written = []
    for case in cases:
        png = directory / f"{case.name}.png"
        save_png(case.image.pixels, png)
        with open(sidecar_path(png), "w", encoding="utf-8") as f:
            json.dump(case.to_sidecar(), f, indent=2)
        written.append(png)
    logger.info(f"Wrote {len(written)} corpus images to {directory}")
    return written
