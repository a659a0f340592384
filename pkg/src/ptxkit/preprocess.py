"""Geometric/intensity preprocessing, augmentation, patch bags, five-crop.

All functions take and return float arrays in [0, 1]. Defaults follow the
production pipeline: whole-image inputs are resized to 480 and center
cropped to 448; patch bags are a 4x4 grid of 448-pixel patches with 50%
overlap cut from the image resized to 1120. Every size scales together
through the ``crop_size`` / ``patch_size`` arguments so the same code runs
at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import cv2
import numpy as np

from .data import ImageRecord

CROP_SIZE = 448
RESIZE_SIDE = 480
BAG_PATCHES = 16
BAG_GRID = 4


def resize_side_for(crop_size: int) -> int:
    """Pre-crop resize side keeping the stock 480:448 margin ratio."""
    return int(round(crop_size * RESIZE_SIDE / CROP_SIZE))


def bag_frame_for(patch_size: int) -> int:
    """Bag frame side: 4x4 grid at 50% overlap spans 2.5 patch sides."""
    return patch_size * (BAG_GRID + 1) // 2


@dataclass
class PatchBag:
    """Overlapping patch grid cut from one image, the MIL unit."""

    patches: np.ndarray  # (16, ps, ps) float32
    origins: list[tuple[int, int]]  # (row, col) offsets in the frame
    frame_side: int
    source: ImageRecord | None = None

    @property
    def patch_size(self) -> int:
        return self.patches.shape[-1]


@dataclass
class AugmentationParams:
    """Ranges for the stochastic training-time transforms.

    Degenerate ranges (zero shifts, unit scale, flip_prob 0, center 0.5 /
    width 1 window, no noise) make ``augment`` the identity.
    """

    translate_frac: float = 0.05
    scale_range: tuple[float, float] = (0.9, 1.1)
    rotate_deg: float = 10.0
    flip_prob: float = 0.5
    window_center: tuple[float, float] = (0.4, 0.6)
    window_width: tuple[float, float] = (0.8, 1.2)
    noise_dose: tuple[float, float] | None = (50.0, 500.0)  # log-uniform; None = off

    def __post_init__(self) -> None:
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob must be in [0,1], got {self.flip_prob}")

    @classmethod
    def identity(cls) -> "AugmentationParams":
        return cls(
            translate_frac=0.0,
            scale_range=(1.0, 1.0),
            rotate_deg=0.0,
            flip_prob=0.0,
            window_center=(0.5, 0.5),
            window_width=(1.0, 1.0),
            noise_dose=None,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationParams":
        d = dict(d)
        for key in ("scale_range", "window_center", "window_width"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        if d.get("noise_dose") is not None:
            d["noise_dose"] = tuple(d["noise_dose"])
        return cls(**d)


def resize(image: np.ndarray, side: int, *, nearest: bool = False) -> np.ndarray:
    interp = cv2.INTER_NEAREST if nearest else cv2.INTER_LINEAR
    out = cv2.resize(np.asarray(image, dtype=np.float32), (side, side), interpolation=interp)
    return out


def standard_input(image: np.ndarray, crop_size: int = CROP_SIZE) -> np.ndarray:
    """Whole-image model input: bilinear resize then center crop."""
    image = np.asarray(image)
    if image.ndim != 2 or min(image.shape) < 2:
        raise ValueError(f"expected 2-D image with sides >= 2, got shape {image.shape}")
    side = resize_side_for(crop_size)
    resized = resize(image, side)
    off = (side - crop_size) // 2
    return np.ascontiguousarray(resized[off : off + crop_size, off : off + crop_size])


def five_crop_offsets(side: int, crop_size: int) -> list[tuple[int, int]]:
    """Canonical order: four corners then center."""
    m = side - crop_size
    return [(0, 0), (0, m), (m, 0), (m, m), (m // 2, m // 2)]


def five_crop(image: np.ndarray, crop_size: int = CROP_SIZE) -> list[np.ndarray]:
    """Corner and center crops of the resized (pre-crop) image.

    Returns views into the input, in the canonical offset order.
    """
    image = np.asarray(image)
    side = resize_side_for(crop_size)
    if image.shape != (side, side):
        raise ValueError(
            f"five_crop expects a {side}x{side} image for crop {crop_size}, "
            f"got shape {image.shape}"
        )
    return [
        image[r : r + crop_size, c : c + crop_size]
        for r, c in five_crop_offsets(side, crop_size)
    ]


def make_bag(
    image: np.ndarray,
    patch_size: int = CROP_SIZE,
    source: ImageRecord | None = None,
) -> PatchBag:
    """Resize to the bag frame and cut the 4x4 half-overlapping patch grid."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"expected 2-D image, got shape {image.shape}")
    frame_side = bag_frame_for(patch_size)
    frame = resize(image, frame_side)
    stride = patch_size // 2
    origins = [
        (r * stride, c * stride) for r in range(BAG_GRID) for c in range(BAG_GRID)
    ]
    patches = np.stack(
        [frame[r : r + patch_size, c : c + patch_size] for r, c in origins]
    )
    return PatchBag(patches=patches, origins=origins, frame_side=frame_side, source=source)


def reassemble_bag(bag: PatchBag) -> np.ndarray:
    """Paste patches back at their origins (overlaps must agree)."""
    out = np.zeros((bag.frame_side, bag.frame_side), dtype=bag.patches.dtype)
    ps = bag.patch_size
    for patch, (r, c) in zip(bag.patches, bag.origins):
        out[r : r + ps, c : c + ps] = patch
    return out


def apply_window(image: np.ndarray, center: float, width: float) -> np.ndarray:
    """Linear intensity window: [center-width/2, center+width/2] -> [0,1]."""
    if width <= 0:
        raise ValueError(f"window width must be > 0, got {width}")
    lo = center - width / 2.0
    return np.clip((np.asarray(image, dtype=np.float32) - lo) / width, 0.0, 1.0)


def add_poisson_noise(
    image: np.ndarray, dose: float, rng: np.random.Generator
) -> np.ndarray:
    """Quantum noise model: pixel ~ Poisson(dose * value) / dose."""
    if dose <= 0:
        raise ValueError(f"dose must be > 0, got {dose}")
    lam = np.clip(np.asarray(image, dtype=np.float64), 0.0, None) * dose
    noisy = rng.poisson(lam).astype(np.float32) / dose
    return np.clip(noisy, 0.0, 1.0)


def _affine_matrix(
    side_rc: tuple[int, int],
    tx: float,
    ty: float,
    scale: float,
    angle_deg: float,
    flip: bool,
) -> np.ndarray:
    h, w = side_rc
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    rot = cv2.getRotationMatrix2D((cx, cy), angle_deg, scale)  # 2x3
    m = np.vstack([rot, [0.0, 0.0, 1.0]])
    if flip:
        f = np.array([[-1.0, 0.0, 2.0 * cx], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        m = m @ f
    t = np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])
    return (t @ m)[:2]


def augment(
    image: np.ndarray,
    mask: np.ndarray | None,
    params: AugmentationParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray | None]:
    """One stochastic training transform of an image (and its mask).

    The same geometric map is applied to image (bilinear) and mask
    (nearest, re-binarized); windowing and noise touch the image only.
    All random draws happen unconditionally so a given rng state always
    yields the same transform regardless of parameter ranges.
    """
    image = np.asarray(image, dtype=np.float32)
    h, w = image.shape
    tx = float(rng.uniform(-params.translate_frac, params.translate_frac) * w)
    ty = float(rng.uniform(-params.translate_frac, params.translate_frac) * h)
    scale = float(rng.uniform(*params.scale_range))
    angle = float(rng.uniform(-params.rotate_deg, params.rotate_deg))
    flip = bool(rng.random() < params.flip_prob)
    center = float(rng.uniform(*params.window_center))
    width = float(rng.uniform(*params.window_width))
    if params.noise_dose is not None:
        lo, hi = params.noise_dose
        dose = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    else:
        dose = 0.0

    geometric = (
        tx != 0.0 or ty != 0.0 or scale != 1.0 or angle != 0.0 or flip
    )
    if geometric:
        m = _affine_matrix((h, w), tx, ty, scale, angle, flip)
        image = cv2.warpAffine(
            image, m, (w, h), flags=cv2.INTER_LINEAR,
            borderMode=cv2.BORDER_CONSTANT, borderValue=0.0,
        )
        if mask is not None:
            warped = cv2.warpAffine(
                mask.astype(np.float32), m, (w, h), flags=cv2.INTER_NEAREST,
                borderMode=cv2.BORDER_CONSTANT, borderValue=0.0,
            )
            mask = (warped >= 0.5).astype(np.uint8)

    image = apply_window(image, center, width)
    if params.noise_dose is not None:
        image = add_poisson_noise(image, dose, rng)
    return np.clip(image, 0.0, 1.0), mask
