"""Deterministic synthetic chest-like dataset for desk-scale runs.

Negatives are smooth lung-like backgrounds (two bright ellipses over a
soft torso, plus noise). Positives add a dark crescent hugging the
lower-lateral border of one lung, written exactly to the mask. Patients
get 1-3 images each so fold grouping is exercised. Everything derives
from the spec seed, so regeneration is byte-identical.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .data import ImageRecord, write_manifest

log = logging.getLogger(__name__)

BORDER_MARGIN = 2  # lesion masks keep at least this many clear border pixels


@dataclass
class SynthSpec:
    n_cases: int = 100
    positive_fraction: float = 0.5
    side: int = 512
    # crescent geometry, relative to the host lung ellipse
    thickness_range: tuple[float, float] = (0.12, 0.20)
    arc_range_deg: tuple[float, float] = (80.0, 140.0)
    depth_range: tuple[float, float] = (0.25, 0.40)
    texture_noise: float = 0.015
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.positive_fraction <= 1.0:
            raise ValueError("positive_fraction must be in [0,1]")
        if self.side < 64:
            raise ValueError("side must be >= 64")


def _ellipse_field(
    shape: tuple[int, int], cx: float, cy: float, a: float, b: float, tilt: float
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized elliptical radius and parametric angle for every pixel."""
    ys, xs = np.mgrid[0 : shape[0], 0 : shape[1]]
    dx = xs - cx
    dy = ys - cy
    ct, st = np.cos(tilt), np.sin(tilt)
    u = (ct * dx + st * dy) / a
    v = (-st * dx + ct * dy) / b
    return np.sqrt(u * u + v * v), np.arctan2(v, u)


def _soft_inside(rho: np.ndarray, edge: float = 0.05) -> np.ndarray:
    """1 inside the unit ellipse, smooth rolloff of relative width `edge`."""
    return 1.0 / (1.0 + np.exp((rho - 1.0) / edge))


def _background(side: int, rng: np.random.Generator, noise: float):
    """Torso + two bright lungs; returns the image and both lung geometries."""
    s = float(side)
    ys = np.arange(side, dtype=np.float64)[:, None] / s
    img = 0.18 + 0.05 * ys + np.zeros((side, side))

    tcx = s * (0.5 + rng.uniform(-0.01, 0.01))
    tcy = s * (0.55 + rng.uniform(-0.01, 0.01))
    rho_t, _ = _ellipse_field((side, side), tcx, tcy, 0.43 * s, 0.46 * s, 0.0)
    img += 0.12 * _soft_inside(rho_t, 0.03)

    lungs = []
    for side_sign in (-1.0, 1.0):
        cx = s * (0.5 + side_sign * (0.21 + rng.uniform(-0.01, 0.01)))
        cy = s * (0.52 + rng.uniform(-0.015, 0.015))
        a = s * (0.155 + rng.uniform(-0.01, 0.01))
        b = s * (0.255 + rng.uniform(-0.01, 0.01))
        tilt = side_sign * rng.uniform(-0.05, 0.12)
        rho, _ = _ellipse_field((side, side), cx, cy, a, b, tilt)
        img += 0.35 * _soft_inside(rho, 0.04)
        lungs.append((cx, cy, a, b, tilt, side_sign))

    img += rng.normal(0.0, noise, size=(side, side))
    return np.clip(img, 0.0, 1.0), lungs


def _crescent(
    shape: tuple[int, int],
    lung: tuple[float, float, float, float, float, float],
    rng: np.random.Generator,
    spec: SynthSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """Band just inside the lung border over a lower-lateral arc.

    Returns (mask bool, smooth weight in [0,1] for shading).
    """
    cx, cy, a, b, tilt, side_sign = lung
    thickness = rng.uniform(*spec.thickness_range)
    arc = np.deg2rad(rng.uniform(*spec.arc_range_deg))
    rho, theta = _ellipse_field(shape, cx, cy, a, b, tilt)
    # parametric direction of "lateral and a bit downward" for this lung
    theta0 = np.arctan2(0.8, side_sign * 1.0)
    wrapped = np.angle(np.exp(1j * (theta - theta0)))
    band = (rho >= 1.0 - thickness) & (rho <= 1.0) & (np.abs(wrapped) <= arc / 2.0)
    # smooth radial/angular profile so the shading has soft edges
    radial = np.clip((rho - (1.0 - thickness)) / thickness, 0.0, 1.0)
    angular = np.clip(1.0 - np.abs(wrapped) / (arc / 2.0), 0.0, 1.0)
    weight = np.where(band, np.sin(np.pi * radial) ** 0.5 * angular**0.3, 0.0)
    return band, weight


def render_case(
    spec: SynthSpec, case_seed: np.random.SeedSequence, positive: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Render one case; the background stream is independent of the label,
    so the same seed with positive=False yields the lesion-free twin."""
    bg_seq, lesion_seq = case_seed.spawn(2)
    bg_rng = np.random.default_rng(bg_seq)
    img, lungs = _background(spec.side, bg_rng, spec.texture_noise)

    mask = np.zeros((spec.side, spec.side), dtype=np.uint8)
    if positive:
        lesion_rng = np.random.default_rng(lesion_seq)
        lung = lungs[int(lesion_rng.integers(0, 2))]
        depth = lesion_rng.uniform(*spec.depth_range)
        band, weight = _crescent((spec.side, spec.side), lung, lesion_rng, spec)
        img = np.clip(img - depth * weight, 0.0, 1.0)
        mask = band.astype(np.uint8)
        if (
            mask[:BORDER_MARGIN].any()
            or mask[-BORDER_MARGIN:].any()
            or mask[:, :BORDER_MARGIN].any()
            or mask[:, -BORDER_MARGIN:].any()
        ):
            raise RuntimeError("synthetic lesion touched the border margin")
    return img, mask


def _patient_sizes(n_cases: int, rng: np.random.Generator) -> list[int]:
    sizes = []
    remaining = n_cases
    while remaining > 0:
        size = int(rng.choice([1, 1, 1, 2, 2, 3]))
        size = min(size, remaining)
        sizes.append(size)
        remaining -= size
    return sizes


def generate(spec: SynthSpec, out_dir: str | Path) -> list[ImageRecord]:
    """Write images/, masks/ and manifest.csv under out_dir."""
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    mask_dir = out_dir / "masks"
    image_dir.mkdir(parents=True, exist_ok=True)
    mask_dir.mkdir(parents=True, exist_ok=True)

    root_seq = np.random.SeedSequence(spec.seed)
    layout_rng = np.random.default_rng(root_seq.spawn(1)[0])

    n_pos = int(round(spec.n_cases * spec.positive_fraction))
    labels = np.zeros(spec.n_cases, dtype=np.int64)
    labels[:n_pos] = 1
    layout_rng.shuffle(labels)

    sizes = _patient_sizes(spec.n_cases, layout_rng)
    patient_of_case = []
    for pidx, size in enumerate(sizes):
        patient_of_case.extend([f"synth-P{pidx:04d}"] * size)

    case_seqs = np.random.SeedSequence((spec.seed, 1)).spawn(spec.n_cases)
    records: list[ImageRecord] = []
    for i in range(spec.n_cases):
        positive = bool(labels[i])
        img, mask = render_case(spec, case_seqs[i], positive)
        case = f"case_{i:04d}"
        image_path = image_dir / f"{case}.png"
        cv2.imwrite(str(image_path), (img * 65535.0).round().astype(np.uint16))
        mask_path = None
        if positive:
            mask_path = mask_dir / f"{case}.png"
            cv2.imwrite(str(mask_path), (mask * 255).astype(np.uint8))
        records.append(
            ImageRecord(
                image_path=image_path,
                patient_id=patient_of_case[i],
                label=int(positive),
                mask_path=mask_path,
            )
        )

    write_manifest(records, out_dir / "manifest.csv")
    log.info(
        "synthetic dataset: %d cases (%d positive) over %d patients at %s",
        spec.n_cases, int(labels.sum()), len(sizes), out_dir,
    )
    return records
