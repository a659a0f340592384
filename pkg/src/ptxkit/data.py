"""Study ingest: manifest parsing, patient-grouped folds, image/mask loading.

The manifest is a small CSV with columns ``image_path, patient_id, label``
and optional ``mask_path``. Relative paths are resolved against the
manifest's directory so a dataset folder can be moved around as a unit.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from . import dicomio

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("image_path", "patient_id", "label")


@dataclass
class ImageRecord:
    """One study: pixel source, patient grouping key, image-level label."""

    image_path: Path
    patient_id: str
    label: int
    mask_path: Path | None = None
    fold: int | None = None

    @property
    def case_id(self) -> str:
        return self.image_path.stem


@dataclass
class FoldAssignment:
    """patient_id -> fold mapping plus per-fold image counts."""

    k: int
    by_patient: dict[str, int]
    counts: list[int] = field(default_factory=list)

    def fold_of(self, record: ImageRecord) -> int:
        return self.by_patient[record.patient_id]


def load_manifest(path: str | Path) -> list[ImageRecord]:
    """Read the dataset manifest and validate labels and mask paths.

    Rows are returned in file order. A bad label or a mask path that does
    not exist aborts with an error naming the offending data row (1-based).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    root = path.parent

    records: list[ImageRecord] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"{path}: manifest missing columns {missing}")
        for i, row in enumerate(reader, start=1):
            raw_label = (row.get("label") or "").strip()
            if raw_label not in ("0", "1"):
                raise ValueError(f"{path}: row {i}: label {raw_label!r} not in {{0,1}}")
            image_path = _resolve(root, row["image_path"])
            mask_raw = (row.get("mask_path") or "").strip()
            mask_path = _resolve(root, mask_raw) if mask_raw else None
            if mask_path is not None and not mask_path.is_file():
                raise FileNotFoundError(f"{path}: row {i}: mask file missing: {mask_path}")
            records.append(
                ImageRecord(
                    image_path=image_path,
                    patient_id=str(row["patient_id"]).strip(),
                    label=int(raw_label),
                    mask_path=mask_path,
                )
            )

    positives = sum(r.label for r in records)
    if not records:
        log.warning("manifest %s is empty", path)
    else:
        log.info(
            "loaded %d records from %s (%d positive, %d negative)",
            len(records), path, positives, len(records) - positives,
        )
    return records


def _resolve(root: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else (root / q)


def assign_folds(records: list[ImageRecord], k: int, seed: int) -> FoldAssignment:
    """Patient-grouped split into k folds of similar image count.

    Patients are placed greedily in decreasing image-count order onto the
    currently smallest fold, which bounds the spread between fold sizes by
    the largest patient group. Ties in group size are ordered by a seeded
    shuffle so different seeds give different (but reproducible) splits.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    groups: dict[str, int] = {}
    for rec in records:
        if not rec.patient_id:
            raise ValueError(f"record {rec.image_path} has empty patient_id")
        groups[rec.patient_id] = groups.get(rec.patient_id, 0) + 1
    if k > len(groups):
        raise ValueError(f"k={k} exceeds number of distinct patients ({len(groups)})")

    rng = np.random.default_rng(seed)
    patients = sorted(groups)
    order = rng.permutation(len(patients))
    # decreasing size, seeded shuffle as tie-break
    ranked = sorted(zip(patients, order), key=lambda t: (-groups[t[0]], t[1]))

    counts = [0] * k
    by_patient: dict[str, int] = {}
    for patient, _ in ranked:
        target = int(np.argmin(counts))
        by_patient[patient] = target
        counts[target] += groups[patient]

    for rec in records:
        rec.fold = by_patient[rec.patient_id]

    pos_per_fold = [0] * k
    for rec in records:
        pos_per_fold[rec.fold] += rec.label
    for f in range(k):
        ratio = pos_per_fold[f] / counts[f] if counts[f] else float("nan")
        log.info("fold %d: %d images, positive ratio %.3f", f, counts[f], ratio)

    return FoldAssignment(k=k, by_patient=by_patient, counts=counts)


def save_folds(assignment: FoldAssignment, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "fold"])
        for patient in sorted(assignment.by_patient):
            writer.writerow([patient, assignment.by_patient[patient]])


def load_folds(path: str | Path, records: list[ImageRecord] | None = None) -> FoldAssignment:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"fold file not found: {path}")
    by_patient: dict[str, int] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            by_patient[row["patient_id"]] = int(row["fold"])
    k = max(by_patient.values()) + 1 if by_patient else 0
    counts = [0] * k
    if records is not None:
        for rec in records:
            if rec.patient_id not in by_patient:
                raise ValueError(f"patient {rec.patient_id!r} missing from fold file {path}")
            rec.fold = by_patient[rec.patient_id]
            counts[rec.fold] += 1
    return FoldAssignment(k=k, by_patient=by_patient, counts=counts)


def load_image(source: ImageRecord | str | Path) -> np.ndarray:
    """Decode a study as a float32 2-D array min-max normalized to [0, 1].

    Accepts DICOM (sniffed by magic) or any 8/16-bit grayscale raster file
    cv2 can decode. Sources that declare inverted polarity come out
    re-inverted so higher always means brighter. A constant image maps to
    all zeros.
    """
    path = Path(source.image_path if isinstance(source, ImageRecord) else source)
    if not path.is_file():
        raise FileNotFoundError(f"image file not found: {path}")

    inverted = False
    if dicomio.looks_like_dicom(path):
        dcm = dicomio.read_dicom(path)
        pixels = dcm.pixels
        inverted = dcm.inverted
    else:
        raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise ValueError(f"undecodable image file: {path}")
        if raw.ndim != 2:
            raise ValueError(f"{path}: expected single-channel image, got shape {raw.shape}")
        pixels = raw.astype(np.float64)

    lo, hi = float(pixels.min()), float(pixels.max())
    if hi > lo:
        out = (pixels - lo) / (hi - lo)
    else:
        out = np.zeros_like(pixels)
    if inverted:
        out = 1.0 - out
    return np.ascontiguousarray(out, dtype=np.float32)


def load_mask(record: ImageRecord, image_shape: tuple[int, int]) -> np.ndarray:
    """Binary {0,1} mask for a record; absent masks are all zeros.

    Negatives must have an all-zero effective mask; a nonzero mask file on
    a label-0 record is a labeling error and raises.
    """
    if record.mask_path is None:
        return np.zeros(image_shape, dtype=np.uint8)
    raw = cv2.imread(str(record.mask_path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ValueError(f"undecodable mask file: {record.mask_path}")
    if raw.ndim != 2:
        raise ValueError(f"{record.mask_path}: mask must be single-channel")
    if raw.shape != tuple(image_shape):
        raise ValueError(
            f"{record.mask_path}: mask shape {raw.shape} != image shape {tuple(image_shape)}"
        )
    mask = (raw != 0).astype(np.uint8)
    if record.label == 0 and mask.any():
        raise ValueError(
            f"{record.mask_path}: record labeled negative but mask has nonzero pixels"
        )
    return mask


def segmentation_records(records: list[ImageRecord]) -> list[ImageRecord]:
    """Training subset for the pixel-level model.

    All negatives (their effective masks are empty) plus the positives that
    carry a mask file; unmasked positives are dropped and logged.
    """
    kept = [r for r in records if r.label == 0 or r.mask_path is not None]
    dropped = len(records) - len(kept)
    if dropped:
        log.info("segmentation subset: dropped %d unmasked positive records", dropped)
    return kept


def write_manifest(records: list[ImageRecord], path: str | Path) -> None:
    """Write records back out in manifest format (paths made relative)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    root = path.parent
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_path", "patient_id", "label", "mask_path"])
        for rec in records:
            writer.writerow(
                [
                    _relativize(rec.image_path, root),
                    rec.patient_id,
                    rec.label,
                    _relativize(rec.mask_path, root) if rec.mask_path else "",
                ]
            )


def _relativize(p: Path, root: Path) -> str:
    try:
        return p.relative_to(root).as_posix()
    except ValueError:
        return str(p)
