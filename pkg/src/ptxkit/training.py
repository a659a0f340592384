"""Loss functions, learning-rate schedule, and the three training loops.

All methods share the optimizer setup (Adam, beta1 0.9 / beta2 0.999,
batch size 16, exponentially decaying learning rate) and differ in their
sampling unit and loss:

* cnn - batches of whole-image crops, cross-entropy on the sigmoid score
* mil - one bag of 16 patches per step, cross-entropy on the max patch score
* fcn - batches of image/mask pairs, pixelwise weighted cross-entropy

The checkpoint kept per fold is the epoch with the best held-out-fold
metric (classification: AUC; segmentation: mean Dice over positively
classified cases).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from . import inference
from .data import ImageRecord, FoldAssignment, load_image, load_mask, segmentation_records
from .ensemble import fcn_area_score
from .evaluation import auc_score, dice, youden_threshold
from .models.checkpoint import load_checkpoint, save_checkpoint
from .models.classifier import CnnConfig, PneumoClassifier, load_backbone_weights
from .models.segmenter import AttentionUNet, FcnConfig
from .models.mil import bag_to_tensor, mil_probs
from .preprocess import AugmentationParams, augment, make_bag, resize, standard_input

log = logging.getLogger(__name__)

BCE_EPS = 1e-7
PIXEL_WEIGHT_POSITIVE = 25.0
PIXEL_WEIGHT_NEGATIVE = 0.5

METHODS = ("cnn", "mil", "fcn")
# per-method (initial learning rate, epochs)
METHOD_DEFAULTS = {"cnn": (1e-4, 40), "mil": (1e-5, 30), "fcn": (1e-4, 400)}


@dataclass
class TrainConfig:
    method: str
    fold: int = 0
    lr: float | None = None
    epochs: int | None = None
    batch_size: int = 16
    decay: float = 0.95
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    input_size: int | None = None  # crop / patch side; None -> 448
    early_stop: float | None = None  # stop once val metric reaches this
    init_from: str | None = None  # checkpoint to warm-start from

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}, expected one of {METHODS}")
        default_lr, default_epochs = METHOD_DEFAULTS[self.method]
        if self.lr is None:
            self.lr = default_lr
        if self.epochs is None:
            self.epochs = default_epochs
        if self.input_size is None:
            self.input_size = 448

    def to_dict(self) -> dict:
        return asdict(self)


def binary_ce(prob, label) -> torch.Tensor:
    """Cross-entropy between a probability and a binary label (mean over
    any batch dimensions). Probabilities are clipped away from {0, 1}."""
    prob = torch.as_tensor(prob)
    if not prob.is_floating_point():
        prob = prob.float()
    label = torch.as_tensor(label, dtype=prob.dtype, device=prob.device)
    p = prob.clamp(BCE_EPS, 1.0 - BCE_EPS)
    loss = -(label * torch.log(p) + (1.0 - label) * torch.log1p(-p))
    return loss.mean()


def weighted_pixel_ce(
    prob_map,
    mask,
    w_pos: float = PIXEL_WEIGHT_POSITIVE,
    w_neg: float = PIXEL_WEIGHT_NEGATIVE,
) -> torch.Tensor:
    """Mean over pixels of class-weighted cross-entropy.

    Lesion pixels are up-weighted to compensate for how little of a chest
    image a pneumothorax covers.
    """
    prob_map = torch.as_tensor(prob_map)
    mask = torch.as_tensor(mask, dtype=prob_map.dtype, device=prob_map.device)
    if prob_map.shape != mask.shape:
        raise ValueError(f"shape mismatch: {tuple(prob_map.shape)} vs {tuple(mask.shape)}")
    p = prob_map.clamp(BCE_EPS, 1.0 - BCE_EPS)
    ce = -(mask * torch.log(p) + (1.0 - mask) * torch.log1p(-p))
    weights = mask * w_pos + (1.0 - mask) * w_neg
    return (weights * ce).mean()


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Exponential decay from the initial rate."""
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    return config.lr * config.decay**epoch


@dataclass
class EpochStats:
    epoch: int
    loss: float
    lr: float
    val_metric: float


@dataclass
class TrainResult:
    checkpoint_path: Path
    history_path: Path
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = float("-inf")


class StudyCache:
    """In-memory image/mask cache; the desk-scale datasets fit easily."""

    def __init__(self) -> None:
        self.images: dict[Path, np.ndarray] = {}
        self.masks: dict[Path, np.ndarray] = {}

    def image(self, rec: ImageRecord) -> np.ndarray:
        if rec.image_path not in self.images:
            self.images[rec.image_path] = load_image(rec)
        return self.images[rec.image_path]

    def mask(self, rec: ImageRecord) -> np.ndarray:
        if rec.image_path not in self.masks:
            img = self.image(rec)
            self.masks[rec.image_path] = load_mask(rec, img.shape)
        return self.masks[rec.image_path]


def _split(records: list[ImageRecord], fold: int):
    train = [r for r in records if r.fold != fold]
    val = [r for r in records if r.fold == fold]
    if not train:
        raise ValueError(f"no training records outside fold {fold}")
    if not val:
        raise ValueError(f"no validation records in fold {fold}")
    return train, val


def _check_finite(loss: torch.Tensor, method: str, epoch: int, step: int) -> None:
    if not torch.isfinite(loss):
        raise RuntimeError(
            f"{method}: non-finite loss {loss.item()} at epoch {epoch} step {step}; aborting"
        )


def _epoch_rng(config: TrainConfig, epoch: int, idx: int) -> np.random.Generator:
    return np.random.default_rng((config.seed, epoch, idx))


def train(
    records: list[ImageRecord],
    assignment: FoldAssignment,
    config: TrainConfig,
    out_dir: str | Path,
    aug: AugmentationParams | None = None,
) -> TrainResult:
    """Train one method on one fold split; returns paths to the best
    checkpoint and the per-epoch history table."""
    for rec in records:
        rec.fold = assignment.fold_of(rec)
    if aug is None:
        aug = AugmentationParams()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(config.seed)
    if config.method in ("cnn", "mil"):
        model = PneumoClassifier(CnnConfig(input_size=config.input_size))
    else:
        model = AttentionUNet(FcnConfig())
    if config.init_from:
        payload = load_checkpoint(config.init_from)
        if config.method in ("cnn", "mil"):
            load_backbone_weights(model, payload["state_dict"])
        else:
            model.load_state_dict(payload["state_dict"])
        log.info("%s: warm start from %s", config.method, config.init_from)

    train_recs, val_recs = _split(records, config.fold)
    if config.method == "fcn":
        before = len(train_recs)
        train_recs = segmentation_records(train_recs)
        val_recs = segmentation_records(val_recs)
        log.info(
            "fcn fold %d: %d/%d training records usable (mask rule)",
            config.fold, len(train_recs), before,
        )
        if not train_recs or not val_recs:
            raise ValueError("segmentation subset left an empty split")

    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.lr, betas=(config.beta1, config.beta2)
    )
    cache = StudyCache()

    stem = f"{config.method}_fold{config.fold}"
    result = TrainResult(
        checkpoint_path=out_dir / f"{stem}.pt",
        history_path=out_dir / f"{stem}_history.csv",
    )

    for epoch in range(config.epochs):
        rate = lr_at(epoch, config)
        for group in optimizer.param_groups:
            group["lr"] = rate

        model.train()
        order = _epoch_rng(config, epoch, 0).permutation(len(train_recs))
        losses: list[float] = []

        if config.method == "mil":
            for step, idx in enumerate(order):
                rec = train_recs[idx]
                img, _ = augment(cache.image(rec), None, aug, _epoch_rng(config, epoch, 1 + idx))
                bag = make_bag(img, patch_size=config.input_size)
                _, bag_prob = mil_probs(model, bag_to_tensor(bag))
                loss = binary_ce(bag_prob, float(rec.label))
                _check_finite(loss, config.method, epoch, step)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                losses.append(loss.item())
        else:
            for step, start in enumerate(range(0, len(order), config.batch_size)):
                xs, ys, ms = [], [], []
                for idx in order[start : start + config.batch_size]:
                    rec = train_recs[idx]
                    rng = _epoch_rng(config, epoch, 1 + idx)
                    if config.method == "cnn":
                        img, _ = augment(cache.image(rec), None, aug, rng)
                        xs.append(standard_input(img, config.input_size))
                        ys.append(float(rec.label))
                    else:
                        img, msk = augment(cache.image(rec), cache.mask(rec), aug, rng)
                        xs.append(resize(img, config.input_size))
                        ms.append(resize(msk.astype(np.float32), config.input_size, nearest=True))
                x = torch.from_numpy(np.stack(xs)).float().unsqueeze(1)
                if config.method == "cnn":
                    probs = torch.sigmoid(model(x).reshape(-1))
                    loss = binary_ce(probs, torch.tensor(ys))
                else:
                    prob_maps = model(x).squeeze(1)
                    target = torch.from_numpy(np.stack(ms)).float()
                    loss = weighted_pixel_ce(prob_maps, target)
                _check_finite(loss, config.method, epoch, step)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                losses.append(loss.item())

        metric = _validation_metric(model, val_recs, config, cache)
        mean_loss = float(np.mean(losses))
        result.history.append(EpochStats(epoch, mean_loss, rate, metric))
        log.info(
            "%s fold %d epoch %d: loss %.4f lr %.2e val %.4f",
            config.method, config.fold, epoch, mean_loss, rate, metric,
        )

        if metric > result.best_metric:
            result.best_metric = metric
            result.best_epoch = epoch
            save_checkpoint(
                result.checkpoint_path,
                config.method,
                model,
                train_config=config.to_dict(),
                extra={"best_epoch": epoch, "val_metric": metric},
            )
        if config.early_stop is not None and metric >= config.early_stop:
            log.info("%s fold %d: early stop at epoch %d", config.method, config.fold, epoch)
            break

    _write_history(result.history_path, result.history)
    return result


def _validation_metric(
    model, val_recs: list[ImageRecord], config: TrainConfig, cache: StudyCache
) -> float:
    labels = np.array([r.label for r in val_recs])
    if labels.min() == labels.max():
        raise ValueError("validation fold needs both classes for model selection")
    images = [cache.image(r) for r in val_recs]
    if config.method == "cnn":
        scores = inference.cnn_scores(model, images, five_crop_avg=False)
        return auc_score(scores, labels)
    if config.method == "mil":
        bags = inference.mil_bag_scores(model, images)
        return auc_score([b.bag_score for b in bags], labels)
    prob_maps = inference.fcn_prob_maps(model, images, config.input_size)
    return dice_positive(prob_maps, val_recs, cache, config.input_size)[0]


def dice_positive(
    prob_maps: np.ndarray,
    recs: list[ImageRecord],
    cache: StudyCache,
    input_size: int,
) -> tuple[float, int, float]:
    """Mean Dice over cases classified positive by thresholded lesion area.

    The case-level operating threshold comes from the Youden point of the
    area scores; ground truth is compared at the model's input resolution.
    Returns (mean dice, number of positively classified cases, threshold).
    """
    labels = np.array([r.label for r in recs])
    areas = np.array([fcn_area_score(m) for m in prob_maps])
    if labels.min() == labels.max():
        return 0.0, 0, float("inf")
    tau = youden_threshold(areas, labels)
    selected = np.nonzero(areas > tau)[0]
    if len(selected) == 0:
        return 0.0, 0, tau
    values = []
    for i in selected:
        gt = resize(cache.mask(recs[i]).astype(np.float32), input_size, nearest=True) >= 0.5
        values.append(dice(prob_maps[i] > 0.5, gt))
    return float(np.mean(values)), len(selected), tau


def _write_history(path: Path, history: list[EpochStats]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "lr", "val_metric"])
        for row in history:
            writer.writerow([row.epoch, repr(row.loss), repr(row.lr), repr(row.val_metric)])


def finite_difference_grad(fn, x: torch.Tensor, h: float = 1e-4) -> torch.Tensor:
    """Central finite differences of a scalar function, elementwise.

    Reference gradient for checking analytic/autograd gradients of losses
    and custom layers.
    """
    x = x.detach().clone().double()
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        hi = float(fn(x))
        flat[i] = orig - h
        lo = float(fn(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * h)
    return grad
