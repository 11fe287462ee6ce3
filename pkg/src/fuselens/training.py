"""Training loop and the loss-balance hyperparameter sweep."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Graph, Tensor, backward
from .checkpoint import save_checkpoint
from .losses import LossConfig, LossReport, compose_report, total_loss
from .models import FusionModel, build_model
from .optim import Adam

LOSS_CSV_HEADER = "epoch,l_ssim_mri,l_ssim_pet,l_l2_mri,l_l2_pet,l_total"


class TrainingDivergedError(RuntimeError):
    """Loss went non-finite; ``epoch`` is the 1-based epoch that failed."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged: non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainRunConfig:
    epochs: int = 200
    batch_size: int = 2
    learning_rate: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rng_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")


@dataclass
class TrainResult:
    model: FusionModel
    history: list[LossReport] = field(default_factory=list)


def _ensure_finite(report: LossReport, epoch: int):
    if not report.is_finite():
        raise TrainingDivergedError(epoch)


def _stack(pairs, idx) -> tuple[Tensor, Tensor]:
    x1 = np.stack([pairs[i][0] for i in idx])[:, None]
    x2 = np.stack([pairs[i][1] for i in idx])[:, None]
    return Tensor(x1), Tensor(x2)


def train(model: FusionModel, dataset: list[tuple[np.ndarray, np.ndarray]],
          run_cfg: TrainRunConfig, loss_cfg: LossConfig,
          checkpoint_path: str | Path | None = None,
          progress=None) -> TrainResult:
    """Train a model on (x1, x2) image pairs; one LossReport per epoch.

    The epoch report averages the four partial losses over the epoch's
    batches and recomposes the blended terms, so every row satisfies the
    affine composition exactly. Deterministic for a fixed seed.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if not model.parameters():
        raise ValueError(f"model {model.name} has no trainable parameters")
    shapes = {pair[0].shape for pair in dataset} | {pair[1].shape for pair in dataset}
    if len(shapes) != 1:
        raise ValueError(f"dataset images must share one shape, got {sorted(shapes)}")

    rng = np.random.default_rng(run_cfg.rng_seed)
    opt = Adam(model.parameters(), lr=run_cfg.learning_rate,
               beta1=run_cfg.beta1, beta2=run_cfg.beta2, eps=run_cfg.eps)
    history: list[LossReport] = []
    n = len(dataset)

    for epoch in range(1, run_cfg.epochs + 1):
        order = rng.permutation(n)
        partials = np.zeros(4)
        n_batches = 0
        for start in range(0, n, run_cfg.batch_size):
            idx = order[start:start + run_cfg.batch_size]
            x1, x2 = _stack(dataset, idx)
            with Graph():
                y = model.fuse(x1, x2, training=True)
                report, loss = total_loss(y, x1, x2, loss_cfg)
                grads = backward(loss, np.asarray(1.0))
            opt.step(grads)
            partials += (report.l_ssim_mri, report.l_ssim_pet,
                         report.l_l2_mri, report.l_l2_pet)
            n_batches += 1
        avg = partials / n_batches
        epoch_report = compose_report(*avg, loss_cfg)
        _ensure_finite(epoch_report, epoch)
        history.append(epoch_report)
        if progress is not None:
            progress(epoch, epoch_report)

    result = TrainResult(model=model, history=history)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, model,
                        train_metadata(run_cfg, loss_cfg, history))
    return result


def train_metadata(run_cfg: TrainRunConfig, loss_cfg: LossConfig,
                   history: list[LossReport]) -> dict[str, str]:
    rows = ";".join(
        f"{i + 1}:{r.l_ssim_mri!r},{r.l_ssim_pet!r},{r.l_l2_mri!r},"
        f"{r.l_l2_pet!r},{r.l_total!r}"
        for i, r in enumerate(history))
    return {
        "epochs": str(run_cfg.epochs),
        "batch_size": str(run_cfg.batch_size),
        "learning_rate": repr(run_cfg.learning_rate),
        "lambda": repr(loss_cfg.lambda_weight),
        "gamma_ssim": repr(loss_cfg.gamma_ssim),
        "gamma_l2": repr(loss_cfg.gamma_l2),
        "seed": str(run_cfg.rng_seed),
        "loss_history": rows,
    }


def loss_csv(history: list[LossReport]) -> str:
    """Loss curves as CSV text, one row per epoch."""
    lines = [LOSS_CSV_HEADER]
    for i, r in enumerate(history, start=1):
        lines.append(f"{i},{r.l_ssim_mri!r},{r.l_ssim_pet!r},{r.l_l2_mri!r},"
                     f"{r.l_l2_pet!r},{r.l_total!r}")
    return "\n".join(lines) + "\n"


def write_loss_csv(path: str | Path, history: list[LossReport]):
    Path(path).write_text(loss_csv(history))


@dataclass
class SweepRow:
    index: int
    loss_cfg: LossConfig
    report: LossReport

    @property
    def balance(self) -> float:
        """The sweep's selection metric: SSIM imbalance between modalities."""
        return abs(self.report.l_ssim_mri - self.report.l_ssim_pet)


def sweep(model_name: str, grid: list[LossConfig],
          dataset: list[tuple[np.ndarray, np.ndarray]],
          run_cfg: TrainRunConfig, progress=None) -> list[SweepRow]:
    """Train one fresh model per LossConfig; rows keep grid order.

    Cell k builds and trains with seed rng_seed + k, so cells are
    independent and a single-cell sweep reproduces a direct train call
    with the same seed.
    """
    if not grid:
        raise ValueError("sweep grid is empty")
    rows = []
    for k, cfg in enumerate(grid):
        cell_cfg = TrainRunConfig(
            epochs=run_cfg.epochs, batch_size=run_cfg.batch_size,
            learning_rate=run_cfg.learning_rate, beta1=run_cfg.beta1,
            beta2=run_cfg.beta2, eps=run_cfg.eps,
            rng_seed=run_cfg.rng_seed + k)
        model = build_model(model_name, seed=cell_cfg.rng_seed)
        result = train(model, dataset, cell_cfg, cfg)
        rows.append(SweepRow(index=k, loss_cfg=cfg, report=result.history[-1]))
        if progress is not None:
            progress(k, rows[-1])
    return rows


def best_balance(rows: list[SweepRow]) -> SweepRow:
    """Row with the smallest |l_ssim_mri - l_ssim_pet|."""
    return min(rows, key=lambda r: r.balance)


SWEEP_CSV_HEADER = ("index,lambda,gamma_ssim,gamma_l2,"
                    "l_ssim_mri,l_ssim_pet,l_l2_mri,l_l2_pet,l_total,balance")


def sweep_csv(rows: list[SweepRow]) -> str:
    lines = [SWEEP_CSV_HEADER]
    for row in rows:
        c, r = row.loss_cfg, row.report
        lines.append(f"{row.index},{c.lambda_weight!r},{c.gamma_ssim!r},{c.gamma_l2!r},"
                     f"{r.l_ssim_mri!r},{r.l_ssim_pet!r},{r.l_l2_mri!r},"
                     f"{r.l_l2_pet!r},{r.l_total!r},{row.balance!r}")
    return "\n".join(lines) + "\n"
