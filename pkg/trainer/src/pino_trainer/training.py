"""Adam training loop with step-decayed learning rate and periodic export."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import DivergenceError
from .export import export_weights
from .losses import Batch, total_loss
from .model import GridSpec, PinoNet, encode_batch
from .pricing import MarketParams, price_grid
from .sampling import CollocationSets, TrainConfig, sample_collocation

__all__ = ["HISTORY_COLUMNS", "TrainResult", "assemble_batch", "train", "validate"]

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "mse_f", "mse_b", "mse_exp", "total", "lr")


@dataclass(frozen=True, slots=True)
class TrainResult:
    """Artifacts of one training run."""

    model: PinoNet
    history_path: Path
    checkpoint_paths: tuple[Path, ...]
    validation: float
    wall_seconds: float


def _tens_f(a: np.ndarray | list) -> torch.Tensor:
    return torch.as_tensor(np.asarray(a, dtype=np.float32))


def _tens_i(a: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(np.asarray(a, dtype=np.int64))


def assemble_batch(sets: CollocationSets, idx: np.ndarray,
                   p: MarketParams) -> Batch:
    """Stack the pool rows ``idx`` plus the shared payoff row into tensors."""
    u0 = np.concatenate([sets.u0[idx], sets.payoff_grid[None]], axis=0)
    dt = np.concatenate([sets.dt[idx], [0.0]])
    return Batch(
        u0=_tens_f(u0), dt=_tens_f(dt),
        out_target=_tens_f(sets.out_target[idx]),
        res_x=_tens_f(sets.res_x[idx]), res_y=_tens_f(sets.res_y[idx]),
        bnd_x=_tens_f(sets.bnd_x[idx]), bnd_y=_tens_f(sets.bnd_y[idx]),
        bnd_target=_tens_f(sets.bnd_target[idx]),
        exp_ix=_tens_i(sets.exp_ix), exp_iy=_tens_i(sets.exp_iy),
        exp_target=_tens_f(sets.exp_target),
    )


def validate(model: PinoNet, grid: GridSpec, p: MarketParams, cfg: TrainConfig,
             n_pairs: int = 16) -> float:
    """Mean relative l2 error over held-out snapshot pairs in eval mode.

    The generator stream is offset from the training seed so validation
    pairs never coincide with pool draws.
    """
    rng = np.random.default_rng(cfg.seed + 7919)
    dts = rng.uniform(cfg.dt_lo, cfg.dt_hi, size=n_pairs)
    tau0 = rng.uniform(0.0, p.maturity - dts)
    errs = []
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for t0, d in zip(tau0, dts):
            u0 = price_grid(grid.nodes_x, grid.nodes_y, float(t0), p)
            target = price_grid(grid.nodes_x, grid.nodes_y, float(t0 + d), p)
            enc = encode_batch(torch.as_tensor(u0, dtype=torch.float32)[None],
                               torch.tensor([float(d)], dtype=torch.float32),
                               grid, p)
            out = model(enc)[0].numpy().astype(np.float64) * p.cash
            errs.append(float(np.linalg.norm(out - target)
                              / np.linalg.norm(target)))
    model.train(was_training)
    return float(np.mean(errs))


def train(cfg: TrainConfig, p: MarketParams | None = None,
          out_dir: str | Path = ".") -> TrainResult:
    """Run the optimisation loop, writing history and checkpoints to out_dir.

    One epoch is one Adam step on a mini-batch drawn from the frozen pools.
    Running statistics are folded in after each step by replaying the batch
    (the loss itself normalises with batch statistics).  The learning rate
    recorded per epoch is the one the step actually used.
    """
    if p is None:
        p = MarketParams.benchmark()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    grid = GridSpec(cfg.grid_n)

    t_start = time.perf_counter()
    sets = sample_collocation(cfg, grid, p, rng)
    log.info("collocation pools ready (%d snapshots) in %.1fs",
             cfg.n_initial, time.perf_counter() - t_start)

    model = PinoNet(cfg.width, cfg.modes, cfg.n_layers)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=cfg.decay_every,
                                            gamma=cfg.decay_rate)

    history: list[tuple] = []
    checkpoints: list[Path] = []
    for epoch in range(1, cfg.epochs + 1):
        idx = rng.integers(0, cfg.n_initial, size=cfg.batch_size)
        batch = assemble_batch(sets, idx, p)
        model.train()
        parts = total_loss(model, batch, grid, p)
        if not torch.isfinite(parts.total):
            raise DivergenceError("loss is not finite", cfg.seed, epoch)
        # The residual gradient of a still-rough surface is orders of
        # magnitude louder than the value terms, so warmup epochs step on the
        # value terms alone while every component is still logged.  Past the
        # warmup boundary the full total drives the step.
        objective = (parts.total if epoch > cfg.warmup_epochs
                     else parts.mse_b + parts.mse_exp)
        opt.zero_grad()
        objective.backward()
        # Clipping keeps residual spikes from poisoning Adam's moment
        # estimates when the full objective is active.
        torch.nn.utils.clip_grad_norm_(model.parameters(), max_norm=1.0)
        opt.step()
        model.refresh_running_stats(encode_batch(batch.u0, batch.dt, grid, p))

        lr_now = float(opt.param_groups[0]["lr"])
        row = (epoch, parts.mse_f.detach().item(), parts.mse_b.detach().item(),
               parts.mse_exp.detach().item(), parts.total.detach().item(), lr_now)
        history.append(row)
        sched.step()

        if epoch == 1 or epoch % 100 == 0:
            log.info("epoch %5d  total %.3e  f %.3e  b %.3e  exp %.3e  lr %.2e",
                     epoch, row[4], row[1], row[2], row[3], lr_now)
        if epoch in cfg.checkpoint_epochs:
            ck = out / f"checkpoint_{epoch:05d}.fno1"
            export_weights(model, ck)
            checkpoints.append(ck)

    history_path = out / "train_history.csv"
    with history_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        writer.writerows(history)

    score = validate(model, grid, p, cfg)
    wall = time.perf_counter() - t_start
    log.info("finished %d epochs in %.1fs, validation rel l2 %.3e",
             cfg.epochs, wall, score)
    return TrainResult(model=model, history_path=history_path,
                       checkpoint_paths=tuple(checkpoints),
                       validation=score, wall_seconds=wall)
