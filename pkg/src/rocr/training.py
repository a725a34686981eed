"""Shared minibatch SGD loop with periodic validation and best-model selection."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .config import TrainConfig
from .core import SGD, ParamSet, Tensor

log = logging.getLogger(__name__)


@dataclass
class TrainHistory:
    losses: list[float] = field(default_factory=list)
    evals: list[tuple[int, float]] = field(default_factory=list)
    best_step: int = 0
    best_score: float = float("-inf")
    seconds: float = 0.0
    stopped_early: bool = False


def minibatches(n: int, batch_size: int, seed: int):
    """Endless stream of index batches; a fresh permutation every epoch."""
    rng = np.random.default_rng(seed)
    while True:
        order = rng.permutation(n)
        for i in range(0, n, batch_size):
            yield order[i:i + batch_size]


def fit(params: ParamSet, items: Sequence, loss_fn: Callable[[object, ParamSet], Tensor],
        tcfg: TrainConfig, evaluate: Callable[[ParamSet], float] | None = None,
        target: float | None = None, time_limit: float | None = None,
        ) -> tuple[ParamSet, TrainHistory]:
    """Train in place and return a copy of the best-validation parameters.

    ``evaluate`` runs every ``eval_interval`` steps and after the last one;
    without it the final parameters are returned.  Training stops once the
    score reaches ``target`` or ``time_limit`` seconds pass.
    """
    if not items:
        raise ValueError("cannot train on an empty dataset")
    hist = TrainHistory()
    opt = SGD(params, tcfg.lr, momentum=tcfg.momentum, clip_norm=tcfg.clip_norm)
    best = params.copy()
    start = time.perf_counter()
    batches = minibatches(len(items), tcfg.batch_size, tcfg.seed)

    def check(step: int) -> bool:
        if evaluate is None:
            return False
        score = evaluate(params)
        hist.evals.append((step, score))
        log.info("step %d loss %.4f val %.4f", step, hist.losses[-1] if hist.losses else float("nan"), score)
        if score > hist.best_score:
            hist.best_score, hist.best_step = score, step
            best.load_state(params.state())
        return target is not None and score >= target

    params.zero_grad()
    for step in range(1, tcfg.iterations + 1):
        batch = next(batches)
        total = 0.0
        for i in batch:
            loss = loss_fn(items[i], params)
            total += float(loss.data)
            loss.backward()
        opt.step(1.0 / len(batch))
        hist.losses.append(total / len(batch))
        last = step == tcfg.iterations
        out_of_time = time_limit is not None and time.perf_counter() - start > time_limit
        if step % tcfg.eval_interval == 0 or last or out_of_time:
            if check(step) or out_of_time:
                hist.stopped_early = not last
                break
    hist.seconds = time.perf_counter() - start
    if evaluate is None or not hist.evals:
        best.load_state(params.state())
    return best, hist
