"""Fit a Lie map to discrete time series by gradient descent.

The model is one shared map applied repeatedly: a sequence of length
``m+1`` is predicted by rolling the map forward from its (fully
observed) initial state, and the loss is the mean squared error over the
observed entries of steps 1..m.  Entries marked unavailable carry a
``False`` mask bit and contribute nothing.  Because the same weight
blocks act at every step, gradients accumulate across the unrolled
chain; they are computed in closed form by reverse accumulation through
the state Jacobian of the map.

Training is deliberately full-batch and serial: the datasets this was
built for are tiny (down to 10 sequences), and a fixed accumulation
order (sequence-major, step-major) makes every run bitwise reproducible.

Dataset CSV format
------------------
Header ``t,<var1>,...,<varn>`` with one row per time point, or
``series,t,<var1>,...`` to pack several sequences into one file (grouped
by the ``series`` id, in order of first appearance).  Missing
observations are written as the literal token ``NA``.  The sampling step
is inferred from the ``t`` column and must be uniform across the file.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .builder import LieMap, identity_map
from .errors import DivergenceError, TrainingDivergedError
from .monomial import stacked_exponents, stacked_sizes

_DT_RTOL = 1e-9


@dataclass
class ObservedSeries:
    """One uniformly sampled sequence with a per-entry observation mask.

    ``states[i, j]`` is only meaningful where ``mask[i, j]`` is True;
    masked-out slots are conventionally NaN.
    """

    states: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.states.ndim != 2 or self.states.shape[0] < 2:
            raise ValueError("a sequence needs at least 2 time points, got "
                             f"shape {self.states.shape}")
        if self.mask.shape != self.states.shape:
            raise ValueError(f"mask shape {self.mask.shape} does not match "
                             f"states shape {self.states.shape}")
        if not self.mask[0].all():
            raise ValueError("the initial state of a sequence must be fully "
                             "observed")
        if not np.all(np.isfinite(self.states[self.mask])):
            raise ValueError("non-finite value at an observed entry")

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def transitions(self) -> int:
        return self.states.shape[0] - 1


@dataclass
class TimeSeriesDataset:
    dt: float
    samples: list[ObservedSeries]
    variable_names: list[str]

    def __post_init__(self):
        if not self.samples:
            raise ValueError("dataset has no sequences")
        n = self.samples[0].n
        for i, s in enumerate(self.samples):
            if s.n != n:
                raise ValueError(f"sequence {i} has dimension {s.n}, "
                                 f"expected {n}")
        if len(self.variable_names) != n:
            raise ValueError(f"{len(self.variable_names)} variable names for "
                             f"dimension {n}")
        if not (np.isfinite(self.dt) and self.dt != 0.0):
            raise ValueError(f"bad sampling step {self.dt}")

    @property
    def n(self) -> int:
        return self.samples[0].n

    def observed_count(self) -> int:
        """Observed scalar entries at steps >= 1 (the loss denominator)."""
        return int(sum(s.mask[1:].sum() for s in self.samples))


@dataclass
class TrainConfig:
    order: int
    epochs: int
    learning_rate: float = 2e-3
    adamax_beta1: float = 0.9
    adamax_beta2: float = 0.999
    adamax_epsilon: float = 1e-8
    init: LieMap | str = "identity"
    seed: int = 0  # reserved for shuffling; full-batch training ignores it

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 < self.adamax_beta1 < 1.0:
            raise ValueError(f"beta1 must be in (0, 1), got {self.adamax_beta1}")
        if not 0.0 < self.adamax_beta2 < 1.0:
            raise ValueError(f"beta2 must be in (0, 1), got {self.adamax_beta2}")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.adamax_epsilon < 0.0:
            raise ValueError(f"epsilon must be >= 0, got {self.adamax_epsilon}")


@dataclass
class FitResult:
    map: LieMap
    loss_history: list[float]
    epochs_run: int


def _split_stacked(g: np.ndarray, n: int, order: int) -> list[np.ndarray]:
    out = []
    start = 0
    for size in stacked_sizes(n, order):
        out.append(g[:, start:start + size].copy())
        start += size
    return out


def loss_and_grad(m: LieMap, dataset: TimeSeriesDataset):
    """Masked MSE of the free-running rollout and its weight gradients.

    Returns ``(loss, grads)`` with one gradient array per weight block.
    Gradients are exact (reverse accumulation), with a fixed
    sequence-major, step-major accumulation order.
    """
    if dataset.n != m.n:
        raise ValueError(f"dataset dimension {dataset.n} does not match map "
                         f"dimension {m.n}")
    n, order = m.n, m.order
    wstack = np.hstack(m.weights)
    exps = stacked_exponents(n, order)
    n_obs = dataset.observed_count()
    grad = np.zeros_like(wstack)
    if n_obs == 0:
        return 0.0, _split_stacked(grad, n, order)

    loss_sum = 0.0
    for seq_index, seq in enumerate(dataset.samples):
        steps = seq.transitions
        pred = np.empty((steps + 1, n))
        powers = np.empty((steps, exps.shape[0]))
        pred[0] = seq.states[0]
        for i in range(steps):
            powers[i] = np.prod(pred[i][None, :] ** exps, axis=1)
            pred[i + 1] = wstack @ powers[i]
            if not np.all(np.isfinite(pred[i + 1])):
                raise DivergenceError(
                    f"rollout diverged in sequence {seq_index} at step {i + 1}",
                    step_index=i + 1,
                    sequence_index=seq_index,
                )
        resid = np.where(seq.mask[1:], pred[1:] - seq.states[1:], 0.0)
        loss_sum += float(np.sum(resid * resid))

        lam = np.zeros(n)
        for i in range(steps, 0, -1):
            lam = lam + (2.0 / n_obs) * resid[i - 1]
            grad += np.outer(lam, powers[i - 1])
            if i > 1:
                # state Jacobian of the map at the step input
                jac_stack = np.zeros((exps.shape[0], n))
                x = pred[i - 1]
                for col in range(n):
                    rows = exps[:, col] > 0
                    lowered = exps[rows].copy()
                    lowered[:, col] -= 1
                    jac_stack[rows, col] = exps[rows, col] * np.prod(x ** lowered,
                                                                     axis=1)
                lam = (wstack @ jac_stack).T @ lam
    return loss_sum / n_obs, _split_stacked(grad, n, order)


@dataclass
class AdamaxState:
    """First-moment and infinity-norm accumulators, one per weight block."""

    m: list[np.ndarray]
    u: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, weights) -> "AdamaxState":
        return cls(m=[np.zeros_like(w) for w in weights],
                   u=[np.zeros_like(w) for w in weights])


def adamax_step(weights, grads, state: AdamaxState, config: TrainConfig):
    """One Adamax update; returns ``(new_weights, new_state)``."""
    b1, b2 = config.adamax_beta1, config.adamax_beta2
    t = state.t + 1
    scale = config.learning_rate / (1.0 - b1 ** t)
    new_w, new_m, new_u = [], [], []
    for w, g, m1, u in zip(weights, grads, state.m, state.u):
        m1 = b1 * m1 + (1.0 - b1) * g
        u = np.maximum(b2 * u, np.abs(g))
        new_w.append(w - scale * m1 / (u + config.adamax_epsilon))
        new_m.append(m1)
        new_u.append(u)
    return new_w, AdamaxState(m=new_m, u=new_u, t=t)


def fit(dataset: TimeSeriesDataset, config: TrainConfig) -> FitResult:
    """Full-batch Adamax training; returns the best-loss map seen.

    Deterministic for a given dataset and config.  A non-finite loss or
    a divergent rollout aborts with :class:`TrainingDivergedError`
    carrying the progress made so far.
    """
    n = dataset.n
    if isinstance(config.init, LieMap):
        if config.init.n != n or config.init.order != config.order:
            raise ValueError("init map does not match dataset dimension or "
                             "configured order")
        weights = [w.copy() for w in config.init.weights]
    elif config.init == "identity":
        weights = identity_map(n, config.order, dataset.dt).weights
    else:
        raise ValueError(f"unknown init {config.init!r}")

    state = AdamaxState.zeros_like(weights)
    history: list[float] = []
    best_loss = np.inf
    best_weights = [w.copy() for w in weights]

    def current_map(w) -> LieMap:
        return LieMap(weights=[b.copy() for b in w], dt=dataset.dt,
                      variable_names=list(dataset.variable_names))

    for epoch in range(config.epochs):
        try:
            loss, grads = loss_and_grad(current_map(weights), dataset)
        except DivergenceError as exc:
            raise TrainingDivergedError(
                f"epoch {epoch}: {exc}", epochs_run=len(history),
                loss_history=history,
                best_map=current_map(best_weights),
            ) from exc
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"epoch {epoch}: non-finite loss {loss}",
                epochs_run=len(history), loss_history=history,
                best_map=current_map(best_weights),
            )
        history.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_weights = [w.copy() for w in weights]
        weights, state = adamax_step(weights, grads, state, config)

    return FitResult(map=current_map(best_weights), loss_history=history,
                     epochs_run=len(history))


# ---------------------------------------------------------------------------
# Dataset CSV I/O


def write_dataset_csv(dataset: TimeSeriesDataset, path) -> None:
    """Write with a ``series`` column iff the dataset has several sequences."""
    multi = len(dataset.samples) > 1
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        head = ["t"] + list(dataset.variable_names)
        writer.writerow((["series"] + head) if multi else head)
        for sid, seq in enumerate(dataset.samples):
            for i in range(seq.states.shape[0]):
                row = [repr(float(i * dataset.dt))]
                for j in range(seq.n):
                    row.append(repr(float(seq.states[i, j]))
                               if seq.mask[i, j] else "NA")
                writer.writerow(([str(sid)] + row) if multi else row)


def _parse_cell(token: str, where: str) -> tuple[float, bool]:
    token = token.strip()
    if token == "NA":
        return np.nan, False
    try:
        return float(token), True
    except ValueError:
        raise ValueError(f"{where}: expected a number or NA, got {token!r}") \
            from None


def read_dataset_csv(path) -> TimeSeriesDataset:
    """Read one CSV file (single- or multi-sequence) into a dataset."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    header = [c.strip() for c in rows[0]]
    has_series = header[0] == "series"
    t_col = 1 if has_series else 0
    if len(header) <= t_col or header[t_col] != "t":
        raise ValueError(f"{path}: header must start with "
                         f"{'series,t' if has_series else 't'}")
    names = header[t_col + 1:]
    if not names:
        raise ValueError(f"{path}: no variable columns")

    groups: dict[str, list[list[str]]] = {}
    for row in rows[1:]:
        if len(row) != len(header):
            raise ValueError(f"{path}: row has {len(row)} cells, header has "
                             f"{len(header)}")
        key = row[0].strip() if has_series else ""
        groups.setdefault(key, []).append(row)

    dt = None
    samples = []
    for key, group in groups.items():
        label = f"{path}" + (f" series {key}" if has_series else "")
        times, states, mask = [], [], []
        for row in group:
            t_val, t_ok = _parse_cell(row[t_col], label)
            if not t_ok:
                raise ValueError(f"{label}: time column cannot be NA")
            times.append(t_val)
            vals, bits = [], []
            for name, cell in zip(names, row[t_col + 1:]):
                v, ok = _parse_cell(cell, f"{label} column {name}")
                vals.append(v)
                bits.append(ok)
            states.append(vals)
            mask.append(bits)
        times = np.asarray(times)
        if len(times) < 2:
            raise ValueError(f"{label}: a sequence needs at least 2 rows")
        step = times[1] - times[0]
        if step == 0.0 or not np.isfinite(step):
            raise ValueError(f"{label}: bad time step {step}")
        if not np.allclose(np.diff(times), step, rtol=0.0,
                           atol=_DT_RTOL * max(1.0, abs(step))):
            raise ValueError(f"{label}: time column is not uniformly spaced")
        if dt is None:
            dt = step
        elif abs(step - dt) > _DT_RTOL * max(1.0, abs(dt)):
            raise ValueError(f"{label}: time step {step} differs from {dt}")
        samples.append(ObservedSeries(states=np.asarray(states),
                                      mask=np.asarray(mask)))
    return TimeSeriesDataset(dt=float(dt), samples=samples,
                             variable_names=names)


def load_dataset(paths) -> TimeSeriesDataset:
    """Read and merge one or more CSV files into a single dataset."""
    parts = [read_dataset_csv(p) for p in paths]
    first = parts[0]
    for p, part in zip(paths[1:], parts[1:]):
        if part.variable_names != first.variable_names:
            raise ValueError(f"{p}: variable names differ from first file")
        if abs(part.dt - first.dt) > _DT_RTOL * max(1.0, abs(first.dt)):
            raise ValueError(f"{p}: time step {part.dt} differs from "
                             f"{first.dt}")
    samples = [s for part in parts for s in part.samples]
    return TimeSeriesDataset(dt=first.dt, samples=samples,
                             variable_names=first.variable_names)
