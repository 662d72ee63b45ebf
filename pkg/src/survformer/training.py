"""Fitting and evaluation orchestration.

Training fits the assignment-propensity model first (competing-events data
only), then runs mini-batch Adam on the annealed multi-task objective with
early stopping on validation loss; the best-epoch parameter snapshot is
restored at the end. Evaluation converts hazards to survival curves and
reports time-dependent concordance per event at quantile horizons of the
evaluated records' event times.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import losses as L
from . import propensity as prop
from .data import records_as_arrays
from .evaluation import (
    UndefinedMetricError,
    ctd,
    km_censoring,
    quantile_horizons,
    survival_matrix,
)
from .model import ModelConfig, SurvivalTransformer
from .optim import Adam


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 50
    patience: int = 5
    anneal_horizon: int = 0  # 0 means max_epochs - 1
    gamma_initial: tuple = (1.0, 1.0)
    embed_dim: int = 16
    heads: int = 2
    layers: int = 2
    ffn_depth: int = 2
    hidden_size: int = 32
    head_layers: int = 2
    time_bins: int = 10
    grid_scheme: str = "quantile"
    propensity_floor: float = 0.05
    propensity_renormalize: bool = False
    propensity_l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ValueError(f"heads ({self.heads}) must divide embed_dim ({self.embed_dim})")
        for name in ("batch_size", "max_epochs", "patience", "time_bins"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def model_config(self, m, n_events):
        return ModelConfig(
            embed_dim=self.embed_dim,
            heads=self.heads,
            layers=self.layers,
            ffn_depth=self.ffn_depth,
            hidden_size=self.hidden_size,
            head_layers=self.head_layers,
            time_bins=m,
            n_events=n_events,
        )

    def schedule(self):
        horizon = self.anneal_horizon if self.anneal_horizon > 0 else max(1, self.max_epochs - 1)
        return L.AnnealSchedule(initial=tuple(self.gamma_initial), mode="linear", horizon=horizon)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        if "gamma_initial" in payload:
            payload["gamma_initial"] = tuple(payload["gamma_initial"])
        return cls(**payload)


@dataclass
class EpochRecord:
    epoch: int
    train: L.LossBreakdown
    validation_loss: float
    gamma1: float
    gamma2: float


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1

    def to_dict(self):
        return {
            "best_epoch": self.best_epoch,
            "epochs": [
                {
                    "epoch": e.epoch,
                    "train": asdict(e.train),
                    "validation_loss": e.validation_loss,
                    "gamma1": e.gamma1,
                    "gamma2": e.gamma2,
                }
                for e in self.epochs
            ],
        }


def _batch_loss(model, grid, cat, num, t, e, pi, schedule, epoch):
    fp = model.forward_batch(cat, num)
    survival = L.competing_survival_loss(fp.hazards, grid, t, e, propensities=pi)
    mp = L.mp_loss_tensor(fp.event_prob, (e > 0).astype(np.float64))
    ls = L.ls_loss_tensor(fp.time_pred, t)
    return L.total_loss_tensor(survival, mp, ls, schedule, epoch)


def train(config, train_records, val_records, schema, grid):
    """Fit a model; returns it with the per-epoch history.

    The schema and grid must have been fitted on the training fold. The
    number of competing events is taken from the training labels; with a
    single event type the survival term reduces to the plain batch-mean
    piecewise-constant-hazard loss and no propensity model is fitted.
    """
    if not train_records or not val_records:
        raise ValueError("training and validation sets must both be nonempty")
    n_events = max(int(max(r.event for r in train_records)), 1)
    val_max = max(r.event for r in val_records)
    if val_max > n_events:
        raise ValueError(f"validation set has event label {val_max} unseen in training")

    cat, num, t, e = records_as_arrays(train_records)
    vcat, vnum, vt, ve = records_as_arrays(val_records)

    pi = None
    val_pi = None
    propensity_model = None
    if n_events >= 2:
        observed = e > 0
        if not observed.any():
            raise ValueError("no observed events in the training fold")
        design = prop.design_matrix(schema, train_records)
        propensity_model = prop.fit(
            design[observed],
            e[observed],
            prop.PropensityConfig(
                l2=config.propensity_l2,
                floor=config.propensity_floor,
                renormalize=config.propensity_renormalize,
            ),
        )
        pi = propensity_model.predict(design)
        val_pi = propensity_model.predict(prop.design_matrix(schema, val_records))

    model = SurvivalTransformer(config.model_config(grid.m, n_events), schema, grid, seed=config.seed)
    optimizer = Adam(
        model.parameters(),
        lr=config.learning_rate,
        weight_decay=config.weight_decay,
    )
    schedule = config.schedule()
    rng = np.random.default_rng(config.seed)

    history = TrainHistory()
    best_val = np.inf
    best_snapshot = None
    since_best = 0
    n = len(train_records)

    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        sums = np.zeros(4)  # total, survival, mp, ls weighted by batch size
        for batch_no, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            try:
                total, bd = _batch_loss(
                    model, grid, cat[idx], num[idx], t[idx], e[idx],
                    None if pi is None else pi[idx], schedule, epoch,
                )
            except (ValueError, FloatingPointError) as err:
                raise TrainingDiverged(
                    f"loss left the finite range at epoch {epoch}, batch {batch_no}: {err}"
                ) from err
            if not np.isfinite(total.data):
                raise TrainingDiverged(f"nonfinite loss at epoch {epoch}, batch {batch_no}")
            optimizer.zero_grad()
            ad.backward(total)
            optimizer.step()
            sums += len(idx) * np.array([bd.total, bd.survival, bd.mp, bd.ls])
        g1, g2 = schedule.gammas(epoch)
        train_bd = L.LossBreakdown(*(sums / n), gamma1=g1, gamma2=g2)

        try:
            val_total, _ = _batch_loss(model, grid, vcat, vnum, vt, ve, val_pi, schedule, epoch)
        except (ValueError, FloatingPointError) as err:
            raise TrainingDiverged(f"nonfinite validation loss at epoch {epoch}: {err}") from err
        val_loss = float(val_total.data)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(f"nonfinite validation loss at epoch {epoch}")
        history.epochs.append(EpochRecord(epoch, train_bd, val_loss, g1, g2))

        if val_loss < best_val:
            best_val = val_loss
            history.best_epoch = epoch
            best_snapshot = {name: p.data.copy() for name, p in model.params.items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    if best_snapshot is not None:
        for name, arr in best_snapshot.items():
            model.params[name].data = arr
    return model, history, propensity_model


def predict(model, records, times):
    """Survival values for each record, event, and query time: (n, K, T)."""
    times = np.asarray(times, dtype=np.float64)
    hazards = model.predict_hazards(records)  # (n, K, m)
    n, K, _ = hazards.shape
    out = np.empty((n, K, times.size))
    for k in range(K):
        out[:, k, :] = survival_matrix(hazards[:, k, :], model.grid, times)
    return out


def evaluate(model, test_records, censoring, quantiles=(0.25, 0.5, 0.75)):
    """Concordance per event at quantile horizons of the test event times."""
    _, _, t, e = records_as_arrays(test_records)
    hazards = model.predict_hazards(test_records)
    report = {"quantiles": list(quantiles), "events": []}
    for k in range(1, model.config.n_events + 1):
        event_durations = t[e == k]
        if event_durations.size == 0:
            raise UndefinedMetricError(f"no event-{k} records in the evaluated set")
        horizons = quantile_horizons(event_durations, quantiles)
        block = {"event": k, "horizons": []}
        for q, tau in zip(quantiles, horizons):
            surv = survival_matrix(hazards[:, k - 1, :], model.grid, np.array([tau]))[:, 0]
            value, pairs = ctd(surv, t, e, tau, k, censoring)
            block["horizons"].append(
                {"quantile": float(q), "time": float(tau), "ctd": value, "pairs": pairs}
            )
        report["events"].append(block)
    return report


def fit_censoring(train_records):
    _, _, t, e = records_as_arrays(train_records)
    return km_censoring(t, e)
