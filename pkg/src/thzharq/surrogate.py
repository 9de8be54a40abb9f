"""Neural outage surrogate trained on a hybrid simulated/asymptotic dataset.

Each sample maps ``(snr_db, rate, k_max, beam_waist)`` to the HARQ-IR outage
``p``.  Samples with a simulated outage of at least ``upsilon`` keep the
simulated value; the rest use the high-SNR asymptotic formula.  The network
learns ``log2(-log2 p)``, which stretches the low-outage region.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelParams, LinkParams, rng_for
from .errors import ConfigError, ConvergenceError
from .montecarlo import simulate_outage
from .outage import HarqConfig, Scheme, outage_asymptotic

# training/testing ranges: snr_db, rate, k_max, beam_waist
INPUT_NAMES = ("snr_db", "rate", "k_max", "beam_waist")
INPUT_RANGES = ((0.0, 50.0), (0.0, 5.0), (2.0, 4.0), (3.0, 4.0))
CSV_HEADER = ("snr_db", "rate", "k_max", "beam_waist", "raw_p", "source", "target", "split")
SPLITS = ("train", "val", "test")

_STREAM_INPUTS = 2
_STREAM_SIM = 3
_STREAM_SPLIT = 4
_STREAM_INIT = 5
_STREAM_SHUFFLE = 6


def to_target(p):
    """``log2(-log2 p)`` for ``p`` in (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ConfigError("outage must lie strictly inside (0, 1)")
    return np.log2(-np.log2(p))


def from_target(y):
    """Inverse of :func:`to_target`: ``2 ** (-(2 ** y))``."""
    return np.exp2(-np.exp2(np.asarray(y, dtype=float)))


@dataclass(frozen=True)
class Sample:
    snr_db: float
    rate: float
    k_max: int
    beam_waist: float
    raw_p: float
    source: str
    target: float
    split: str = ""


@dataclass
class Dataset:
    inputs: np.ndarray          # (n, 4)
    raw_p: np.ndarray
    source: np.ndarray          # "sim" | "asy"
    target: np.ndarray
    split: np.ndarray           # "train" | "val" | "test"
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.raw_p.size

    def subset(self, name: str) -> "Dataset":
        m = self.split == name
        return Dataset(self.inputs[m], self.raw_p[m], self.source[m], self.target[m],
                       self.split[m], dict(self.meta))

    def samples(self):
        for x, p, s, t, sp in zip(self.inputs, self.raw_p, self.source, self.target, self.split):
            yield Sample(float(x[0]), float(x[1]), int(x[2]), float(x[3]), float(p), str(s),
                         float(t), str(sp))

    def to_csv(self, path=None, comment: str | None = None) -> str:
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for s in self.samples():
            w.writerow([repr(s.snr_db), repr(s.rate), s.k_max, repr(s.beam_waist),
                        repr(s.raw_p), s.source, repr(s.target), s.split])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, encoding="utf-8", newline="") as fh:
            rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise ConfigError(f"{path}: unexpected dataset header")
        body = rows[1:]
        if not body:
            raise ConfigError(f"{path}: dataset is empty")
        col = list(zip(*body))
        inputs = np.column_stack([np.array(col[i], dtype=float) for i in range(4)])
        return cls(inputs, np.array(col[4], dtype=float), np.array(col[5]),
                   np.array(col[6], dtype=float), np.array(col[7]))


def _sim_seed(seed, i, attempt):
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, _STREAM_SIM, i, attempt])
               .generate_state(1, dtype=np.uint64)[0])


def label_sample(snr_db, rate, k_max, beam_waist, upsilon, sim_trials, sim_seed,
                 link: LinkParams | None = None, chan: ChannelParams | None = None):
    """``(raw_p, source)`` for one input point, or ``None`` when it cannot be used.

    Fails when the simulated outage is 1, or when the simulated outage is
    below ``upsilon`` but the asymptotic value is not, since then the stored
    value would contradict its provenance.
    """
    link = link or LinkParams()
    chan = dataclasses.replace(chan or ChannelParams(), beam_waist_m=float(beam_waist))
    cfg = HarqConfig(scheme=Scheme.IR, k_max=int(k_max), rate_bps_hz=float(rate),
                     snr_ref_db=float(snr_db))
    p_sim = simulate_outage(cfg, link, chan, sim_trials, sim_seed).estimate
    if p_sim >= upsilon:
        return (p_sim, "sim") if p_sim < 1.0 else None
    if not rate > 0:
        return None
    p_asy = outage_asymptotic(cfg, link, chan).outage
    return (p_asy, "asy") if 0.0 < p_asy < upsilon else None


def generate_dataset(n: int, upsilon: float = 1e-4, sim_trials: int = 100_000, seed: int = 0,
                     link: LinkParams | None = None, chan: ChannelParams | None = None,
                     max_attempts: int = 1000, progress=None) -> Dataset:
    """Draw ``n`` labelled samples uniformly over the training ranges.

    Unusable draws are replaced by redrawing the inputs of the same sample
    index; the number of redraws is stored in ``meta["redraws"]``.  The
    split is a seeded 60/20/20 permutation.
    """
    if int(n) != n or n < 1:
        raise ConfigError("n must be a positive integer")
    if not 0 < upsilon < 1:
        raise ConfigError("upsilon must lie in (0, 1)")
    rows, redraws = [], 0
    for i in range(n):
        for attempt in range(max_attempts):
            u = rng_for(seed, _STREAM_INPUTS, i, attempt).random(4)
            snr = INPUT_RANGES[0][0] + u[0] * (INPUT_RANGES[0][1] - INPUT_RANGES[0][0])
            rate = INPUT_RANGES[1][0] + u[1] * (INPUT_RANGES[1][1] - INPUT_RANGES[1][0])
            k = 2 + min(int(u[2] * 3), 2)
            wd = INPUT_RANGES[3][0] + u[3] * (INPUT_RANGES[3][1] - INPUT_RANGES[3][0])
            lab = label_sample(snr, rate, k, wd, upsilon, sim_trials, _sim_seed(seed, i, attempt),
                               link, chan)
            if lab is not None:
                rows.append((snr, rate, k, wd, *lab))
                break
            redraws += 1
        else:
            raise ConvergenceError(f"sample {i}: no usable draw in {max_attempts} attempts")
        if progress is not None:
            progress(i + 1, n)
    inputs = np.array([r[:4] for r in rows], dtype=float)
    raw = np.array([r[4] for r in rows])
    source = np.array([r[5] for r in rows])
    split = assign_splits(n, seed)
    return Dataset(inputs, raw, source, to_target(raw), split,
                   {"n": n, "upsilon": upsilon, "sim_trials": sim_trials, "seed": seed,
                    "redraws": redraws})


def assign_splits(n: int, seed: int) -> np.ndarray:
    n_train = int(round(0.6 * n))
    n_val = int(round(0.2 * n))
    labels = np.array(["train"] * n_train + ["val"] * n_val + ["test"] * (n - n_train - n_val))
    perm = rng_for(seed, _STREAM_SPLIT).permutation(n)
    out = np.empty(n, dtype=labels.dtype)
    out[perm] = labels
    return out


# --- network ---------------------------------------------------------------

def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 2000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 50
    seed: int = 0
    hidden: tuple = (100, 100)
    # "elu" keeps the activation on the output neuron; "linear" drops it
    output_activation: str = "elu"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must be >= 1")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ConfigError("Adam betas must lie in (0, 1)")
        if not self.adam_eps > 0:
            raise ConfigError("adam_eps must be positive")
        if self.output_activation not in ("elu", "linear"):
            raise ConfigError("output_activation must be 'elu' or 'linear'")


@dataclass
class SurrogateModel:
    """MLP ``4 -> 100 -> 100 -> 1`` with ELU units.

    Inputs are min-max scaled with ``input_ranges``.  The output neuron
    predicts the target min-max scaled by ``target_range``, so the ELU floor
    at -1 sits below every training target.
    """

    layer_sizes: list
    weights: list
    biases: list
    input_ranges: np.ndarray
    target_range: tuple = (0.0, 1.0)
    output_activation: str = "elu"
    metadata: dict = field(default_factory=dict)

    @classmethod
    def init(cls, layer_sizes, seed, target_range=(0.0, 1.0), output_activation="elu",
             input_ranges=INPUT_RANGES):
        rng = rng_for(seed, _STREAM_INIT)
        W, b = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            lim = math.sqrt(3.0 / fan_in)
            W.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            b.append(np.zeros(fan_out))
        return cls(list(layer_sizes), W, b, np.asarray(input_ranges, dtype=float),
                   tuple(map(float, target_range)), output_activation)

    def scale_inputs(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo, hi = self.input_ranges[:, 0], self.input_ranges[:, 1]
        return (x - lo) / (hi - lo)

    def _forward(self, z):
        pre, acts = [], [z]
        a = z
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            s = a @ W + b
            pre.append(s)
            a = s if (i == last and self.output_activation == "linear") else elu(s)
            acts.append(a)
        return pre, acts

    def predict_scaled(self, z):
        return self._forward(z)[1][-1][:, 0]

    def predict_target(self, x):
        lo, hi = self.target_range
        return lo + (hi - lo) * self.predict_scaled(self.scale_inputs(x))

    def n_params(self):
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def to_dict(self):
        return {
            "layer_sizes": list(self.layer_sizes),
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "normalization": {
                "inputs": {name: list(r) for name, r in zip(INPUT_NAMES, self.input_ranges.tolist())},
                "target": list(self.target_range),
            },
            "output_activation": self.output_activation,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d):
        norm = d["normalization"]
        ranges = np.array([norm["inputs"][name] for name in INPUT_NAMES], dtype=float)
        W = [np.array(w, dtype=float) for w in d["weights"]]
        b = [np.array(v, dtype=float) for v in d["biases"]]
        sizes = list(d["layer_sizes"])
        if [w.shape for w in W] != list(zip(sizes[:-1], sizes[1:])):
            raise ConfigError("weight shapes do not match layer_sizes")
        return cls(sizes, W, b, ranges, tuple(norm["target"]),
                   d.get("output_activation", "elu"), d.get("metadata", {}))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _loss_and_grads(model: SurrogateModel, z, y):
    pre, acts = model._forward(z)
    out = acts[-1][:, 0]
    r = out - y
    loss = float(np.mean(r * r))
    g = (2.0 / y.size) * r[:, None]
    gW, gb = [None] * len(model.weights), [None] * len(model.weights)
    last = len(model.weights) - 1
    for i in range(last, -1, -1):
        if not (i == last and model.output_activation == "linear"):
            g = g * elu_grad(pre[i])
        gW[i] = acts[i].T @ g
        gb[i] = g.sum(axis=0)
        if i:
            g = g @ model.weights[i].T
    return loss, gW, gb


def _scaled_mse(model, z, y):
    r = model.predict_scaled(z) - y
    return float(np.mean(r * r))


def train(dataset: Dataset, tc: TrainConfig | None = None, log=None) -> SurrogateModel:
    """Adam on the transformed-domain MSE with early stopping on the validation split.

    Returns the weights of the epoch with the lowest validation loss.
    """
    tc = tc or TrainConfig()
    tr, va = dataset.subset("train"), dataset.subset("val")
    if len(tr) == 0:
        raise ConfigError("dataset has no training samples")
    if len(va) == 0:
        va = tr
    t_lo, t_hi = float(tr.target.min()), float(tr.target.max())
    if t_hi - t_lo < 1e-12:
        t_hi = t_lo + 1.0
    model = SurrogateModel.init([4, *tc.hidden, 1], tc.seed, (t_lo, t_hi), tc.output_activation)
    span = t_hi - t_lo
    z_tr, y_tr = model.scale_inputs(tr.inputs), (tr.target - t_lo) / span
    z_va, y_va = model.scale_inputs(va.inputs), (va.target - t_lo) / span

    params = model.weights + model.biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    rng = rng_for(tc.seed, _STREAM_SHUFFLE)
    best = (math.inf, None, 0)
    history = []
    step = 0
    n = len(tr)
    for epoch in range(tc.max_epochs):
        order = rng.permutation(n)
        for start in range(0, n, tc.batch_size):
            idx = order[start:start + tc.batch_size]
            loss, gW, gb = _loss_and_grads(model, z_tr[idx], y_tr[idx])
            if not math.isfinite(loss):
                raise ConvergenceError(f"training diverged at epoch {epoch}")
            step += 1
            c1 = 1.0 - tc.adam_beta1**step
            c2 = 1.0 - tc.adam_beta2**step
            for p, g, mi, vi in zip(params, gW + gb, m, v):
                mi *= tc.adam_beta1
                mi += (1.0 - tc.adam_beta1) * g
                vi *= tc.adam_beta2
                vi += (1.0 - tc.adam_beta2) * g * g
                p -= tc.learning_rate * (mi / c1) / (np.sqrt(vi / c2) + tc.adam_eps)
        val = _scaled_mse(model, z_va, y_va) * span * span
        if not math.isfinite(val):
            raise ConvergenceError(f"validation loss non-finite at epoch {epoch}")
        history.append(val)
        if val < best[0]:
            best = (val, [p.copy() for p in params], epoch)
        if log is not None:
            log(epoch, val)
        if epoch - best[2] >= tc.patience:
            break
    k = len(model.weights)
    model.weights = best[1][:k]
    model.biases = best[1][k:]
    model.metadata = {
        "epochs_run": len(history),
        "best_epoch": best[2],
        "best_val_mse": best[0],
        "train_config": dataclasses.asdict(tc),
        "mse": {name: evaluate_mse(model, dataset.subset(name))
                for name in SPLITS if np.any(dataset.split == name)},
    }
    return model


def _check_ranges(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lo = np.array([r[0] for r in INPUT_RANGES])
    hi = np.array([r[1] for r in INPUT_RANGES])
    if np.any((x < lo - 1e-9) | (x > hi + 1e-9)):
        warnings.warn("surrogate queried outside its training ranges", RuntimeWarning,
                      stacklevel=3)
    return x


def predict_outage(model: SurrogateModel, inputs) -> np.ndarray:
    """Outage ``2 ** (-(2 ** y))`` for rows ``(snr_db, rate, k_max, beam_waist)``."""
    x = _check_ranges(inputs)
    return from_target(model.predict_target(x))


def evaluate_mse(model: SurrogateModel, data: Dataset) -> float:
    """Mean squared transformed-domain error over ``data``."""
    if len(data) == 0:
        raise ConfigError("evaluation set is empty")
    r = model.predict_target(data.inputs) - data.target
    return float(np.mean(r * r))
