"""L2 loss, reverse-mode BPTT gradients, optimizers, and the train loop.

Gradients are computed by reverse accumulation through the step trace,
which is mathematically identical to summing per-step sensitivities
forward in time (that slower formulation lives in ``sensitivity`` as a
verification path). The loss is many-to-one: only the final window step
is scored.

The training loop runs on batch-vectorized forward/backward passes (the
batch is carried as trailing columns); per-sample gradients from
:func:`backward` agree with the batch mean, which the test suite pins.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import eval_basis_cols
from .cells import CiRnnParams, GruParams, StepTrace, forward_sequence
from .numerics import Rng, ShapeError, kron_cols, sigmoid, tanh


class ConfigError(ValueError):
    """Invalid training configuration."""


class TrainingError(RuntimeError):
    """Training aborted (non-finite gradient or loss, empty data)."""


# Optimizer constants (not specified by the modeling work; standard defaults).
RMSPROP_RHO = 0.9
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
EPS_HAT = 1e-8

OPTIMIZER_KINDS = ("sgd", "adam", "rmsprop")

# Tuning grid; values outside it are flagged but permitted.
HIDDEN_GRID = (10, 15, 20, 25, 30)
SEQ_LEN_GRID = (10, 15, 20)
BATCH_GRID = (64, 128, 256)
LR_RANGE = (1e-5, 1e-3)


def loss(y_hat, y) -> float:
    """Half squared error: 0.5 * sum((y - y_hat)^2)."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ShapeError(f"loss: prediction shape {y_hat.shape} vs target {y.shape}")
    d = y - y_hat
    return float(0.5 * np.dot(d, d))


@dataclass
class Gradients:
    """Gradient of the final-step loss for every parameter group.

    Field names follow the context cell; for the baseline cell the three
    input-weight slots (dAs, dAh, dAr) carry dWs, dWh, dWr.
    """

    dAs: np.ndarray
    dAh: np.ndarray
    dAr: np.ndarray
    dUs: np.ndarray
    dUh: np.ndarray
    dUr: np.ndarray
    dV: np.ndarray
    db_y: np.ndarray

    def groups(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("As", self.dAs), ("Ah", self.dAh), ("Ar", self.dAr),
            ("Us", self.dUs), ("Uh", self.dUh), ("Ur", self.dUr),
            ("V", self.dV), ("b_y", self.db_y),
        ]

    def scale(self, factor: float) -> "Gradients":
        return Gradients(*[g * factor for _, g in self.groups()])

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for _, g in self.groups())))


def param_groups(p) -> list[tuple[str, np.ndarray]]:
    """(name, array) pairs in the fixed group order used everywhere."""
    if isinstance(p, CiRnnParams):
        ins = [("As", p.As), ("Ah", p.Ah), ("Ar", p.Ar)]
    elif isinstance(p, GruParams):
        ins = [("Ws", p.Ws), ("Wh", p.Wh), ("Wr", p.Wr)]
    else:
        raise TypeError(f"unsupported parameter type {type(p)!r}")
    return ins + [("Us", p.Us), ("Uh", p.Uh), ("Ur", p.Ur), ("V", p.V), ("b_y", p.b_y)]


def _backward_trace(p, trace: StepTrace, y) -> Gradients:
    """Reverse accumulation through a single-sequence trace."""
    y = np.asarray(y, dtype=np.float64)
    T = len(trace)
    if T == 0:
        raise ShapeError("backward: empty trace")
    inputs = trace.gate_inputs()
    n_in = inputs[0].shape[0]
    n_h = p.n_h

    h_T = trace.hs[-1]
    y_hat = p.V @ h_T + p.b_y
    if y.shape != y_hat.shape:
        raise ShapeError(f"backward: target shape {y.shape} vs output {y_hat.shape}")
    delta_y = y_hat - y  # identity output activation, f'(u) = 1

    dV = np.outer(delta_y, h_T)
    db_y = delta_y.copy()
    dWs = np.zeros((n_h, n_in))
    dWh = np.zeros((n_h, n_in))
    dWr = np.zeros((n_h, n_in))
    dUs = np.zeros((n_h, n_h))
    dUh = np.zeros((n_h, n_h))
    dUr = np.zeros((n_h, n_h))

    dh = p.V.T @ delta_y
    for t in range(T - 1, -1, -1):
        r, s, ht = trace.rs[t], trace.ss[t], trace.h_tildes[t]
        h_prev = trace.h_before(t)
        phi = inputs[t]

        ds_pre = dh * (h_prev - ht) * s * (1.0 - s)
        dht_pre = dh * (1.0 - s) * (1.0 - ht * ht)
        drh = p.Uh.T @ dht_pre  # gradient w.r.t. r * h_prev
        dr_pre = drh * h_prev * r * (1.0 - r)

        dWs += np.outer(ds_pre, phi)
        dWh += np.outer(dht_pre, phi)
        dWr += np.outer(dr_pre, phi)
        dUs += np.outer(ds_pre, h_prev)
        dUh += np.outer(dht_pre, r * h_prev)
        dUr += np.outer(dr_pre, h_prev)

        dh = dh * s + p.Us.T @ ds_pre + drh * r + p.Ur.T @ dr_pre

    return Gradients(dWs, dWh, dWr, dUs, dUh, dUr, dV, db_y)


def backward(p: CiRnnParams, trace: StepTrace, y) -> Gradients:
    """BPTT gradients of the final-step loss for the context cell."""
    if not isinstance(p, CiRnnParams):
        raise TypeError("backward expects context-cell parameters; see backward_gru")
    if trace.phis is None:
        raise ShapeError("trace was not produced by a context-cell forward pass")
    if trace.phis[0].shape[0] != p.As.shape[1]:
        raise ShapeError(
            f"trace input width {trace.phis[0].shape[0]} vs As columns {p.As.shape[1]}"
        )
    return _backward_trace(p, trace, y)


def backward_gru(p: GruParams, trace: StepTrace, y) -> Gradients:
    """BPTT gradients for the baseline cell (input-weight slots hold dW*)."""
    if not isinstance(p, GruParams):
        raise TypeError("backward_gru expects baseline parameters")
    if trace.phis is not None:
        raise ShapeError("trace was produced by a context-cell forward pass")
    if trace.xs[0].shape[0] != p.n_x:
        raise ShapeError(f"trace input width {trace.xs[0].shape[0]} vs Ws columns {p.n_x}")
    return _backward_trace(p, trace, y)


def _sequence_loss(p, xs, zs, y) -> float:
    y_hat, _ = forward_sequence(p, xs, zs)
    return loss(y_hat, np.asarray(y, dtype=np.float64))


def fd_gradient(p, xs, zs, y, eps: float = 1e-5) -> Gradients:
    """Central finite differences over every scalar parameter.

    Independent oracle for :func:`backward` / :func:`backward_gru`;
    mutates each parameter entry by +-eps in turn and restores it.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    grads = []
    for _, arr in param_groups(p):
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = _sequence_loss(p, xs, zs, y)
            flat[i] = orig - eps
            lm = _sequence_loss(p, xs, zs, y)
            flat[i] = orig
            gflat[i] = (lp - lm) / (2.0 * eps)
        grads.append(g)
    return Gradients(*grads)


def max_mixed_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """Worst entrywise disagreement: relative where either entry exceeds
    the floor in magnitude, absolute below it."""
    diff = np.abs(a - b)
    scale = np.maximum(np.abs(a), np.abs(b))
    err = np.where(scale > floor, diff / np.maximum(scale, floor), diff)
    return float(err.max()) if err.size else 0.0


def gradient_errors(p, xs, zs, y, eps: float = 1e-5) -> dict[str, float]:
    """Per-group max mixed error between BPTT and central differences."""
    if isinstance(p, CiRnnParams):
        _, trace = forward_sequence(p, xs, zs)
        analytic = backward(p, trace, y)
    else:
        _, trace = forward_sequence(p, xs)
        analytic = backward_gru(p, trace, y)
    numeric = fd_gradient(p, xs, zs, y, eps)
    names = [name for name, _ in param_groups(p)]
    return {
        name: max_mixed_error(ga, gn)
        for name, (_, ga), (_, gn) in zip(names, analytic.groups(), numeric.groups())
    }


def gradient_check_instance(cell: str, rng: Rng, t: int | None = None,
                            eps: float = 1e-5) -> dict[str, float]:
    """Draw one random small instance and return its per-group errors.

    Dimensions are sampled from the desk-scale grid n_x 2..6, n_z 1..3,
    n_h 3..8, T 1..8 (T can be pinned via ``t``).
    """
    from .basis import build_spec
    from .cells import init_cirnn, init_gru

    n_x = 2 + rng.randint(5)
    n_z = 1 + rng.randint(3)
    n_h = 3 + rng.randint(6)
    T = t if t is not None else 1 + rng.randint(8)
    xs = [rng.uniform_array(-1.0, 1.0, (n_x,)) for _ in range(T)]
    y = rng.uniform_array(-1.0, 1.0, (1,))
    if cell == "cirnn":
        basis = build_spec("polynomial", 2, n_z)
        p = init_cirnn(n_x, n_h, 1, basis, rng)
        zs = [rng.uniform_array(-1.0, 1.0, (n_z,)) for _ in range(T)]
    elif cell == "gru":
        p = init_gru(n_x, n_h, 1, rng)
        zs = None
    else:
        raise ConfigError(f"unknown cell {cell!r}; allowed: gru, cirnn")
    return gradient_errors(p, xs, zs, y, eps)


@dataclass
class OptimizerState:
    """Per-parameter moment accumulators for sgd / adam / rmsprop."""

    kind: str
    learning_rate: float
    step: int = 0
    m: dict = field(default_factory=dict)  # adam first moments
    v: dict = field(default_factory=dict)  # adam/rmsprop second moments

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown optimizer {self.kind!r}; allowed: {OPTIMIZER_KINDS}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


def optimizer_step(state: OptimizerState, p, g: Gradients):
    """Apply one update in place; returns (p, state) for chaining.

    sgd:     theta -= lr * g
    rmsprop: v = rho v + (1-rho) g^2;  theta -= lr * g / sqrt(v + eps)
    adam:    bias-corrected first/second moments, eps outside the sqrt
    """
    params = param_groups(p)
    grads = g.groups()
    for (name, _), (_, garr) in zip(params, grads):
        if not np.all(np.isfinite(garr)):
            raise TrainingError(f"non-finite gradient for parameter {name}")
    state.step += 1
    lr = state.learning_rate
    for (name, arr), (_, garr) in zip(params, grads):
        if state.kind == "sgd":
            arr -= lr * garr
        elif state.kind == "rmsprop":
            v = state.v.setdefault(name, np.zeros_like(arr))
            v *= RMSPROP_RHO
            v += (1.0 - RMSPROP_RHO) * garr * garr
            arr -= lr * garr / np.sqrt(v + EPS_HAT)
        else:  # adam
            m = state.m.setdefault(name, np.zeros_like(arr))
            v = state.v.setdefault(name, np.zeros_like(arr))
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * garr
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * garr * garr
            m_hat = m / (1.0 - ADAM_BETA1 ** state.step)
            v_hat = v / (1.0 - ADAM_BETA2 ** state.step)
            arr -= lr * m_hat / (np.sqrt(v_hat) + EPS_HAT)
    return p, state


@dataclass
class TrainConfig:
    hidden_units: int
    sequence_length: int
    batch_size: int
    learning_rate: float
    optimizer: str = "adam"
    epochs: int = 200
    seed: int = 0
    clip_norm: float | None = 5.0
    patience: int = 10


def validate_config(cfg: TrainConfig) -> None:
    """Hard-reject impossible values; warn on values outside the grid."""
    if cfg.hidden_units <= 0 or cfg.sequence_length <= 0 or cfg.batch_size <= 0:
        raise ConfigError("hidden_units, sequence_length and batch_size must be positive")
    if cfg.learning_rate <= 0:
        raise ConfigError("learning_rate must be positive")
    if cfg.optimizer not in OPTIMIZER_KINDS:
        raise ConfigError(f"unknown optimizer {cfg.optimizer!r}; allowed: {OPTIMIZER_KINDS}")
    if cfg.epochs <= 0:
        raise ConfigError("epochs must be positive")
    if cfg.clip_norm is not None and cfg.clip_norm <= 0:
        raise ConfigError("clip_norm must be positive when set")
    if cfg.hidden_units not in HIDDEN_GRID:
        warnings.warn(f"hidden_units {cfg.hidden_units} outside tuning grid {HIDDEN_GRID}")
    if cfg.sequence_length not in SEQ_LEN_GRID:
        warnings.warn(f"sequence_length {cfg.sequence_length} outside tuning grid {SEQ_LEN_GRID}")
    if cfg.batch_size not in BATCH_GRID:
        warnings.warn(f"batch_size {cfg.batch_size} outside tuning grid {BATCH_GRID}")
    if not (LR_RANGE[0] <= cfg.learning_rate <= LR_RANGE[1]):
        warnings.warn(f"learning_rate {cfg.learning_rate} outside tuning range {LR_RANGE}")


# ---------------------------------------------------------------------------
# Batch-vectorized engine. Arrays carry the batch as trailing columns:
# states are (n_h, B), per-step inputs (n_in, B).
# ---------------------------------------------------------------------------


def _batch_gate_inputs(p, X: np.ndarray, Z: np.ndarray | None) -> np.ndarray:
    """Per-step gate inputs for a window batch: (T, n_in, B).

    X is (B, T, n_x); for the context cell Z is (B, T, n_z) and the gate
    input is the column-wise Kronecker expansion.
    """
    Xc = np.ascontiguousarray(np.transpose(X, (1, 2, 0)))  # (T, n_x, B)
    if isinstance(p, GruParams):
        return Xc
    Zc = np.transpose(Z, (1, 2, 0))  # (T, n_z, B)
    T = Xc.shape[0]
    return np.stack(
        [kron_cols(Xc[t], eval_basis_cols(p.basis, Zc[t])) for t in range(T)]
    )


def _input_mats(p):
    if isinstance(p, CiRnnParams):
        return p.As, p.Ah, p.Ar
    return p.Ws, p.Wh, p.Wr


def forward_batch(p, X: np.ndarray, Z: np.ndarray | None):
    """Vectorized forward over a batch of windows; returns (Y_hat, cache).

    Y_hat is (n_y, B); the cache mirrors StepTrace with a batch axis.
    """
    Ms, Mh, Mr = _input_mats(p)
    PHI = _batch_gate_inputs(p, X, Z)
    T, _, B = PHI.shape
    H = np.zeros((p.n_h, B))
    hs, rs, ss, hts = [], [], [], []
    for t in range(T):
        phi = PHI[t]
        r = sigmoid(Mr @ phi + p.Ur @ H)
        s = sigmoid(Ms @ phi + p.Us @ H)
        ht = tanh(Mh @ phi + p.Uh @ (r * H))
        H = s * H + (1.0 - s) * ht
        rs.append(r)
        ss.append(s)
        hts.append(ht)
        hs.append(H)
    y_hat = p.V @ H + p.b_y[:, None]
    return y_hat, {"PHI": PHI, "rs": rs, "ss": ss, "hts": hts, "hs": hs}


def backward_batch(p, cache, y_hat: np.ndarray, Y: np.ndarray) -> tuple[Gradients, float]:
    """Mean gradient and mean loss over the batch (final-step L2)."""
    PHI, rs, ss, hts, hs = cache["PHI"], cache["rs"], cache["ss"], cache["hts"], cache["hs"]
    T = PHI.shape[0]
    B = PHI.shape[2]
    n_in = PHI.shape[1]
    n_h = p.n_h

    delta_y = y_hat - Y  # (n_y, B)
    mean_loss = float(0.5 * np.sum(delta_y * delta_y) / B)

    dV = delta_y @ hs[-1].T
    db_y = delta_y.sum(axis=1)
    dWs = np.zeros((n_h, n_in))
    dWh = np.zeros((n_h, n_in))
    dWr = np.zeros((n_h, n_in))
    dUs = np.zeros((n_h, n_h))
    dUh = np.zeros((n_h, n_h))
    dUr = np.zeros((n_h, n_h))

    dh = p.V.T @ delta_y  # (n_h, B)
    zero = np.zeros((n_h, B))
    for t in range(T - 1, -1, -1):
        r, s, ht = rs[t], ss[t], hts[t]
        h_prev = hs[t - 1] if t > 0 else zero
        phi = PHI[t]

        ds_pre = dh * (h_prev - ht) * s * (1.0 - s)
        dht_pre = dh * (1.0 - s) * (1.0 - ht * ht)
        drh = p.Uh.T @ dht_pre
        dr_pre = drh * h_prev * r * (1.0 - r)

        dWs += ds_pre @ phi.T
        dWh += dht_pre @ phi.T
        dWr += dr_pre @ phi.T
        dUs += ds_pre @ h_prev.T
        dUh += dht_pre @ (r * h_prev).T
        dUr += dr_pre @ h_prev.T

        dh = dh * s + p.Us.T @ ds_pre + drh * r + p.Ur.T @ dr_pre

    grads = Gradients(dWs, dWh, dWr, dUs, dUh, dUr, dV, db_y).scale(1.0 / B)
    return grads, mean_loss


def predict_batch(p, X: np.ndarray, Z: np.ndarray | None) -> np.ndarray:
    """Final-step predictions for every window, flattened to (B,)."""
    y_hat, _ = forward_batch(p, X, Z)
    return y_hat[0] if y_hat.shape[0] == 1 else y_hat.T


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_rmse: float
    val_score: float


def write_loss_log(path, rows: list[EpochLog]) -> None:
    """Append-only CSV: epoch, train_loss, val_rmse, val_score."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_rmse", "val_score"])
        for r in rows:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_rmse), repr(r.val_score)])


def _clone_params(p):
    arrays = {name: arr.copy() for name, arr in param_groups(p)}
    if isinstance(p, CiRnnParams):
        return CiRnnParams(
            As=arrays["As"], Ah=arrays["Ah"], Ar=arrays["Ar"],
            Us=arrays["Us"], Uh=arrays["Uh"], Ur=arrays["Ur"],
            V=arrays["V"], b_y=arrays["b_y"], basis=p.basis,
        )
    return GruParams(
        Ws=arrays["Ws"], Wh=arrays["Wh"], Wr=arrays["Wr"],
        Us=arrays["Us"], Uh=arrays["Uh"], Ur=arrays["Ur"],
        V=arrays["V"], b_y=arrays["b_y"],
    )


def train(kind: str, train_data, val_data, cfg: TrainConfig, *,
          basis=None, n_y: int = 1, init_params=None, score_fn=None):
    """Mini-batch training with early stopping on validation RMSE.

    ``kind`` is "gru" or "cirnn". ``train_data`` / ``val_data`` carry
    (xs, zs, y) window arrays (the pipeline's SequenceBatch shape); ``zs``
    is ignored by the baseline cell. Parameters are initialized from
    cfg.seed unless ``init_params`` overrides them. Returns (best params,
    list of EpochLog). Deterministic under cfg.seed: initialization and
    shuffle order are the only randomness.
    """
    from .cells import init_cirnn, init_gru
    from .metrics import rmse, score as score_default

    validate_config(cfg)
    if score_fn is None:
        score_fn = score_default

    X, Z, Y = train_data.xs, train_data.zs, train_data.y
    n = X.shape[0]
    if n == 0:
        raise TrainingError("empty training set")
    if X.shape[1] != cfg.sequence_length:
        raise ConfigError(
            f"data windows have length {X.shape[1]}, config expects {cfg.sequence_length}"
        )

    rng = Rng(cfg.seed)
    if kind == "cirnn":
        if Z is None:
            raise TrainingError("context cell requires context windows")
        if basis is None and init_params is None:
            raise ConfigError("cirnn training requires a basis spec or initial parameters")
        p = init_params if init_params is not None else init_cirnn(
            X.shape[2], cfg.hidden_units, n_y, basis, rng)
    elif kind == "gru":
        p = init_params if init_params is not None else init_gru(
            X.shape[2], cfg.hidden_units, n_y, rng)
    else:
        raise ConfigError(f"unknown model kind {kind!r}; allowed: gru, cirnn")
    is_ctx = isinstance(p, CiRnnParams)

    Yrow = np.asarray(Y, dtype=np.float64).reshape(1, n)
    state = OptimizerState(cfg.optimizer, cfg.learning_rate)

    best = _clone_params(p)
    best_rmse = np.inf
    since_best = 0
    logs: list[EpochLog] = []

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            Xb = X[idx]
            Zb = Z[idx] if is_ctx else None
            Yb = Yrow[:, idx]
            y_hat, cache = forward_batch(p, Xb, Zb)
            grads, mean_loss = backward_batch(p, cache, y_hat, Yb)
            if not np.isfinite(mean_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            if cfg.clip_norm is not None:
                norm = grads.global_norm()
                if norm > cfg.clip_norm:
                    grads = grads.scale(cfg.clip_norm / norm)
            optimizer_step(state, p, grads)
            total += mean_loss * len(idx)
        train_loss = total / n

        preds = predict_batch(p, val_data.xs, val_data.zs if is_ctx else None)
        val_rmse = rmse(preds, val_data.y)
        val_score = score_fn(preds, val_data.y)
        logs.append(EpochLog(epoch, train_loss, val_rmse, val_score))

        if val_rmse < best_rmse:
            best_rmse = val_rmse
            best = _clone_params(p)
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    return best, logs
