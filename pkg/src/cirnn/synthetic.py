"""Synthetic multi-regime degradation data with a known optimum.

Each unit carries a latent "life remaining" counter that decays linearly
to zero at failure. Sensor channels observe that latent through mixing
weights THAT DEPEND ON THE OPERATING REGIME, so the sensor-to-target map
is regime-conditional by construction: a model that can condition its
input weights on context can invert it, a fixed-weight model cannot
without spending capacity inferring the regime. Op-setting columns
encode the regime centroid plus jitter, mirroring the 26-column engine
file layout so the pipeline consumes these files unchanged.

Because the generative process is known, :func:`oracle_best_rmse` can
compute the least-squares floor a perfect model would reach.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import Rng
from .pipeline import N_COLUMNS, N_SENSORS, N_SETTINGS


@dataclass
class SynthSpec:
    n_units: int = 30
    min_cycles: int = 60
    max_cycles: int = 100
    n_x: int = 4
    n_regimes: int = 3
    noise_std: float = 0.0
    rul_cap: int = 60
    seed: int = 0
    setting_jitter: float = 0.02
    n_test_units: int = 10
    mixing: np.ndarray | None = None  # (n_regimes, n_x)

    def __post_init__(self):
        if self.n_regimes < 1:
            raise ValueError("n_regimes must be >= 1")
        if not (1 <= self.n_x <= N_SENSORS):
            raise ValueError(f"n_x must be in 1..{N_SENSORS}")
        if self.min_cycles > self.max_cycles:
            raise ValueError("min_cycles > max_cycles")


def regime_centroids(n_regimes: int) -> np.ndarray:
    """Deterministic, well-separated centroids in op-setting space."""
    base = np.arange(1, n_regimes + 1, dtype=np.float64)
    return np.stack([10.0 * base, 0.1 * base, 100.0 - 10.0 * base], axis=1)


def default_mixing(spec: SynthSpec, rng: Rng) -> np.ndarray:
    """Regime-conditional target weights with alternating signs, so the
    pooled (regime-blind) sensor-target relation largely cancels."""
    mix = np.empty((spec.n_regimes, spec.n_x))
    for r in range(spec.n_regimes):
        for j in range(spec.n_x):
            sign = 1.0 if (r + j) % 2 == 0 else -1.0
            mix[r, j] = sign * (0.7 + 0.6 * rng.random())
    return mix


@dataclass
class SynthUnit:
    unit_id: int
    total_life: int          # cycle at which the latent hits zero
    cycles: np.ndarray       # observed cycles, 1..L_obs
    sensors: np.ndarray      # (L_obs, n_x)
    settings: np.ndarray     # (L_obs, 3)
    regimes: np.ndarray      # (L_obs,) true regime per cycle


@dataclass
class SynthData:
    spec: SynthSpec
    mixing: np.ndarray
    centroids: np.ndarray
    train_units: list[SynthUnit] = field(default_factory=list)
    test_units: list[SynthUnit] = field(default_factory=list)
    test_truths: list[int] = field(default_factory=list)


def _make_unit(uid: int, total_life: int, observed: int, spec: SynthSpec,
               mixing: np.ndarray, centroids: np.ndarray, rng: Rng) -> SynthUnit:
    cycles = np.arange(1, observed + 1, dtype=np.int64)
    regimes = np.array([rng.randint(spec.n_regimes) for _ in range(observed)], dtype=np.int64)
    latent = (total_life - cycles).astype(np.float64)
    sensors = mixing[regimes] * latent[:, None]
    if spec.noise_std > 0:
        sensors = sensors + rng.normal_array(0.0, spec.noise_std, sensors.shape)
    settings = centroids[regimes] + rng.normal_array(0.0, spec.setting_jitter, (observed, 3))
    return SynthUnit(uid, total_life, cycles, sensors, settings, regimes)


def generate(spec: SynthSpec) -> SynthData:
    """Deterministic under spec.seed; training units run to failure,
    test units are truncated and their held-out life recorded."""
    rng = Rng(spec.seed)
    centroids = regime_centroids(spec.n_regimes)
    mixing = spec.mixing if spec.mixing is not None else default_mixing(spec, rng)
    data = SynthData(spec=spec, mixing=np.asarray(mixing, dtype=np.float64),
                     centroids=centroids)

    span = spec.max_cycles - spec.min_cycles + 1
    for uid in range(1, spec.n_units + 1):
        life = spec.min_cycles + rng.randint(span)
        data.train_units.append(
            _make_unit(uid, life, life, spec, data.mixing, centroids, rng))
    for uid in range(1, spec.n_test_units + 1):
        life = spec.min_cycles + rng.randint(span)
        max_held = max(1, min(life - spec.min_cycles // 2, spec.rul_cap))
        held_out = 1 + rng.randint(max_held)
        data.test_units.append(
            _make_unit(uid, life, life - held_out, spec, data.mixing, centroids, rng))
        data.test_truths.append(held_out)
    return data


def unit_lines(unit: SynthUnit) -> list[str]:
    """Render one unit as 26-column rows; unused sensor columns are 0."""
    lines = []
    n_x = unit.sensors.shape[1]
    for i, cycle in enumerate(unit.cycles):
        cols = [str(unit.unit_id), str(int(cycle))]
        cols += [f"{v:.6f}" for v in unit.settings[i]]
        sens = np.zeros(N_SENSORS)
        sens[:n_x] = unit.sensors[i]
        cols += [f"{v:.6f}" for v in sens]
        assert len(cols) == N_COLUMNS
        lines.append(" ".join(cols))
    return lines


def write_files(data: SynthData, out_dir, tag: str = "SYNTH") -> dict[str, str]:
    """Write train/test/truth files in the engine-data layout."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "train": os.path.join(out_dir, f"train_{tag}.txt"),
        "test": os.path.join(out_dir, f"test_{tag}.txt"),
        "truth": os.path.join(out_dir, f"RUL_{tag}.txt"),
    }
    with open(paths["train"], "w") as fh:
        for u in data.train_units:
            fh.write("\n".join(unit_lines(u)) + "\n")
    with open(paths["test"], "w") as fh:
        for u in data.test_units:
            fh.write("\n".join(unit_lines(u)) + "\n")
    with open(paths["truth"], "w") as fh:
        for truth in data.test_truths:
            fh.write(f"{truth}\n")
    return paths


def _window_prediction(spec: SynthSpec, mixing: np.ndarray,
                       sensors: np.ndarray, regimes: np.ndarray) -> float:
    """Least-squares estimate of the latent at the window's last cycle.

    Within a window the latent at offset t from the end is alpha + t, so
    every sensor reading is a linear observation of alpha with known
    coefficient mixing[regime, channel]; solve the scalar LS problem and
    clamp into the representable target range.
    """
    T = len(sensors)
    offsets = (T - 1) - np.arange(T, dtype=np.float64)  # cycles before window end
    coef = mixing[regimes]                              # (T, n_x)
    resid = sensors - coef * offsets[:, None]
    denom = float(np.sum(coef * coef))
    if denom == 0.0:
        alpha = 0.0
    else:
        alpha = float(np.sum(coef * resid) / denom)
    return float(np.clip(alpha, 0.0, spec.rul_cap))


def oracle_best_rmse(data: SynthData, seq_len: int, mode: str = "all",
                     split: str = "test") -> float:
    """RMSE floor from the generative parameters themselves.

    A genie that knows the mixing weights and true regimes predicts each
    window's capped remaining life by least squares; trained models can
    approach but not systematically beat this number. Noiseless data
    gives exactly 0.
    """
    units = data.test_units if split == "test" else data.train_units
    spec = data.spec
    preds, truths = [], []
    for u in units:
        L = len(u.cycles)
        if L < seq_len:
            continue
        ends = range(seq_len, L + 1) if mode == "all" else [L]
        for end in ends:
            sl = slice(end - seq_len, end)
            preds.append(_window_prediction(spec, data.mixing, u.sensors[sl], u.regimes[sl]))
            true_rul = u.total_life - int(u.cycles[end - 1])
            truths.append(min(float(spec.rul_cap), float(true_rul)))
    preds = np.asarray(preds)
    truths = np.asarray(truths)
    d = preds - truths
    return float(np.sqrt(np.mean(d * d)))
