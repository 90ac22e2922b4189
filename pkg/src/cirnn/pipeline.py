"""Prognostics data pipeline: 26-column engine files in, window batches out.

Stages, in the order the orchestrator applies them:

  parse -> group by unit -> select features -> normalize -> smooth
        -> label remaining life -> window / split

Two normalization modes exist. "Contextual" (multi-regime data): the
op-setting rows are clustered into operating regimes, each selected
sensor is standardized with its regime's mean and range, and the
settings themselves are min-max scaled; targets stay in raw cycles.
"Plain" (single-condition data): sensors, settings and the target are
all min-max scaled with training statistics.

Every statistic is fitted on the training split only and reapplied
verbatim elsewhere; test values falling outside [0, 1] are kept as-is.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import Rng


class ParseError(ValueError):
    """Malformed input file."""


class DataError(ValueError):
    """Structurally invalid data (duplicate cycles, impossible k, ...)."""


N_SETTINGS = 3
N_SENSORS = 21
N_COLUMNS = 2 + N_SETTINGS + N_SENSORS

# Selected sensor / op-setting columns per engine subset (1-based ids).
SUBSET_FEATURES = {
    "FD001": ([2, 3, 4, 7, 8, 9, 11, 12, 13, 15, 17, 20, 21], [1, 2]),
    "FD002": ([1, 2, 8, 13, 14, 19], [1, 2, 3]),
    "FD003": ([2, 3, 4, 7, 8, 9, 11, 15, 17, 20, 21], [1, 2]),
    "FD004": ([2, 8, 14, 16], [1, 2, 3]),
}

# Operating-condition count per subset (regimes for contextual mode).
SUBSET_REGIMES = {"FD001": 1, "FD002": 6, "FD003": 1, "FD004": 6}


@dataclass
class RawRecord:
    unit_id: int
    cycle: int
    op_settings: np.ndarray  # (3,)
    sensors: np.ndarray      # (21,)


def parse_cmapss(path) -> list[RawRecord]:
    """Parse a whitespace-delimited 26-column file into sorted records.

    Records come back sorted by (unit, cycle); a duplicated cycle within
    a unit is a data error since no ordering can repair it.
    """
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != N_COLUMNS:
                raise ParseError(
                    f"{path}: line {lineno}: expected {N_COLUMNS} columns, got {len(parts)}"
                )
            try:
                values = [float(v) for v in parts]
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            records.append(RawRecord(
                unit_id=int(values[0]),
                cycle=int(values[1]),
                op_settings=np.array(values[2:2 + N_SETTINGS]),
                sensors=np.array(values[2 + N_SETTINGS:]),
            ))
    records.sort(key=lambda r: (r.unit_id, r.cycle))
    for prev, cur in zip(records, records[1:]):
        if cur.unit_id == prev.unit_id and cur.cycle <= prev.cycle:
            raise DataError(
                f"{path}: unit {cur.unit_id} has non-increasing cycle {cur.cycle}"
            )
    return records


@dataclass
class UnitData:
    """One engine unit's history after feature selection."""

    unit_id: int
    cycles: np.ndarray  # (L,) int
    x: np.ndarray       # (L, n_x) primary features
    z: np.ndarray       # (L, n_z) context features
    rul: np.ndarray | None = None  # (L,) targets once labeled

    @property
    def length(self) -> int:
        return len(self.cycles)


def group_units(records: list[RawRecord]) -> dict[int, list[RawRecord]]:
    grouped: dict[int, list[RawRecord]] = {}
    for rec in records:
        grouped.setdefault(rec.unit_id, []).append(rec)
    return grouped


def feature_selection(subset_id: str | None, sensors=None, settings=None):
    """Resolve (sensor ids, setting ids); custom lists pass through as given."""
    if sensors is not None and settings is not None:
        return list(sensors), list(settings)
    if subset_id is None or subset_id not in SUBSET_FEATURES:
        known = ", ".join(SUBSET_FEATURES)
        raise DataError(
            f"unknown subset {subset_id!r} and no custom feature lists; known subsets: {known}"
        )
    sens, sets = SUBSET_FEATURES[subset_id]
    return list(sens), list(sets)


def select_features(records: list[RawRecord], subset_id: str | None = None,
                    sensors=None, settings=None) -> list[UnitData]:
    """Extract per-unit primary (x) and context (z) feature matrices."""
    sensor_ids, setting_ids = feature_selection(subset_id, sensors, settings)
    s_idx = [i - 1 for i in sensor_ids]
    c_idx = [i - 1 for i in setting_ids]
    units = []
    for uid, recs in sorted(group_units(records).items()):
        cycles = np.array([r.cycle for r in recs], dtype=np.int64)
        sensor_mat = np.stack([r.sensors for r in recs])
        setting_mat = np.stack([r.op_settings for r in recs])
        units.append(UnitData(
            unit_id=uid,
            cycles=cycles,
            x=sensor_mat[:, s_idx],
            z=setting_mat[:, c_idx],
        ))
    return units


# ---------------------------------------------------------------------------
# Clustering and normalization
# ---------------------------------------------------------------------------


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 100):
    """Lloyd's algorithm with k-means++ seeding; deterministic under seed.

    Returns (centroids (k, d), assignments (n,)). Stops when assignments
    stabilize or after max_iter sweeps. An emptied cluster is re-seeded
    with the point farthest from its current centroid.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise DataError("kmeans expects a 2-d point array")
    n = len(points)
    distinct = np.unique(points, axis=0)
    if k > len(distinct):
        raise DataError(f"k={k} exceeds the {len(distinct)} distinct points")
    rng = Rng(seed) if isinstance(seed, int) else seed

    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.randint(n)]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centroids[j] = points[rng.randint(n)]
            continue
        target = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), target, side="right"))
        idx = min(idx, n - 1)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[j]) ** 2, axis=1))

    assignments = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        dists = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_assign = dists.argmin(axis=1)
        if np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
        for j in range(k):
            mask = assignments == j
            if mask.any():
                centroids[j] = points[mask].mean(axis=0)
            else:
                worst = int(np.argmax(dists[np.arange(n), assignments]))
                centroids[j] = points[worst]
                assignments[worst] = j
    return centroids, assignments


def cluster_purity(assignments, labels) -> float:
    """Fraction of points covered by each cluster's majority label."""
    assignments = np.asarray(assignments)
    labels = np.asarray(labels)
    covered = 0
    for c in np.unique(assignments):
        _, counts = np.unique(labels[assignments == c], return_counts=True)
        covered += counts.max()
    return covered / len(labels)


@dataclass
class RegimeStats:
    """Per-regime sensor statistics keyed by op-setting centroid."""

    centroids: np.ndarray  # (k, n_z)
    means: np.ndarray      # (k, n_x)
    ranges: np.ndarray     # (k, n_x); 0 marks a constant feature

    @property
    def k(self) -> int:
        return len(self.centroids)

    def assign(self, z_rows: np.ndarray) -> np.ndarray:
        d = np.sum((z_rows[:, None, :] - self.centroids[None, :, :]) ** 2, axis=2)
        return d.argmin(axis=1)


def fit_regime_stats(units: list[UnitData], k: int, seed: int = 0) -> RegimeStats:
    """Cluster training op-settings and collect per-cluster sensor stats."""
    z_all = np.concatenate([u.z for u in units])
    x_all = np.concatenate([u.x for u in units])
    centroids, assign = kmeans(z_all, k, seed)
    n_x = x_all.shape[1]
    means = np.zeros((k, n_x))
    ranges = np.zeros((k, n_x))
    for c in range(k):
        rows = x_all[assign == c]
        means[c] = rows.mean(axis=0)
        ranges[c] = rows.max(axis=0) - rows.min(axis=0)
    if np.any(ranges == 0):
        warnings.warn("constant sensor within a regime; such values normalize to 0")
    return RegimeStats(centroids, means, ranges)


def contextual_normalize(x: np.ndarray, z: np.ndarray, stats: RegimeStats) -> np.ndarray:
    """Standardize sensors with the stats of each row's nearest regime."""
    assign = stats.assign(z)
    means = stats.means[assign]
    ranges = stats.ranges[assign]
    out = np.zeros_like(x, dtype=np.float64)
    ok = ranges != 0
    out[ok] = (x[ok] - means[ok]) / ranges[ok]
    return out


def contextual_denormalize(xn: np.ndarray, z: np.ndarray, stats: RegimeStats) -> np.ndarray:
    assign = stats.assign(z)
    return xn * stats.ranges[assign] + stats.means[assign]


@dataclass
class MinMaxStats:
    mins: np.ndarray
    maxs: np.ndarray

    @property
    def spans(self) -> np.ndarray:
        return self.maxs - self.mins


def fit_minmax(rows: np.ndarray) -> MinMaxStats:
    rows = np.asarray(rows, dtype=np.float64)
    stats = MinMaxStats(rows.min(axis=0), rows.max(axis=0))
    if np.any(stats.spans == 0):
        warnings.warn("constant feature under min-max; such values normalize to 0")
    return stats


def minmax_normalize(rows: np.ndarray, stats: MinMaxStats) -> np.ndarray:
    """(v - min) / (max - min) with the FITTED stats; out-of-range values
    simply land outside [0, 1] and are not clipped."""
    rows = np.asarray(rows, dtype=np.float64)
    out = np.zeros_like(rows)
    ok = stats.spans != 0
    span = np.where(ok, stats.spans, 1.0)
    out = (rows - stats.mins) / span
    return np.where(ok, out, 0.0)


def minmax_denormalize(rows: np.ndarray, stats: MinMaxStats) -> np.ndarray:
    return np.asarray(rows) * stats.spans + stats.mins


def smooth(series: np.ndarray, window: int = 3) -> np.ndarray:
    """Trailing moving average; the first window-1 points average over
    whatever prefix exists (no future samples, no cross-unit mixing)."""
    series = np.asarray(series, dtype=np.float64)
    squeeze = series.ndim == 1
    mat = series[:, None] if squeeze else series
    csum = np.cumsum(mat, axis=0)
    out = np.empty_like(mat)
    n = len(mat)
    w = min(window, n)
    out[:w] = csum[:w] / np.arange(1, w + 1)[:, None]
    if n > w:
        out[w:] = (csum[w:] - csum[:-w]) / window
    return out[:, 0] if squeeze else out


# ---------------------------------------------------------------------------
# Labeling and windowing
# ---------------------------------------------------------------------------


def label_rul(units: list[UnitData], cap: int = 125) -> list[UnitData]:
    """Piecewise-linear targets for run-to-failure units: the final cycle
    has 0 life left, earlier cycles count down from the cap."""
    out = []
    for u in units:
        last = int(u.cycles[-1])
        rul = np.minimum(float(cap), (last - u.cycles).astype(np.float64))
        out.append(replace(u, rul=rul))
    return out


def label_rul_test(units: list[UnitData], truths, cap: int = 125) -> list[UnitData]:
    """Targets for truncated test units: the provided truth value is the
    life remaining at each unit's last observed cycle."""
    truths = list(truths)
    if len(truths) != len(units):
        raise DataError(f"{len(truths)} truth values for {len(units)} test units")
    out = []
    for u, truth in zip(units, truths):
        last = int(u.cycles[-1])
        rul = np.minimum(float(cap), float(truth) + (last - u.cycles).astype(np.float64))
        out.append(replace(u, rul=rul))
    return out


@dataclass
class SequenceBatch:
    """Fixed-length windows ready for the cells: stacked arrays with one
    window per leading index; no window ever spans two units."""

    xs: np.ndarray          # (n, T, n_x)
    zs: np.ndarray | None   # (n, T, n_z)
    y: np.ndarray           # (n,)
    unit_ids: np.ndarray    # (n,)
    end_cycles: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.y)


def _stack_windows(parts) -> SequenceBatch:
    if not parts:
        return SequenceBatch(
            xs=np.zeros((0, 0, 0)), zs=np.zeros((0, 0, 0)),
            y=np.zeros(0), unit_ids=np.zeros(0, dtype=np.int64),
            end_cycles=np.zeros(0, dtype=np.int64),
        )
    xs, zs, y, uids, ends = zip(*parts)
    return SequenceBatch(
        xs=np.stack(xs), zs=np.stack(zs), y=np.asarray(y, dtype=np.float64),
        unit_ids=np.asarray(uids, dtype=np.int64),
        end_cycles=np.asarray(ends, dtype=np.int64),
    )


def window_and_split(units: list[UnitData], seq_len: int, k_val: int):
    """Carve each unit into training and validation windows.

    The final k_val cycles of every unit become validation data as
    consecutive non-overlapping windows; all earlier cycles yield
    stride-1 training windows. k_val must be a multiple of seq_len.
    Units too short for both parts are skipped with a warning.
    """
    if seq_len <= 0:
        raise DataError("seq_len must be positive")
    if k_val < 0 or k_val % seq_len != 0:
        raise DataError(f"k_val ({k_val}) must be a non-negative multiple of seq_len ({seq_len})")
    train_parts, val_parts = [], []
    for u in units:
        if u.rul is None:
            raise DataError(f"unit {u.unit_id} has no targets; label before windowing")
        L = u.length
        if L < seq_len + k_val:
            warnings.warn(f"unit {u.unit_id} is too short ({L} < {seq_len + k_val}); skipped")
            continue
        train_len = L - k_val
        for end in range(seq_len, train_len + 1):
            sl = slice(end - seq_len, end)
            train_parts.append((u.x[sl], u.z[sl], u.rul[end - 1],
                                u.unit_id, int(u.cycles[end - 1])))
        for j in range(k_val // seq_len, 0, -1):
            end = L - (j - 1) * seq_len
            sl = slice(end - seq_len, end)
            val_parts.append((u.x[sl], u.z[sl], u.rul[end - 1],
                              u.unit_id, int(u.cycles[end - 1])))
    return _stack_windows(train_parts), _stack_windows(val_parts)


def make_eval_windows(units: list[UnitData], seq_len: int, mode: str = "last") -> SequenceBatch:
    """Evaluation windows: "last" takes each unit's final seq_len cycles
    (one prediction per unit), "all" every stride-1 window. Units shorter
    than seq_len are front-padded by repeating their first cycle."""
    if mode not in ("last", "all"):
        raise DataError(f"unknown eval window mode {mode!r}")
    parts = []
    for u in units:
        if u.rul is None:
            raise DataError(f"unit {u.unit_id} has no targets; label before windowing")
        x, z, rul, cycles = u.x, u.z, u.rul, u.cycles
        if u.length < seq_len:
            pad = seq_len - u.length
            warnings.warn(f"unit {u.unit_id} shorter than window ({u.length} < {seq_len}); padded")
            x = np.concatenate([np.repeat(x[:1], pad, axis=0), x])
            z = np.concatenate([np.repeat(z[:1], pad, axis=0), z])
            rul = np.concatenate([np.repeat(rul[:1], pad), rul])
            cycles = np.concatenate([np.repeat(cycles[:1], pad), cycles])
        L = len(x)
        ends = range(seq_len, L + 1) if mode == "all" else [L]
        for end in ends:
            sl = slice(end - seq_len, end)
            parts.append((x[sl], z[sl], rul[end - 1], u.unit_id, int(cycles[end - 1])))
    return _stack_windows(parts)


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


@dataclass
class PipelineOptions:
    seq_len: int = 15
    k_val: int = 15
    contextual: bool = True
    n_regimes: int = 6
    smooth_window: int = 3
    rul_cap: int = 125
    normalize_target: bool = False
    seed: int = 0


@dataclass
class PreprocessedData:
    train: SequenceBatch
    val: SequenceBatch
    test: SequenceBatch | None
    regime_stats: RegimeStats | None
    context_minmax: MinMaxStats
    primary_minmax: MinMaxStats | None
    target_minmax: MinMaxStats | None
    options: PipelineOptions
    sensors: list[int] = field(default_factory=list)
    settings: list[int] = field(default_factory=list)


def preprocess(train_units: list[UnitData], opts: PipelineOptions,
               test_units: list[UnitData] | None = None, test_truths=None,
               eval_mode: str = "last") -> PreprocessedData:
    """Fit statistics on the training units and build all window batches."""
    regime_stats = None
    primary_mm = None

    if opts.contextual:
        regime_stats = fit_regime_stats(train_units, opts.n_regimes, opts.seed)
        def norm_x(u):
            return contextual_normalize(u.x, u.z, regime_stats)
    else:
        primary_mm = fit_minmax(np.concatenate([u.x for u in train_units]))
        def norm_x(u):
            return minmax_normalize(u.x, primary_mm)

    context_mm = fit_minmax(np.concatenate([u.z for u in train_units]))

    def transform(units):
        out = []
        for u in units:
            x = smooth(norm_x(u), opts.smooth_window)
            z = minmax_normalize(u.z, context_mm)
            out.append(replace(u, x=x, z=z))
        return out

    labeled_train = label_rul(transform(train_units), opts.rul_cap)

    target_mm = None
    if opts.normalize_target:
        target_mm = fit_minmax(np.concatenate([u.rul for u in labeled_train])[:, None])
        labeled_train = [
            replace(u, rul=minmax_normalize(u.rul[:, None], target_mm)[:, 0])
            for u in labeled_train
        ]

    train_batch, val_batch = window_and_split(labeled_train, opts.seq_len, opts.k_val)

    test_batch = None
    if test_units is not None:
        if test_truths is None:
            raise DataError("test units given without a truth file")
        labeled_test = label_rul_test(transform(test_units), test_truths, opts.rul_cap)
        if target_mm is not None:
            labeled_test = [
                replace(u, rul=minmax_normalize(u.rul[:, None], target_mm)[:, 0])
                for u in labeled_test
            ]
        test_batch = make_eval_windows(labeled_test, opts.seq_len, eval_mode)

    return PreprocessedData(
        train=train_batch, val=val_batch, test=test_batch,
        regime_stats=regime_stats, context_minmax=context_mm,
        primary_minmax=primary_mm, target_minmax=target_mm, options=opts,
    )
