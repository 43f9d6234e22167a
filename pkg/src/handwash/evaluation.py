"""Evaluation protocols: LOSO and personalized splits, F1, chance bounds, the
sensor-subset ablation, bootstrap confidence intervals and event-aligned curves.
"""

from __future__ import annotations

import io
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .features import (
    DEFAULT_OVERLAP_THRESHOLD,
    SUBSET_NAMES,
    FeatureMatrix,
    assemble_matrix,
    subset_channels,
)
from .forest import (
    DUMMY_STRATEGIES,
    ForestError,
    ForestParams,
    predict_dummy,
    train_dummy,
    train_forest,
)
from .recording import Recording

log = logging.getLogger(__name__)

TASKS = ("loso", "personalized")
TASK_LABELS = {"loso": "LOSO", "personalized": "Personalized"}


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class Fold:
    train: np.ndarray
    test: np.ndarray
    descriptor: str


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be >= 0")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(y_true, y_pred) -> ConfusionCounts:
    t = np.asarray(y_true).astype(bool)
    p = np.asarray(y_pred).astype(bool)
    if t.shape != p.shape:
        raise ValueError("label arrays differ in length")
    return ConfusionCounts(
        int(np.count_nonzero(t & p)),
        int(np.count_nonzero(~t & p)),
        int(np.count_nonzero(t & ~p)),
        int(np.count_nonzero(~t & ~p)),
    )


def f1_score(c: ConfusionCounts) -> tuple[float, float, float]:
    """(precision, recall, F1) of the wash class; 0/0 counts as 0."""
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


# ---------------------------------------------------------------------------
# splits


def loso_folds(M: FeatureMatrix) -> list[Fold]:
    people = sorted(set(M.participants.tolist()))
    if len(people) < 2:
        raise EvaluationError("leave-one-subject-out needs at least 2 participants")
    out = []
    for p in people:
        held = M.participants == p
        out.append(Fold(np.flatnonzero(~held), np.flatnonzero(held), p))
    return out


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def personalized_split(
    y,
    test_fraction: float = 1 / 3,
    rng: np.random.Generator | int | None = None,
    descriptor: str = "",
) -> Fold:
    """Stratified train/test split of one participant's windows.

    ``round(test_fraction * n)`` rows go to test. Each class contributes
    proportionally, keeping at least one row of a class on each side when
    the class has two or more rows.
    """
    y = np.asarray(y)
    n = y.size
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y != 1)
    if pos.size == 0:
        raise EvaluationError(f"no wash windows for participant {descriptor}".rstrip())
    rng = np.random.default_rng(rng)
    n_test = _half_up(test_fraction * n)

    def share(k: int) -> int:
        t = _half_up(test_fraction * k)
        return min(max(t, 1), k - 1) if k >= 2 else 0

    pos_test = share(pos.size)
    neg_test = min(max(n_test - pos_test, 0), neg.size)
    if neg.size >= 2:
        neg_test = min(max(neg_test, 1), neg.size - 1)
    pos_perm = rng.permutation(pos)
    neg_perm = rng.permutation(neg)
    test = np.sort(np.concatenate((pos_perm[:pos_test], neg_perm[:neg_test])))
    train = np.sort(np.concatenate((pos_perm[pos_test:], neg_perm[neg_test:])))
    return Fold(train, test, descriptor)


def participant_splits(
    M: FeatureMatrix, test_fraction: float, seeds: Sequence[int]
) -> list[Fold]:
    """Per-participant stratified splits mapped back to row indices of ``M``."""
    people = sorted(set(M.participants.tolist()))
    if len(seeds) != len(people):
        raise ValueError("need one seed per participant")
    out = []
    for p, seed in zip(people, seeds):
        rows = np.flatnonzero(M.participants == p)
        f = personalized_split(M.y[rows], test_fraction, seed, p)
        out.append(Fold(rows[f.train], rows[f.test], p))
    return out


# ---------------------------------------------------------------------------
# ablation


def derive_seed(*keys: int) -> int:
    """Stable 32-bit seed keyed by work-item identity."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass(frozen=True)
class AblationConfig:
    windows: tuple[float, ...] = (2.5, 5.0)
    subsets: tuple[str, ...] = SUBSET_NAMES
    tasks: tuple[str, ...] = TASKS
    repetitions: int = 5
    base_seed: int = 0
    forest: ForestParams = ForestParams()
    overlap_threshold: float = DEFAULT_OVERLAP_THRESHOLD
    test_fraction: float = 1 / 3
    n_jobs: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise EvaluationError("repetitions must be >= 1")
        for t in self.tasks:
            if t not in TASKS:
                raise EvaluationError(f"unknown task {t!r}")
        for s in self.subsets:
            subset_channels(s)
        for w in self.windows:
            if not w > 0:
                raise EvaluationError(f"window length must be > 0, got {w}")


@dataclass(frozen=True)
class FoldResult:
    task: str
    window_s: float
    subset: str  # dummy rows carry "dummy:<strategy>"
    repetition: int
    fold: str
    counts: ConfusionCounts

    @property
    def f1(self) -> float:
        return f1_score(self.counts)[2]


@dataclass
class ResultsTable:
    tasks: tuple[str, ...]
    windows: tuple[float, ...]
    subsets: tuple[str, ...]
    repetitions: int
    f1: dict[tuple[str, float, str], list[float]] = field(default_factory=dict)
    pooled_f1: dict[tuple[str, float, str], list[float]] = field(default_factory=dict)
    # per repetition: best dummy F1 over strategies and splits
    chance: dict[tuple[str, float], list[float]] = field(default_factory=dict)
    details: list[FoldResult] = field(default_factory=list)

    def cell(self, task: str, window_s: float, subset: str) -> float:
        values = self.f1[(task, float(window_s), subset)]
        return math.fsum(values) / len(values)

    def chance_cell(self, task: str, window_s: float) -> float:
        values = self.chance[(task, float(window_s))]
        return math.fsum(values) / len(values)

    def chance_max(self, task: str, window_s: float) -> float:
        """Best dummy F1 over every split of every repetition."""
        return max(self.chance[(task, float(window_s))])

    def subset_average(self, task: str, window_s: float) -> float:
        cells = [self.cell(task, window_s, s) for s in self.subsets]
        return math.fsum(cells) / len(cells)

    def to_csv(self, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        buf.write(",".join(("task", "window_s") + self.subsets + ("Chance",)) + "\n")
        for task in self.tasks:
            for w in self.windows:
                cells = [f"{self.cell(task, w, s):.6f}" for s in self.subsets]
                cells.append(f"{self.chance_cell(task, w):.6f}")
                buf.write(",".join([task, f"{w:g}"] + cells) + "\n")
        return buf.getvalue()

    def detail_csv(self, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        buf.write("task,window_s,subset,repetition,fold,tp,fp,fn,tn,precision,recall,f1\n")
        for r in self.details:
            p, rec, f1 = f1_score(r.counts)
            c = r.counts
            buf.write(
                f"{r.task},{r.window_s:g},{r.subset},{r.repetition},{r.fold},"
                f"{c.tp},{c.fp},{c.fn},{c.tn},{p:.6f},{rec:.6f},{f1:.6f}\n"
            )
        buf.write("\n# per-repetition cell values (macro over folds | pooled confusion)\n")
        buf.write("task,window_s,subset,repetition,f1_macro,f1_pooled\n")
        for key in sorted(self.f1):
            for r, (m, pooled) in enumerate(zip(self.f1[key], self.pooled_f1[key])):
                buf.write(f"{key[0]},{key[1]:g},{key[2]},{r},{m:.6f},{pooled:.6f}\n")
        buf.write("\n# per-repetition chance (best dummy over strategies and splits)\n")
        buf.write("task,window_s,repetition,chance\n")
        for (task, w), values in sorted(self.chance.items()):
            for r, v in enumerate(values):
                buf.write(f"{task},{w:g},{r},{v:.6f}\n")
        return buf.getvalue()

    def render(self) -> str:
        """Plain-text table laid out like a paper results table, plus subset averages."""
        head = ["sensors", "window"] + list(self.subsets) + ["Chance", "max Chance", "mean(subsets)"]
        rows = [head]
        for task in self.tasks:
            for w in self.windows:
                rows.append(
                    [TASK_LABELS[task], f"{w:g}s"]
                    + [f"{self.cell(task, w, s):.3f}" for s in self.subsets]
                    + [f"{self.chance_cell(task, w):.3f}", f"{self.chance_max(task, w):.3f}"]
                    + [f"{self.subset_average(task, w):.3f}"]
                )
        widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
        lines = ["  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "-" * len(lines[0]))
        return "\n".join(lines) + "\n"


def _evaluate_fold(
    task: str,
    window_s: float,
    rep: int,
    fold_index: int,
    fold: Fold,
    M: FeatureMatrix,
    subsets: Sequence[str],
    cfg: AblationConfig,
) -> list[FoldResult]:
    if task == "loso":
        leaked = set(M.participants[fold.train].tolist()) & set(M.participants[fold.test].tolist())
        if leaked:
            raise EvaluationError(f"participant leakage in fold {fold.descriptor}: {sorted(leaked)}")
    task_code = TASKS.index(task)
    y_train, y_test = M.y[fold.train], M.y[fold.test]
    params = cfg.forest.replace(seed=derive_seed(cfg.base_seed, rep, task_code, fold_index))
    out = []
    for subset in subsets:
        S = M.select(subset_channels(subset))
        try:
            forest = train_forest(S.X[fold.train], y_train, params)
        except ForestError as exc:
            raise EvaluationError(
                f"{task} window={window_s:g}s subset={subset} rep={rep} fold={fold.descriptor}: {exc}"
            ) from None
        pred = forest.predict(S.X[fold.test])
        out.append(FoldResult(task, window_s, subset, rep, fold.descriptor, confusion(y_test, pred)))
    for k, strategy in enumerate(DUMMY_STRATEGIES):
        seed = derive_seed(cfg.base_seed, rep, task_code, fold_index, 1000 + k)
        model = train_dummy(y_train, strategy, seed)
        pred = predict_dummy(model, fold.test.size)
        out.append(
            FoldResult(task, window_s, f"dummy:{strategy}", rep, fold.descriptor, confusion(y_test, pred))
        )
    return out


def run_ablation(
    recordings: Sequence[Recording] | dict[float, FeatureMatrix],
    cfg: AblationConfig | None = None,
) -> ResultsTable:
    """Train and score every (task, window, subset) cell over ``cfg.repetitions`` seeded repetitions.

    LOSO cells average per-fold F1, personalized cells average per-participant
    F1; both are then averaged over repetitions. Chance is the best dummy F1
    seen in any split of the (task, window) row, averaged over repetitions like
    every other cell. ``n_jobs`` never changes the
    output: every random stream is keyed by its work item.
    """
    cfg = cfg or AblationConfig()
    channels = tuple(dict.fromkeys(c for s in cfg.subsets for c in subset_channels(s)))
    if isinstance(recordings, dict):
        matrices = {float(w): recordings[w] for w in cfg.windows}
    else:
        if len({r.participant_id for r in recordings}) < 2:
            raise EvaluationError("ablation needs at least 2 participants")
        matrices = {
            float(w): assemble_matrix(recordings, w, channels, cfg.overlap_threshold)
            for w in cfg.windows
        }

    items = []
    for task in cfg.tasks:
        for w, M in matrices.items():
            for rep in range(cfg.repetitions):
                if task == "loso":
                    folds = loso_folds(M)
                else:
                    n_people = len(set(M.participants.tolist()))
                    seeds = [derive_seed(cfg.base_seed, rep, 7919, i) for i in range(n_people)]
                    folds = participant_splits(M, cfg.test_fraction, seeds)
                for i, fold in enumerate(folds):
                    items.append((task, w, rep, i, fold, M, cfg.subsets, cfg))

    if cfg.n_jobs == 1 or len(items) < 2:
        chunks = [_evaluate_fold(*it) for it in items]
    else:
        from joblib import Parallel, delayed

        n_jobs = cfg.n_jobs if cfg.n_jobs > 0 else -1
        # the tree kernels release the GIL, so threads avoid copying the matrices per item
        chunks = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(_evaluate_fold)(*it) for it in items)

    table = ResultsTable(tuple(cfg.tasks), tuple(float(w) for w in cfg.windows), tuple(cfg.subsets), cfg.repetitions)
    grouped: dict[tuple, list[FoldResult]] = {}
    for chunk in chunks:
        for r in chunk:
            table.details.append(r)
            grouped.setdefault((r.task, r.window_s, r.subset, r.repetition), []).append(r)
    for task in table.tasks:
        for w in table.windows:
            for s in table.subsets:
                macro, pooled = [], []
                for rep in range(cfg.repetitions):
                    rs = grouped[(task, w, s, rep)]
                    macro.append(math.fsum(r.f1 for r in rs) / len(rs))
                    total = ConfusionCounts()
                    for r in rs:
                        total = total + r.counts
                    pooled.append(f1_score(total)[2])
                table.f1[(task, w, s)] = macro
                table.pooled_f1[(task, w, s)] = pooled
            table.chance[(task, w)] = [
                max(r.f1 for strat in DUMMY_STRATEGIES for r in grouped[(task, w, f"dummy:{strat}", rep)])
                for rep in range(cfg.repetitions)
            ]
    return table


# ---------------------------------------------------------------------------
# bootstrap and event-aligned curves


def _bootstrap_means(values: np.ndarray, n_boot: int, rng: np.random.Generator) -> np.ndarray:
    """Means of ``n_boot`` resamples (with replacement) along axis 0; NaN cells are skipped."""
    n = values.shape[0]
    idx = rng.integers(0, n, size=(n_boot, n))
    sample = values[idx]
    if np.isnan(sample).any():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return np.nanmean(sample, axis=1)
    return sample.mean(axis=1)


def bootstrap_ci(
    values,
    n_boot: int = 1000,
    level: float = 0.95,
    rng: np.random.Generator | int | None = None,
) -> tuple[float, float]:
    """Percentile bootstrap interval of the mean, widened if needed to contain the sample mean."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("bootstrap of an empty sample")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    rng = np.random.default_rng(rng)
    means = _bootstrap_means(v, n_boot, rng)
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    m = v.mean()
    return float(min(lo, m)), float(max(hi, m))


@dataclass(frozen=True, eq=False)
class AlignedCurve:
    channel: str
    t_rel_s: np.ndarray
    mean: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_washes: np.ndarray  # washes contributing at each grid point
    offsets_s: np.ndarray  # wash durations, i.e. offset markers relative to onset

    def to_csv(self, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        buf.write("t_rel_s,mean,ci_low,ci_high\n")
        for row in zip(self.t_rel_s.tolist(), self.mean.tolist(), self.ci_low.tolist(), self.ci_high.tolist()):
            buf.write(",".join(f"{v:.6f}" if i else f"{v:g}" for i, v in enumerate(row)) + "\n")
        return buf.getvalue()


def _nearest(ts: np.ndarray, targets: np.ndarray) -> np.ndarray:
    i = np.clip(np.searchsorted(ts, targets), 1, ts.size - 1)
    left, right = ts[i - 1], ts[i]
    return np.where(targets - left <= right - targets, i - 1, i)


def aligned_segments(
    recordings: Iterable[Recording], channel: str, grid_s: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-wash onset-relative values on ``grid_s`` (NaN outside the channel's coverage) and wash durations."""
    rows, durations = [], []
    trimmed = 0
    for rec in recordings:
        series = rec.channels.get(channel)
        if series is None:
            raise EvaluationError(f"recording {rec.recording_id}: missing channel {channel}")
        if len(series) == 0:
            continue
        ts = series.timestamps.astype(np.float64)
        for wash in rec.washes:
            targets = wash.start_ms + grid_s * 1000.0
            idx = _nearest(ts, targets) if ts.size > 1 else np.zeros(targets.shape, dtype=np.intp)
            onset = series.values[_nearest(ts, np.array([float(wash.start_ms)]))[0]] if ts.size > 1 else series.values[0]
            vals = series.values[idx] - onset
            outside = (targets < ts[0]) | (targets > ts[-1])
            if outside.any():
                trimmed += 1
                vals = np.where(outside, np.nan, vals)
            rows.append(vals)
            durations.append(wash.duration_s)
    if trimmed:
        warnings.warn(f"{trimmed} wash segment(s) trimmed at recording edges", stacklevel=3)
    return np.array(rows).reshape(len(rows), grid_s.size), np.array(durations)


def event_aligned_curve(
    recordings: Sequence[Recording],
    channel: str,
    pre_s: float = 60.0,
    post_s: float = 120.0,
    n_boot: int = 1000,
    level: float = 0.95,
    rng: np.random.Generator | int | None = None,
    step_s: float = 1.0,
) -> AlignedCurve:
    """Mean onset-aligned response of ``channel`` over all washes with a percentile bootstrap band.

    Washes are resampled jointly across the grid, so each bootstrap replicate
    is a mean of whole wash curves.
    """
    if pre_s < 0 or post_s < 0 or step_s <= 0:
        raise ValueError("pre_s/post_s must be >= 0 and step_s > 0")
    n_steps = int(round((pre_s + post_s) / step_s))
    grid = -pre_s + step_s * np.arange(n_steps + 1)
    segs, durations = aligned_segments(recordings, channel, grid)
    if segs.shape[0] < 2:
        raise EvaluationError(f"need at least 2 washes for an aligned curve, found {segs.shape[0]}")
    counts = np.sum(~np.isnan(segs), axis=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(segs, axis=0)
    means = _bootstrap_means(segs, n_boot, np.random.default_rng(rng))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        lo, hi = np.nanquantile(means, [(1 - level) / 2, (1 + level) / 2], axis=0)
    lo = np.fmin(lo, mean)
    hi = np.fmax(hi, mean)
    return AlignedCurve(channel, grid, mean, lo, hi, counts, durations)


# ---------------------------------------------------------------------------
# dataset statistics


@dataclass(frozen=True)
class DurationStats:
    count: int
    mean_s: float
    median_s: float
    q1_s: float
    q3_s: float
    min_s: float
    max_s: float
    total_recording_s: float
    total_wash_s: float

    @property
    def null_fraction(self) -> float:
        return 1.0 - self.total_wash_s / self.total_recording_s if self.total_recording_s else 0.0

    def as_rows(self) -> list[tuple[str, str]]:
        return [
            ("count", str(self.count)),
            ("mean_s", f"{self.mean_s:.3f}"),
            ("median_s", f"{self.median_s:.3f}"),
            ("q1_s", f"{self.q1_s:.3f}"),
            ("q3_s", f"{self.q3_s:.3f}"),
            ("min_s", f"{self.min_s:.3f}"),
            ("max_s", f"{self.max_s:.3f}"),
            ("total_recording_s", f"{self.total_recording_s:.3f}"),
            ("total_wash_s", f"{self.total_wash_s:.3f}"),
            ("null_fraction", f"{self.null_fraction:.6f}"),
        ]


def duration_stats(recordings: Sequence[Recording]) -> DurationStats:
    d = np.array([w.duration_s for r in recordings for w in r.washes])
    if d.size == 0:
        raise EvaluationError("no hand_wash annotations in dataset")
    q1, med, q3 = np.quantile(d, [0.25, 0.5, 0.75])
    return DurationStats(
        int(d.size),
        float(d.mean()),
        float(med),
        float(q1),
        float(q3),
        float(d.min()),
        float(d.max()),
        sum(r.duration_ms for r in recordings) / 1000.0,
        float(d.sum()),
    )
