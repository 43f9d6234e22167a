"""``handwash`` command line: synth, stats, validate, export-annotations, ablate, curves."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import (
    ConfigError,
    as_bool,
    as_float_list,
    as_str_list,
    config_hash,
    load_config,
)
from .evaluation import (
    TASKS,
    AblationConfig,
    duration_stats,
    event_aligned_curve,
    run_ablation,
)
from .features import SUBSET_NAMES
from .forest import ForestParams
from .recording import (
    ATMOSPHERIC_CHANNELS,
    DEFAULT_MAX_WASH_S,
    DEFAULT_RSSI_FLOOR,
    Recording,
    export_annotations,
    load_dataset,
    propose_annotations,
    validate_recording,
    write_recording,
)
from .synthgen import ResponseParams, Scenario, generate_recording

log = logging.getLogger("handwash")

PAPER_WINDOWS = (2.5, 5.0)
# keys that must never influence outputs or their provenance hash
_NON_SEMANTIC = ("threads", "out")


@dataclass(frozen=True)
class RunConfig:
    """Resolved ``key = value`` settings for one command (file values overridden by flags)."""

    command: str
    values: dict[str, str]

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.values.get(key, default)

    def get_int(self, key: str, default: int) -> int:
        v = self.values.get(key)
        try:
            return default if v is None else int(v)
        except ValueError:
            raise ConfigError(f"{key}: not an integer: {v!r}") from None

    def get_float(self, key: str, default: float) -> float:
        v = self.values.get(key)
        try:
            return default if v is None else float(v)
        except ValueError:
            raise ConfigError(f"{key}: not a number: {v!r}") from None

    @property
    def seed(self) -> int:
        return self.get_int("seed", 0)

    @property
    def threads(self) -> int:
        return self.get_int("threads", 1)

    @property
    def out(self) -> Path:
        return Path(self.get("out", "out"))

    def header(self) -> str:
        semantic = {k: v for k, v in self.values.items() if k not in _NON_SEMANTIC}
        semantic["command"] = self.command
        return f"handwash {__version__} config={config_hash(semantic)} seed={self.seed}"


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _data_dir(cfg: RunConfig) -> Path:
    data = cfg.get("data")
    if not data:
        raise ConfigError("no dataset given (use --data or 'data = ...')")
    return Path(data)


# ---------------------------------------------------------------------------
# commands


def cmd_synth(cfg: RunConfig) -> int:
    values = dict(cfg.values)
    values.setdefault("scenario.seed", str(cfg.seed))
    scn = Scenario.from_config(values)
    params = ResponseParams.from_config(values)
    out = cfg.out
    header = cfg.header()
    out.mkdir(parents=True, exist_ok=True)
    total = 0
    for i in range(scn.n_participants):
        rec = generate_recording(scn, i, params, cfg.seed)
        write_recording(rec, out / rec.recording_id, header)
        total += len(rec.washes)
        print(f"{rec.participant_id}: {len(rec.washes)} washes")
    full = {**scn.to_config(), **params.to_config()}
    _write(out / "scenario.cfg", f"# {header}\n" + "".join(f"{k} = {full[k]}\n" for k in sorted(full)))
    print(f"total: {total} washes in {scn.n_participants} recordings -> {out}")
    return 0


def _issue_rows(recordings) -> list[str]:
    rows = []
    for rec in recordings:
        for issue in validate_recording(rec):
            t = "" if issue.t_ms is None else str(issue.t_ms)
            msg = issue.message.replace(",", ";")
            rows.append(f"{rec.recording_id},{issue.kind},{issue.channel},{t},{msg}")
    return rows


def cmd_validate(cfg: RunConfig) -> int:
    recordings = load_dataset(_data_dir(cfg))
    rows = _issue_rows(recordings)
    header = cfg.header()
    _write(cfg.out / "issues.csv", f"# {header}\nrecording,kind,channel,t_ms,message\n" + "".join(r + "\n" for r in rows))
    for r in rows:
        print(r)
    print(f"{len(rows)} issue(s) in {len(recordings)} recording(s)")
    return 0


def cmd_stats(cfg: RunConfig) -> int:
    recordings = load_dataset(_data_dir(cfg))
    header = cfg.header()
    rows = _issue_rows(recordings)
    _write(cfg.out / "issues.csv", f"# {header}\nrecording,kind,channel,t_ms,message\n" + "".join(r + "\n" for r in rows))
    for r in rows:
        print(f"issue: {r}")
    if not any(rec.washes for rec in recordings):
        print(f"{len(recordings)} recording(s), no hand_wash annotations; duration statistics skipped")
        return 0
    stats = duration_stats(recordings)
    text = "".join(f"{k},{v}\n" for k, v in stats.as_rows())
    _write(cfg.out / "stats.csv", f"# {header}\nstatistic,value\n" + text)
    report = f"recordings: {len(recordings)}\n" + "".join(f"{k:>18}: {v}\n" for k, v in stats.as_rows())
    _write(cfg.out / "stats.txt", f"# {header}\n" + report)
    print(report, end="")
    return 0


def cmd_export_annotations(cfg: RunConfig) -> int:
    recordings = load_dataset(_data_dir(cfg))
    propose = as_bool(cfg.get("annotations.propose", "false"))
    floor = cfg.get_float("annotations.rssi_floor", DEFAULT_RSSI_FLOOR)
    max_wash = cfg.get_float("annotations.max_wash_s", DEFAULT_MAX_WASH_S)
    for rec in recordings:
        if propose:
            extra = tuple(propose_annotations(rec, floor, max_wash))
            rec = Recording(rec.meta, rec.channels, rec.annotations + extra, rec.duration_ms)
        path = _write(cfg.out / f"{rec.recording_id}.annotations.tsv", export_annotations(rec))
        print(f"{rec.recording_id}: {len(rec.annotations)} annotation(s) -> {path}")
    return 0


def ablation_config(cfg: RunConfig) -> AblationConfig:
    windows = tuple(as_float_list(cfg.get("ablation.windows", "2.5,5")))
    for w in windows:
        if w not in PAPER_WINDOWS:
            warnings.warn(f"window length {w:g} s differs from the 2.5/5 s protocol", stacklevel=2)
    forest = ForestParams.from_config(cfg.values)
    return AblationConfig(
        windows=windows,
        subsets=tuple(as_str_list(cfg.get("ablation.subsets", ",".join(SUBSET_NAMES)))),
        tasks=tuple(as_str_list(cfg.get("ablation.tasks", ",".join(TASKS)))),
        repetitions=cfg.get_int("ablation.repetitions", 5),
        base_seed=cfg.seed,
        forest=forest,
        overlap_threshold=cfg.get_float("ablation.overlap_threshold", 0.5),
        test_fraction=cfg.get_float("ablation.test_fraction", 1 / 3),
        n_jobs=cfg.threads,
    )


def cmd_ablate(cfg: RunConfig) -> int:
    acfg = ablation_config(cfg)
    recordings = load_dataset(_data_dir(cfg))
    table = run_ablation(recordings, acfg)
    header = cfg.header()
    out = cfg.out
    _write(out / "results.csv", table.to_csv(header))
    _write(out / "results_detail.csv", table.detail_csv(header))
    rendered = table.render()
    _write(out / "results.txt", f"# {header}\n" + rendered)
    print(rendered, end="")
    return 0


def cmd_curves(cfg: RunConfig) -> int:
    recordings = load_dataset(_data_dir(cfg))
    channels = as_str_list(cfg.get("curves.channels", ",".join(ATMOSPHERIC_CHANNELS)))
    pre = cfg.get_float("curves.pre_s", 60.0)
    post = cfg.get_float("curves.post_s", 120.0)
    n_boot = cfg.get_int("curves.n_boot", 1000)
    level = cfg.get_float("curves.level", 0.95)
    header = cfg.header()
    curve = None
    for k, ch in enumerate(channels):
        curve = event_aligned_curve(recordings, ch, pre, post, n_boot, level, rng=[cfg.seed, k])
        path = _write(cfg.out / f"curve_{ch}.csv", curve.to_csv(header))
        peak = curve.t_rel_s[int(curve.mean.argmax())]
        print(f"{ch}: {curve.n_washes.max()} washes, peak at {peak:g} s -> {path}")
    markers = [f"# {header}\n", "marker,t_rel_s\n", "onset,0\n"]
    markers += [f"offset,{d:.3f}\n" for d in curve.offsets_s]
    _write(cfg.out / "curve_markers.csv", "".join(markers))
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "stats": cmd_stats,
    "validate": cmd_validate,
    "export-annotations": cmd_export_annotations,
    "ablate": cmd_ablate,
    "curves": cmd_curves,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="key = value config file")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="base seed (default 0)")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default ./out)")
    g.add_argument(
        "--threads", type=int, default=argparse.SUPPRESS, help="worker count, 0 = auto; never changes outputs"
    )
    g.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="handwash", description=__doc__, parents=[common])
    parser.add_argument("--version", action="version", version=f"handwash {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic recording bundles")
    p.add_argument("--participants", dest="scenario.n_participants", default=argparse.SUPPRESS)
    p.add_argument("--washes", dest="scenario.washes_per_participant", default=argparse.SUPPRESS)
    p.add_argument("--session-s", dest="scenario.session_s", default=argparse.SUPPRESS)
    p.add_argument("--imu-ambiguity", dest="scenario.imu_ambiguity", default=argparse.SUPPRESS)
    p.add_argument("--scenario", type=Path, default=argparse.SUPPRESS, help="scenario/response config file")

    for name, text in (
        ("stats", "wash duration and class-imbalance statistics"),
        ("validate", "list data-quality issues"),
        ("export-annotations", "write tab-separated annotation documents"),
        ("ablate", "sensor-subset ablation (LOSO and personalized)"),
        ("curves", "event-aligned atmospheric response curves"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--data", dest="data", default=argparse.SUPPRESS, help="dataset directory")
        if name == "export-annotations":
            p.add_argument("--propose", dest="annotations.propose", action="store_const", const="true",
                           default=argparse.SUPPRESS, help="add cue-based proposals")
            p.add_argument("--rssi-floor", dest="annotations.rssi_floor", default=argparse.SUPPRESS)
            p.add_argument("--max-wash-s", dest="annotations.max_wash_s", default=argparse.SUPPRESS)
        if name == "ablate":
            p.add_argument("--windows", dest="ablation.windows", default=argparse.SUPPRESS)
            p.add_argument("--subsets", dest="ablation.subsets", default=argparse.SUPPRESS)
            p.add_argument("--tasks", dest="ablation.tasks", default=argparse.SUPPRESS)
            p.add_argument("--repetitions", dest="ablation.repetitions", default=argparse.SUPPRESS)
            p.add_argument("--trees", dest="forest.n_trees", default=argparse.SUPPRESS)
        if name == "curves":
            p.add_argument("--pre-s", dest="curves.pre_s", default=argparse.SUPPRESS)
            p.add_argument("--post-s", dest="curves.post_s", default=argparse.SUPPRESS)
            p.add_argument("--n-boot", dest="curves.n_boot", default=argparse.SUPPRESS)
            p.add_argument("--channels", dest="curves.channels", default=argparse.SUPPRESS)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    ns = vars(args)
    values: dict[str, str] = {}
    if "config" in ns:
        values.update(load_config(ns["config"]))
    if "scenario" in ns:
        values.update(load_config(ns["scenario"]))
    for key, value in ns.items():
        if key in ("command", "config", "scenario", "verbose"):
            continue
        values[key] = str(value)
    return RunConfig(args.command, values)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        if cfg.get_int("ablation.repetitions", 5) < 1:
            raise ConfigError("repetitions must be >= 1")
        return COMMANDS[args.command](cfg)
    except (ValueError, OSError) as exc:
        print(f"handwash {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
