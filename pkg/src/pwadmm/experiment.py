"""Experiment specs, figure presets, batch execution and summaries.

A spec is an INI file::

    [experiment]
    name = demo
    seeds = 0..2                 ; or a comma list
    thresholds = 1e-1, 1e-2      ; optional, default 1e-1..1e-4

    [defaults]                   ; RunConfig keys shared by every run
    n_agents = 50
    density = 0.3

    [run.pw]                     ; one section per run family
    algorithm = pw_admm
    rho = 1
    tau = 3
    n_walks = 1, 10, 30          ; comma lists expand into a grid

Every run with a given seed sees the same network and data, since both are
drawn from seed-derived streams that no algorithm parameter touches.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import itertools
import logging
import math
import re
import statistics
import typing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from pwadmm.simulator import RunConfig, build_instance, run
from pwadmm.traces import MetricsTrace, fmt, write_atomic

log = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (1e-1, 1e-2, 1e-3, 1e-4)
TRACE_DIR = "traces"
SUMMARY_FILE = "summary.csv"


class SpecError(ValueError):
    """Invalid experiment spec; ``lineno`` points into the spec text when known."""

    def __init__(self, message: str, lineno: int | None = None, source: str = "<spec>"):
        self.lineno = lineno
        self.source = source
        where = f"{source}:{lineno}" if lineno else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class PlannedRun:
    run_id: str
    group: str
    label: str
    config: RunConfig


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    runs: tuple[PlannedRun, ...]
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS


_FIELD_TYPES = typing.get_type_hints(RunConfig)
_EXPERIMENT_KEYS = {"name", "seeds", "thresholds"}


def _convert(key: str, raw: str):
    hint = _FIELD_TYPES[key]
    args = typing.get_args(hint)
    optional = type(None) in args
    base = next((a for a in args if a is not type(None)), hint)
    value = raw.strip()
    if optional and value.lower() in ("", "none"):
        return None
    if base is bool:
        if value.lower() in ("true", "yes", "on", "1"):
            return True
        if value.lower() in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    if base is int:
        f = float(value)
        if not f.is_integer():
            raise ValueError(f"expected an integer, got {value!r}")
        return int(f)
    if base is float:
        return float(value)
    return value


def _split_list(raw: str) -> list[str]:
    return [p.strip() for p in raw.split(",") if p.strip()]


def _parse_seeds(raw: str) -> list[int]:
    m = re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", raw)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if hi < lo:
            raise ValueError(f"empty seed range {raw!r}")
        return list(range(lo, hi + 1))
    return [int(v) for v in _split_list(raw)]


class _Locator:
    """Maps (section, key) back to line numbers in the spec text."""

    def __init__(self, text: str):
        self.sections: dict[str, int] = {}
        self.keys: dict[tuple[str, str], int] = {}
        current = None
        for n, line in enumerate(text.splitlines(), start=1):
            s = line.strip()
            if not s or s[0] in "#;":
                continue
            m = re.fullmatch(r"\[([^\]]+)\]", s)
            if m:
                current = m.group(1).strip()
                self.sections.setdefault(current, n)
                continue
            if current is not None:
                key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
                self.keys.setdefault((current, key), n)

    def line(self, section: str, key: str | None = None) -> int | None:
        if key is not None and (section, key) in self.keys:
            return self.keys[(section, key)]
        return self.sections.get(section)


def _fmt_value(v) -> str:
    return fmt(v) if isinstance(v, float) else str(v)


def parse_spec(text: str, source: str = "<spec>") -> ExperimentSpec:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise SpecError("could not parse line", lineno, source) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise SpecError(exc.message.split(": ", 1)[-1], exc.lineno, source) from None
    except configparser.MissingSectionHeaderError as exc:
        raise SpecError("expected a [section] header first", exc.lineno, source) from None
    loc = _Locator(text)

    def fail(msg, section, key=None):
        raise SpecError(msg, loc.line(section, key), source)

    if not cp.has_section("experiment"):
        raise SpecError("missing [experiment] section", None, source)
    for section in cp.sections():
        if section not in ("experiment", "defaults") and not section.startswith("run."):
            fail(f"unknown section [{section}]", section)

    exp = cp["experiment"]
    for key in exp:
        if key not in _EXPERIMENT_KEYS:
            fail(f"unknown key {key!r} in [experiment]", "experiment", key)
    name = exp.get("name", "experiment").strip()
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", name):
        fail(f"experiment name {name!r} may only use letters, digits, '_', '.', '-'", "experiment", "name")
    try:
        seeds = _parse_seeds(exp.get("seeds", "0"))
    except ValueError as exc:
        fail(f"bad seeds: {exc}", "experiment", "seeds")
    if not seeds or len(set(seeds)) != len(seeds):
        fail("seeds must be a non-empty list of distinct integers", "experiment", "seeds")
    try:
        thresholds = tuple(float(v) for v in _split_list(exp.get("thresholds", "")))
    except ValueError as exc:
        fail(f"bad thresholds: {exc}", "experiment", "thresholds")
    thresholds = thresholds or DEFAULT_THRESHOLDS

    def read_section(section) -> dict[str, list]:
        out = {}
        for key, raw in cp[section].items():
            if key not in _FIELD_TYPES or key == "seed":
                fail(f"unknown key {key!r} in [{section}]", section, key)
            try:
                values = [_convert(key, v) for v in (_split_list(raw) or [raw])]
            except ValueError as exc:
                fail(f"bad value for {key!r}: {exc}", section, key)
            out[key] = values
        return out

    defaults = read_section("defaults") if cp.has_section("defaults") else {}
    for key, values in defaults.items():
        if len(values) != 1:
            fail(f"[defaults] key {key!r} takes a single value; put grids in [run.*]", "defaults", key)

    run_sections = [s for s in cp.sections() if s.startswith("run.")]
    if not run_sections:
        raise SpecError("no [run.<label>] sections", None, source)

    planned: list[PlannedRun] = []
    for section in run_sections:
        label = section[len("run."):]
        if not re.fullmatch(r"[A-Za-z0-9_.-]+", label):
            fail(f"run label {label!r} may only use letters, digits, '_', '.', '-'", section)
        values = {k: v[0] for k, v in defaults.items()}
        grid = read_section(section)
        if "algorithm" not in grid and "algorithm" not in values:
            fail("missing 'algorithm'", section)
        varied = [k for k, v in grid.items() if len(v) > 1]
        for combo in itertools.product(*(grid[k] for k in grid)):
            params = dict(values)
            params.update(zip(grid, combo))
            group = label + "".join(f"_{k}{_fmt_value(params[k])}" for k in varied)
            for seed in seeds:
                try:
                    cfg = RunConfig(**params, seed=seed)
                except (TypeError, ValueError) as exc:
                    fail(f"invalid run configuration: {exc}", section)
                planned.append(PlannedRun(f"{group}_seed{seed}", group, label, cfg))
    ids = [p.run_id for p in planned]
    dupes = {i for i in ids if ids.count(i) > 1}
    if dupes:
        raise SpecError(f"duplicate run ids: {sorted(dupes)}", None, source)
    return ExperimentSpec(name, tuple(planned), thresholds)


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    return parse_spec(path.read_text(), source=str(path))


def _execute(planned: PlannedRun, trace_dir: str) -> str:
    net, problem = build_instance(planned.config)
    trace = run(planned.config, net, problem)
    trace.metadata.update(run_id=planned.run_id, group=planned.group, label=planned.label)
    trace.write(Path(trace_dir) / f"{planned.run_id}.csv")
    return planned.run_id


def run_experiment(spec: ExperimentSpec, out_dir, jobs: int = 1) -> Path:
    """Run every planned run, write one trace per run and the summary; returns the summary path."""
    out_dir = Path(out_dir)
    trace_dir = out_dir / TRACE_DIR
    trace_dir.mkdir(parents=True, exist_ok=True)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_execute, spec.runs, itertools.repeat(str(trace_dir))))
    else:
        for planned in spec.runs:
            _execute(planned, str(trace_dir))
    return summarize(out_dir, spec.thresholds, only={p.run_id for p in spec.runs})


def _threshold_label(thr: float) -> str:
    return f"{thr:.0e}"


def crossings(trace: MetricsTrace, thresholds) -> tuple[list, list]:
    costs, times = [], []
    for thr in thresholds:
        hit = trace.first_crossing(thr)
        costs.append(hit[2] if hit else None)
        times.append(hit[1] if hit else None)
    return costs, times


def _median(values) -> float | None:
    vals = [math.inf if v is None else v for v in values]
    m = statistics.median(vals)
    return None if math.isinf(m) else m


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return str(int(v)) if v.is_integer() and abs(v) < 2**53 else fmt(v)
    return str(v)


def summarize(directory, thresholds=DEFAULT_THRESHOLDS, only=None) -> Path:
    """Scan traces under ``directory`` (or its ``traces/``) and write ``summary.csv``.

    One row per trace with the first communication count and simulated time
    at which accuracy reaches each threshold (blank if never), followed by a
    ``median`` row per run group. Unreached seeds count as infinite in the
    median, so a blank median means at least half the seeds never got there.
    """
    directory = Path(directory)
    trace_dir = directory / TRACE_DIR if (directory / TRACE_DIR).is_dir() else directory
    rows = []
    for path in sorted(trace_dir.glob("*.csv")):
        if path.name == SUMMARY_FILE or (only is not None and path.stem not in only):
            continue
        try:
            trace = MetricsTrace.read(path)
            if not trace.records:
                raise ValueError("no records")
        except (ValueError, OSError) as exc:
            log.warning("skipping malformed trace %s: %s", path, exc)
            continue
        md = trace.metadata
        costs, times = crossings(trace, thresholds)
        rows.append({
            "group": md.get("group", path.stem),
            "algorithm": md.get("algorithm", ""),
            "n_walks": md.get("n_walks", ""),
            "seed": md.get("seed", ""),
            "costs": costs,
            "times": times,
        })
    rows.sort(key=lambda r: (r["group"], int(r["seed"]) if r["seed"].isdigit() else -1))

    labels = [_threshold_label(t) for t in thresholds]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "algorithm", "n_walks", "seed",
                *(f"cost@{l}" for l in labels), *(f"time@{l}" for l in labels)])
    for group, members in itertools.groupby(rows, key=lambda r: r["group"]):
        members = list(members)
        for r in members:
            w.writerow([r["group"], r["algorithm"], r["n_walks"], r["seed"],
                        *map(_cell, r["costs"]), *map(_cell, r["times"])])
        med_cost = [_median([r["costs"][k] for r in members]) for k in range(len(thresholds))]
        med_time = [_median([r["times"][k] for r in members]) for k in range(len(thresholds))]
        first = members[0]
        w.writerow([group, first["algorithm"], first["n_walks"], "median",
                    *map(_cell, med_cost), *map(_cell, med_time)])
    out = directory / SUMMARY_FILE
    write_atomic(out, buf.getvalue())
    return out


def read_summary(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# Presets use N = 100, density 0.3; other network sizes such as (50, 0.3)
# or (200, 0.5) only need n_agents / density overrides in [defaults].
PRESETS: dict[str, str] = {
    "fig2_ls": """\
; least squares, all algorithms head to head
[experiment]
name = fig2_ls
seeds = 0..2

[defaults]
loss = least_squares
n_agents = 100
density = 0.3
samples_per_agent = 30
dim = 2
stop_accuracy = 1e-4

[run.w_admm]
algorithm = w_admm
rho = 3
tau = 1.5
max_events = 200000

[run.pw_admm]
algorithm = pw_admm
n_walks = 10
rho = 3
tau = 1.5
max_events = 200000

[run.ipw_admm]
algorithm = ipw_admm
n_walks = 10
rho = 3
tau = 1.5
max_events = 200000

[run.sync_admm]
algorithm = sync_admm
rho = 3
max_events = 20000

[run.dgd]
algorithm = dgd
alpha = 0.01
max_events = 20000

[run.extra]
algorithm = extra
alpha = 0.05
max_events = 20000
""",
    "fig3_m_sweep": """\
; least squares, number of walks vs. communication and time
[experiment]
name = fig3_m_sweep
seeds = 0..2

[defaults]
loss = least_squares
n_agents = 100
density = 0.3
rho = 1
tau = 3
max_events = 200000
stop_accuracy = 1e-4

[run.pw_admm]
algorithm = pw_admm
n_walks = 1, 10, 30, 90

[run.ipw_admm]
algorithm = ipw_admm
n_walks = 1, 10, 30, 90
""",
    "fig4_logistic": """\
; logistic regression, all algorithms
[experiment]
name = fig4_logistic
seeds = 0..2

[defaults]
loss = logistic
n_agents = 100
density = 0.3
samples_per_agent = 30
dim = 2
stop_accuracy = 1e-4

[run.w_admm]
algorithm = w_admm
rho = 1
tau = 3
max_events = 200000

[run.pw_admm]
algorithm = pw_admm
n_walks = 10
rho = 1
tau = 3
max_events = 200000

[run.ipw_admm]
algorithm = ipw_admm
n_walks = 10
rho = 1
tau = 3
max_events = 200000

[run.sync_admm]
algorithm = sync_admm
rho = 1
max_events = 20000

[run.dgd]
algorithm = dgd
alpha = 0.01
max_events = 20000

[run.extra]
algorithm = extra
alpha = 0.01
max_events = 20000
""",
}


def preset_description(name: str) -> str:
    first = PRESETS[name].splitlines()[0]
    return first.lstrip("; ").strip()
