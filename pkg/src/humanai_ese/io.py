"""CSV / JSON persistence. Floats are written with 17 significant digits so they round-trip."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .core import ConfigError, EffectSeries, Panel

PANEL_COLUMNS = ("scenario", "seed", "unit_id", "t", "w", "y", "q")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if np.isnan(x) else format(x, ".17g")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default)


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def content_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, default=_default) + "\n")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())


def write_rows(path: str | Path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(list(header))
        for r in rows:
            out.writerow([v if isinstance(v, str) else fmt(v) for v in r])


def write_panels(panels: Mapping[str, Panel] | Iterable[Panel], path: str | Path) -> None:
    """Long format: one row per (scenario, unit, round). Round 0 has an empty w."""
    items = panels.values() if isinstance(panels, Mapping) else panels

    def rows():
        for p in items:
            T = p.horizon
            for i in range(p.n_units):
                q = fmt(p.q[i])
                yield [p.scenario, p.seed, i, 0, "", p.y[i, 0], q]
                for t in range(1, T + 1):
                    yield [p.scenario, p.seed, i, t, int(p.w[i, t - 1]), p.y[i, t], q]

    write_rows(path, PANEL_COLUMNS, rows())


def read_panel(path: str | Path, scenario: str = "experiment", t_warmup: int | None = None) -> Panel:
    """Rebuild one scenario's panel. Warmup defaults to the rounds before the first treatment."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(PANEL_COLUMNS) - set(reader.fieldnames):
            raise ConfigError(f"panel file needs columns {PANEL_COLUMNS}")
        recs = [r for r in reader if r["scenario"] == scenario]
    if not recs:
        raise ConfigError(f"no rows for scenario {scenario!r} in {path}")
    units = np.array([int(r["unit_id"]) for r in recs])
    ts = np.array([int(r["t"]) for r in recs])
    n, T = units.max() + 1, ts.max()
    if len(recs) != n * (T + 1):
        raise ConfigError("panel file is not a complete unit-by-round grid")
    y = np.full((n, T + 1), np.nan)
    w = np.zeros((n, T), dtype=np.int8)
    q = np.empty(n)
    for r, i, t in zip(recs, units, ts):
        y[i, t] = float(r["y"])
        q[i] = float(r["q"])
        if t > 0:
            w[i, t - 1] = int(r["w"])
    if t_warmup is None:
        treated = np.nonzero(w.any(axis=0))[0]
        t_warmup = int(treated[0]) if len(treated) else 0
    return Panel(y, w, q, scenario, int(recs[0]["seed"]), t_warmup)


def write_effects(series: Mapping[str, EffectSeries | np.ndarray], path: str | Path) -> None:
    """Wide effect table: column t, then one column per series."""
    names = list(series)
    vals = [np.asarray(getattr(s, "values", s), dtype=float) for s in series.values()]
    T = len(vals[0]) - 1
    write_rows(path, ["t", *names], ([t, *(v[t] for v in vals)] for t in range(T + 1)))


def read_effects(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = {k: [] for k in reader.fieldnames if k != "t"}
        for r in reader:
            for k in cols:
                cols[k].append(float(r[k]))
    return {k: np.array(v) for k, v in cols.items()}
