"""CSV ingestion and emission, summary tables and the flat config format."""

from __future__ import annotations

import csv
import io
import math
import re
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .cohort import Cohort
from .design import DesignSpec, StratumSpec
from .errors import ConfigurationError, DataError, ParseError, SchemaError

SUMMARY_COLUMNS = ("Design", "Coef", "Mean", "SD", "SE", "SE1", "SE2", "RE", "Excluded")
RAW_COLUMNS = ("rep", "design", "coef", "estimate", "se", "se1", "se2", "status")
DELIMITERS = {"tsv": "\t", "csv": ","}

_Z = re.compile(r"z(\d+)$")


def cohort_header(k: int, m: int) -> list[str]:
    return ["id", "time", "event", *(f"z{j}" for j in range(1, k + 1)),
            *(f"zs{j}" for j in range(1, m + 1)), "stratum"]


def _dims_from_header(header: list[str], path) -> tuple[int, int]:
    names = [h.strip() for h in header]
    if len(names) < 4 or names[:3] != ["id", "time", "event"] or names[-1] != "stratum":
        raise SchemaError(f"{path}: header must read id,time,event,z1..zK,zs1..zM,stratum")
    middle = names[3:-1]
    k = 0
    while k < len(middle) and _Z.match(middle[k]):
        k += 1
    m = len(middle) - k
    if names != cohort_header(k, m):
        raise SchemaError(f"{path}: covariate columns must be z1..zK then zs1..zM, got {middle}")
    return k, m


def _number(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"column {column}: not a number: {text!r}", line) from None
    if math.isnan(value):
        raise ParseError(f"column {column}: NaN is not allowed", line)
    return value


def parse_cohort_csv(path) -> Cohort:
    """Read a cohort CSV.

    Raises
    ------
    ParseError
        A field is not numeric; the message carries the line number.
    SchemaError
        Bad header, wrong field count, an event outside {0, 1}, or ids that
        do not run 1..N.
    """
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header") from None
        k, m = _dims_from_header(header, path)
        width = k + m + 4
        ids, times, events, zs, stars, strata = [], [], [], [], [], []
        for row in reader:
            line = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != width:
                raise SchemaError(f"line {line}: expected {width} fields, found {len(row)}")
            ident = _number(row[0], line, "id")
            event = _number(row[2], line, "event")
            stratum = _number(row[-1], line, "stratum")
            if event not in (0.0, 1.0):
                raise SchemaError(f"line {line}: event must be 0 or 1, got {row[2]}")
            if ident != int(ident) or stratum != int(stratum):
                raise SchemaError(f"line {line}: id and stratum must be integers")
            time = _number(row[1], line, "time")
            if not time >= 0 or math.isinf(time):
                raise SchemaError(f"line {line}: time must be finite and nonnegative")
            ids.append(int(ident))
            times.append(time)
            events.append(event == 1.0)
            zs.append([_number(v, line, h) for v, h in zip(row[3:3 + k], header[3:3 + k])])
            stars.append([_number(v, line, h) for v, h in zip(row[3 + k:-1], header[3 + k:-1])])
            strata.append(int(stratum))
    if ids != list(range(1, len(ids) + 1)):
        raise SchemaError(f"{path}: ids must be unique and contiguous 1..N in file order")
    n = len(ids)
    return Cohort(
        time=np.asarray(times, dtype=float),
        event=np.asarray(events, dtype=bool),
        z=np.asarray(zs, dtype=float).reshape(n, k),
        z_star=np.asarray(stars, dtype=float).reshape(n, m),
        stratum=np.asarray(strata, dtype=np.int64),
    )


def write_cohort_csv(cohort: Cohort, path) -> None:
    """Write ``cohort`` so that :func:`parse_cohort_csv` recovers it bit for bit."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(cohort_header(cohort.covariate_dim, cohort.aux_dim))
        for i in range(cohort.n):
            writer.writerow([
                int(cohort.ids[i]), repr(float(cohort.time[i])), int(cohort.event[i]),
                *(repr(float(v)) for v in cohort.z[i]),
                *(repr(float(v)) for v in cohort.z_star[i]),
                int(cohort.stratum[i]),
            ])


def _cell(values, j) -> str:
    if values is None:
        return ""
    v = float(np.atleast_1d(values)[j])
    return "" if not math.isfinite(v) else f"{v:.4f}"


def emit_summary_table(summaries: Iterable, format: str = "tsv") -> str:
    """Render summaries with one row per design and coefficient.

    Numbers use four decimals; cells that do not apply to a row stay empty.
    """
    delim = _delimiter(format)
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delim, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for s in summaries:
        k = np.atleast_1d(s.mean).shape[0]
        names = s.coef_names or tuple(f"z{j + 1}" for j in range(k))
        for j in range(k):
            writer.writerow([s.design, names[j], _cell(s.mean, j), _cell(s.sd, j), _cell(s.se, j),
                             _cell(s.se1, j), _cell(s.se2, j), _cell(s.re, j), s.n_excluded])
    return buf.getvalue()


def _delimiter(format: str) -> str:
    try:
        return DELIMITERS[format.lower()]
    except KeyError:
        raise ConfigurationError(f"unknown table format {format!r}; use tsv or csv") from None


def write_raw_csv(rows: Iterable[Mapping], path) -> None:
    """Per-replication estimates, one line per design, coefficient and replication."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, RAW_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: (repr(row[c]) if isinstance(row[c], float) else row[c]) for c in RAW_COLUMNS})


def write_selection_csv(cohort: Cohort, selected, pi, weights, path_or_handle) -> None:
    """Phase-2 membership file: ``id,stratum,selected,pi,weight``."""
    own = not hasattr(path_or_handle, "write")
    handle = Path(path_or_handle).open("w", newline="", encoding="utf-8") if own else path_or_handle
    try:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["id", "stratum", "selected", "pi", "weight"])
        for i in range(cohort.n):
            writer.writerow([int(cohort.ids[i]), int(cohort.stratum[i]), int(bool(selected[i])),
                             repr(float(pi[i])), repr(float(weights[i]))])
    finally:
        if own:
            handle.close()


def parse_selection_csv(path, n: int):
    """Inverse of :func:`write_selection_csv`; returns ``(selected, pi, weights)``."""
    selected = np.zeros(n, dtype=bool)
    pi = np.ones(n)
    weights = np.zeros(n)
    seen = np.zeros(n, dtype=bool)
    try:
        handle = Path(path).open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from exc
    with handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or not {"id", "selected", "pi", "weight"} <= set(reader.fieldnames):
            raise SchemaError(f"{path}: expected columns id,selected,pi,weight")
        for row in reader:
            line = reader.line_num
            i = int(_number(row["id"], line, "id")) - 1
            if not 0 <= i < n or seen[i]:
                raise SchemaError(f"line {line}: id {row['id']} is out of range or repeated")
            seen[i] = True
            selected[i] = _number(row["selected"], line, "selected") == 1
            pi[i] = _number(row["pi"], line, "pi")
            weights[i] = _number(row["weight"], line, "weight")
    if not seen.all():
        raise SchemaError(f"{path}: selection covers {int(seen.sum())} of {n} cohort members")
    return selected, pi, weights


# ---- flat key = value config -------------------------------------------------

def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment. Keys use the flag spelling."""
    out = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{source}: expected key = value", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError(f"{source}: empty key", number)
        out[key.lstrip("-").replace("_", "-")] = value
    return out


def read_config(path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config_text(text, str(path))


def design_to_config(spec: DesignSpec) -> str:
    """Serialise a design. Strata read ``label:size`` or ``label:all`` for certainty strata."""
    strata = ",".join(f"{s.label}:{'all' if s.certainty else s.size}" for s in spec.strata)
    return f"design = {spec.kind}\nmode = {spec.mode}\nstrata = {strata}\nseed = {spec.seed}\n"


def parse_strata(text: str) -> tuple[StratumSpec, ...]:
    strata = []
    for item in filter(None, (p.strip() for p in text.split(","))):
        label, _, size = item.partition(":")
        try:
            if size.strip().lower() == "all":
                strata.append(StratumSpec(int(label), certainty=True))
            else:
                strata.append(StratumSpec(int(label), int(size)))
        except ValueError:
            raise ConfigurationError(f"bad stratum entry {item!r}; use label:size or label:all") from None
    if not strata:
        raise ConfigurationError("no strata given")
    return tuple(strata)


def design_from_config(values: Mapping[str, str]) -> DesignSpec:
    try:
        kind = values["design"]
    except KeyError:
        raise ConfigurationError("design config needs a 'design' entry") from None
    mode = values.get("mode", "case_cohort")
    seed = int(values.get("seed", 0))
    if "strata" in values:
        return DesignSpec(kind, mode, parse_strata(values["strata"]), seed)
    if "subcohort-size" in values:
        return DesignSpec.simple(kind, int(values["subcohort-size"]), mode, seed)
    raise ConfigurationError("design config needs 'strata' or 'subcohort-size'")


def emit_fit_table(names, columns: Mapping[str, object], format: str = "tsv") -> str:
    """Per-coefficient table with a ``Coef`` column followed by ``columns``."""
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=_delimiter(format), lineterminator="\n")
    writer.writerow(["Coef", *columns])
    for j, name in enumerate(names):
        writer.writerow([name, *(_cell(v, j) for v in columns.values())])
    return buf.getvalue()
