"""Dataset ingestion and the data-to-physical-variable mapping engine.

A CSV dataset (header required) streams row by row onto the platform:
each mapping rule binds one column to one announced variable, rescales
the column's domain onto the variable's [min, max] and dispatches a
validated set command through the core.  Columns are typed from the
first data row: a column whose first cell parses as a number is
numeric throughout, anything else is kept as labels.

Normalization is linear with half-up rounding.  Values outside the
domain saturate at the boundary by default (``clamp``); with clamping
off they are an error, which is the right trade-off for a file replay
but not for a live feed.

Rule domains may be declared explicitly or derived from the observed
column min/max; derivation is reported so a replay stays reproducible.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Mapping, TextIO, Union

from .codec import Frame

if TYPE_CHECKING:
    from .backplane import Backplane
    from .core import CoreNode


class DatafeedError(ValueError):
    """Base class for ingestion and mapping failures."""


class MalformedCsv(DatafeedError):
    pass


class EmptyDataset(DatafeedError):
    pass


class OutOfDomain(DatafeedError):
    pass


class DegenerateDomain(DatafeedError):
    pass


Row = Mapping[str, Union[float, str]]


@dataclass(frozen=True)
class Dataset:
    """Parsed rows with per-column observed domains."""

    columns: tuple[str, ...]
    rows: tuple[dict[str, float | str], ...]
    numeric_columns: frozenset[str]
    domains: dict[str, tuple[float, float]]

    def __len__(self) -> int:
        return len(self.rows)


def read_csv(source: str | TextIO) -> Dataset:
    """Parse an RFC-4180-style CSV with a header row.

    Raises EmptyDataset when no data rows follow the header and
    MalformedCsv for structural problems, naming the offending row and
    column (rows are counted from 1, excluding the header).
    """
    stream = io.StringIO(source) if isinstance(source, str) else source
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyDataset("no header row") from None
    columns = tuple(name.strip() for name in header)
    if len(set(columns)) != len(columns):
        raise MalformedCsv("duplicate column names in header")

    rows: list[dict[str, float | str]] = []
    numeric: set[str] = set()
    for row_no, record in enumerate(reader, start=1):
        if not record or all(cell.strip() == "" for cell in record):
            continue
        if len(record) != len(columns):
            raise MalformedCsv(f"row {row_no} has {len(record)} cells, expected {len(columns)}")
        parsed: dict[str, float | str] = {}
        for name, cell in zip(columns, record):
            cell = cell.strip()
            if not rows:  # first data row fixes each column's type
                try:
                    parsed[name] = float(cell)
                    numeric.add(name)
                except ValueError:
                    parsed[name] = cell
            elif name in numeric:
                try:
                    parsed[name] = float(cell)
                except ValueError:
                    raise MalformedCsv(f"row {row_no}, column {name!r}: {cell!r} is not numeric") from None
            else:
                parsed[name] = cell
        rows.append(parsed)
    if not rows:
        raise EmptyDataset("no data rows after the header")

    domains = {}
    for name in numeric:
        values = [row[name] for row in rows]
        domains[name] = (min(values), max(values))
    return Dataset(
        columns=columns,
        rows=tuple(rows),
        numeric_columns=frozenset(numeric),
        domains=domains,
    )


def read_csv_file(path: str | Path) -> Dataset:
    with open(path, newline="", encoding="utf-8") as stream:
        return read_csv(stream)


def normalize(
    x: float,
    domain: tuple[float, float],
    value_range: tuple[int, int],
    clamp: bool = True,
) -> int:
    """Rescale x from a numeric domain onto an integer value range.

    Linear map with half-up rounding.  With ``clamp`` (the default),
    out-of-domain values saturate at the nearest boundary; otherwise
    they raise OutOfDomain.
    """
    dmin, dmax = domain
    if not dmin < dmax:
        raise DegenerateDomain(f"domain ({dmin}, {dmax}) has no width")
    if clamp:
        x = min(max(x, dmin), dmax)
    elif not dmin <= x <= dmax:
        raise OutOfDomain(f"value {x} outside domain ({dmin}, {dmax})")
    vmin, vmax = value_range
    fraction = (x - dmin) / (dmax - dmin)
    return vmin + math.floor(fraction * (vmax - vmin) + 0.5)


@dataclass(frozen=True)
class MappingRule:
    """Binds one dataset column to one announced variable.

    With no declared domain the column's observed min/max is used once
    the rule is bound against a dataset.
    """

    column: str
    address: int
    var_index: int
    domain: tuple[float, float] | None = None
    clamp: bool = True


_RULE_KEYS = {"column", "address", "var_index", "domain_min", "domain_max", "clamp"}


def load_mapping(text: str) -> list[MappingRule]:
    """Parse a mapping document: a JSON array of rule objects.

    Each rule is {column, address, var_index, domain_min?, domain_max?,
    clamp?}; the two domain bounds come together or not at all.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatafeedError(f"invalid mapping JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise DatafeedError("mapping document must be a JSON array")
    rules = []
    for pos, raw in enumerate(doc):
        if not isinstance(raw, dict):
            raise DatafeedError(f"rule {pos} must be an object")
        unknown = set(raw) - _RULE_KEYS
        if unknown:
            raise DatafeedError(f"rule {pos} has unknown keys: {sorted(unknown)}")
        missing = {"column", "address", "var_index"} - set(raw)
        if missing:
            raise DatafeedError(f"rule {pos} missing fields: {sorted(missing)}")
        if not isinstance(raw["column"], str):
            raise DatafeedError(f"rule {pos}: column must be a string")
        if not isinstance(raw["address"], int) or not isinstance(raw["var_index"], int):
            raise DatafeedError(f"rule {pos}: address and var_index must be integers")
        domain = None
        if "domain_min" in raw or "domain_max" in raw:
            if not ("domain_min" in raw and "domain_max" in raw):
                raise DatafeedError(f"rule {pos}: domain_min and domain_max come together")
            try:
                domain = (float(raw["domain_min"]), float(raw["domain_max"]))
            except (TypeError, ValueError):
                raise DatafeedError(f"rule {pos}: domain bounds must be numbers") from None
        clamp = raw.get("clamp", True)
        if not isinstance(clamp, bool):
            raise DatafeedError(f"rule {pos}: clamp must be a boolean")
        rules.append(
            MappingRule(
                column=raw["column"],
                address=raw["address"],
                var_index=raw["var_index"],
                domain=domain,
                clamp=clamp,
            )
        )
    return rules


def load_mapping_file(path: str | Path) -> list[MappingRule]:
    return load_mapping(Path(path).read_text(encoding="utf-8"))


def bind_rule(rule: MappingRule, dataset: Dataset) -> tuple[MappingRule, bool]:
    """Fill in the rule's domain; returns (bound rule, derived-from-data?).

    Raises DatafeedError when the column is missing or non-numeric and
    DegenerateDomain when an auto-derived domain has no width (declare
    one explicitly for constant columns).
    """
    if rule.column not in dataset.columns:
        raise DatafeedError(f"no column {rule.column!r} in dataset")
    if rule.column not in dataset.numeric_columns:
        raise DatafeedError(f"column {rule.column!r} is not numeric")
    if rule.domain is not None:
        dmin, dmax = rule.domain
        if not dmin < dmax:
            raise DegenerateDomain(f"declared domain ({dmin}, {dmax}) has no width")
        return rule, False
    dmin, dmax = dataset.domains[rule.column]
    if not dmin < dmax:
        raise DegenerateDomain(
            f"column {rule.column!r} is constant at {dmin}; declare a domain explicitly"
        )
    return replace(rule, domain=(dmin, dmax)), True


def apply_row(
    row: Row,
    rules: list[MappingRule],
    core: "CoreNode",
) -> tuple[list[Frame], list[str]]:
    """Dispatch one row through the rules, in rule order.

    Returns the set-value frames plus a diagnostic per skipped rule.
    A rule is skipped (never fatal) when its target has vanished from
    the registry, its value cannot be normalized, or the row lacks a
    numeric value for its column.  Rules must be bound (have domains).
    """
    frames: list[Frame] = []
    diagnostics: list[str] = []
    for rule in rules:
        tag = f"rule {rule.column!r}->addr {rule.address} var {rule.var_index}"
        if rule.domain is None:
            diagnostics.append(f"{tag}: unbound rule (no domain)")
            continue
        x = row.get(rule.column)
        if not isinstance(x, (int, float)):
            diagnostics.append(f"{tag}: no numeric value in row")
            continue
        variable = core.find_variable(rule.address, rule.var_index)
        if variable is None:
            diagnostics.append(f"{tag}: target not in registry")
            continue
        try:
            value = normalize(x, rule.domain, (variable.min, variable.max), rule.clamp)
            frames.append(core.set_variable(rule.address, rule.var_index, value))
        except (DatafeedError, LookupError, ValueError) as exc:
            diagnostics.append(f"{tag}: {exc}")
    return frames, diagnostics


def replay(
    dataset: Dataset,
    rules: list[MappingRule],
    cadence_ms: int,
    core: "CoreNode",
    backplane: "Backplane",
    on_diagnostic: Callable[[int, str], None] | None = None,
) -> list[MappingRule]:
    """Schedule the dataset onto the virtual clock, one row per cadence.

    Row i is applied at now + i * cadence_ms; resulting frames are
    transmitted from the core.  Returns the bound rules actually used.
    """
    if cadence_ms <= 0:
        raise DatafeedError("cadence_ms must be positive")
    bound = [bind_rule(rule, dataset)[0] for rule in rules]
    start = backplane.now

    def dispatch_row(row: dict) -> Callable[[int], None]:
        def action(now: int) -> None:
            frames, diagnostics = apply_row(row, bound, core)
            for frame in frames:
                backplane.transmit(backplane.core_handle, frame, now)
            if on_diagnostic is not None:
                for diagnostic in diagnostics:
                    on_diagnostic(now, diagnostic)

        return action

    for i, row in enumerate(dataset.rows):
        backplane.schedule(start + i * cadence_ms, dispatch_row(row))
    return bound
