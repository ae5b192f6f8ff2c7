"""Delimited-file ingestion into a Dataset: roles, encoding, missingness policy.

Policy applied per file, in order:

1. rows missing the treatment or the outcome are dropped;
2. rows missing three or more of the proxy/covariate cells are dropped;
3. designated categorical columns get an explicit "Unknown" level for
   missing cells;
4. remaining missing numeric cells are imputed with the column median,
   missing cells of non-designated categorical columns with the most
   frequent level; every imputation is counted;
5. categorical columns are one-hot encoded with the most frequent level as
   the reference (ties broken alphabetically, overridable per column).

Empty strings and the literal ``NA`` are the missing-value tokens.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestError
from .model import Dataset

__all__ = ["RoleMap", "IngestReport", "load_role_map", "ingest", "export_dataset"]

MISSING_TOKENS = ("", "NA")
ROLES = ("proxy", "treatment", "outcome", "covariate", "ignore")


@dataclass(frozen=True)
class RoleMap:
    """Column roles plus encoding directives for one file layout.

    ``categorical`` columns get Unknown-for-missing semantics and one-hot
    encoding; ``treatment_coding``/``outcome_coding`` map string levels to
    numbers; ``reference_levels`` overrides the reference class per column.
    """

    roles: dict[str, str]
    categorical: tuple[str, ...] = ()
    treatment_coding: dict[str, float] | None = None
    outcome_coding: dict[str, float] | None = None
    reference_levels: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        roles = dict(self.roles)
        for col, role in roles.items():
            if role not in ROLES:
                raise ValueError(f"column {col!r} has unknown role {role!r}; valid: {ROLES}")
        counts = {role: sum(1 for r in roles.values() if r == role) for role in ROLES}
        if counts["treatment"] != 1:
            raise ValueError(f"need exactly one treatment column, found {counts['treatment']}")
        if counts["outcome"] != 1:
            raise ValueError(f"need exactly one outcome column, found {counts['outcome']}")
        if counts["proxy"] < 1:
            raise ValueError("need at least one proxy column")
        object.__setattr__(self, "roles", roles)
        object.__setattr__(self, "categorical", tuple(self.categorical))

    def columns_with_role(self, role: str) -> list[str]:
        return [c for c, r in self.roles.items() if r == role]

    @property
    def treatment_column(self) -> str:
        return self.columns_with_role("treatment")[0]

    @property
    def outcome_column(self) -> str:
        return self.columns_with_role("outcome")[0]


@dataclass
class IngestReport:
    """Bookkeeping for one ingestion; counts reconcile with rows in/out."""

    rows_read: int = 0
    rows_dropped_missing_treatment_outcome: int = 0
    rows_dropped_excess_missing: int = 0
    cells_imputed: int = 0
    unknown_category_counts: dict[str, int] = field(default_factory=dict)

    @property
    def rows_kept(self) -> int:
        return (
            self.rows_read
            - self.rows_dropped_missing_treatment_outcome
            - self.rows_dropped_excess_missing
        )


def load_role_map(path) -> RoleMap:
    """Read a RoleMap from its JSON file format (see README for the schema)."""
    with Path(path).open() as handle:
        raw = json.load(handle)
    coding = raw.get("treatment_coding")
    outcome_coding = raw.get("outcome_coding")
    return RoleMap(
        roles=raw["roles"],
        categorical=tuple(raw.get("categorical", ())),
        treatment_coding={k: float(v) for k, v in coding.items()} if coding else None,
        outcome_coding={k: float(v) for k, v in outcome_coding.items()}
        if outcome_coding
        else None,
        reference_levels=dict(raw.get("reference_levels", {})),
    )


def _is_missing(cell: str) -> bool:
    return cell in MISSING_TOKENS


def _parse_number(cell: str, row: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError as exc:
        raise IngestError(f"cell {cell!r} is not numeric", row=row, column=column) from exc


def _code_level(cell: str, coding: dict[str, float], row: int, column: str) -> float:
    if coding is None:
        return _parse_number(cell, row, column)
    if cell not in coding:
        raise IngestError(
            f"level {cell!r} missing from coding map {sorted(coding)}", row=row, column=column
        )
    return coding[cell]


def _mode(values: list[str]) -> str:
    counts: dict[str, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return min(counts, key=lambda level: (-counts[level], level))


def ingest(path, roles: RoleMap, delimiter: str = ",") -> tuple[Dataset, IngestReport]:
    """Read a delimited file into a Dataset under the module's missingness policy."""
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path} is empty; a header row is required") from None
        raw_rows = [row for row in reader if row]

    missing_cols = [c for c in roles.roles if c not in header]
    if missing_cols:
        raise IngestError(f"columns {missing_cols} required by the role map are absent")
    uncovered = [c for c in header if c not in roles.roles]
    if uncovered:
        raise IngestError(f"columns {uncovered} have no assigned role (use 'ignore')")
    col_index = {c: header.index(c) for c in roles.roles}

    report = IngestReport(rows_read=len(raw_rows))
    treatment_col = roles.treatment_column
    outcome_col = roles.outcome_column
    feature_cols = [
        c for c in header if roles.roles[c] in ("proxy", "covariate")
    ]
    categorical = set(roles.categorical)

    kept: list[dict[str, str]] = []
    kept_source_rows: list[int] = []
    for r, row in enumerate(raw_rows):
        if len(row) != len(header):
            raise IngestError(
                f"row has {len(row)} fields, header has {len(header)}", row=r
            )
        cells = {c: row[col_index[c]] for c in roles.roles}
        if _is_missing(cells[treatment_col]) or _is_missing(cells[outcome_col]):
            report.rows_dropped_missing_treatment_outcome += 1
            continue
        n_missing = sum(1 for c in feature_cols if _is_missing(cells[c]))
        if n_missing >= 3:
            report.rows_dropped_excess_missing += 1
            continue
        kept.append(cells)
        kept_source_rows.append(r)
    if not kept:
        raise IngestError("no rows survived the missing-data exclusions")

    report.unknown_category_counts = {c: 0 for c in roles.categorical if c in feature_cols}
    for c in categorical:
        if c not in feature_cols:
            continue
        for cells in kept:
            if _is_missing(cells[c]):
                cells[c] = "Unknown"
                report.unknown_category_counts[c] += 1

    # Impute the remaining holes: medians for numeric, modes for categorical
    # columns that were not designated for an Unknown level.
    for c in feature_cols:
        holes = [i for i, cells in enumerate(kept) if _is_missing(cells[c])]
        if not holes:
            continue
        present = [cells[c] for cells in kept if not _is_missing(cells[c])]
        if not present:
            raise IngestError("column is entirely missing among kept rows", column=c)
        if c in categorical:
            continue  # already handled via Unknown
        if _looks_numeric(present):
            median = float(np.median([float(v) for v in present]))
            fill = repr(median)
        else:
            fill = _mode(present)
        for i in holes:
            kept[i][c] = fill
            report.cells_imputed += 1

    z_blocks: list[np.ndarray] = []
    z_names: list[str] = []
    x_blocks: list[np.ndarray] = []
    x_names: list[str] = []
    for c in header:
        role = roles.roles[c]
        if role not in ("proxy", "covariate"):
            continue
        blocks, names = (z_blocks, z_names) if role == "proxy" else (x_blocks, x_names)
        if c in categorical:
            cols, labels = _one_hot(
                [cells[c] for cells in kept], c, roles.reference_levels.get(c)
            )
            blocks.extend(cols)
            names.extend(labels)
        else:
            values = [
                _parse_number(cells[c], kept_source_rows[i], c)
                for i, cells in enumerate(kept)
            ]
            blocks.append(np.asarray(values))
            names.append(c)

    a = np.asarray(
        [
            _code_level(cells[treatment_col], roles.treatment_coding, kept_source_rows[i], treatment_col)
            for i, cells in enumerate(kept)
        ]
    )
    y = np.asarray(
        [
            _code_level(cells[outcome_col], roles.outcome_coding, kept_source_rows[i], outcome_col)
            for i, cells in enumerate(kept)
        ]
    )
    if not z_names:
        raise IngestError("no usable proxy columns after encoding")
    dataset = Dataset(
        z=np.column_stack(z_blocks),
        a=a,
        y=y,
        x=np.column_stack(x_blocks) if x_blocks else None,
        z_names=tuple(z_names),
        x_names=tuple(x_names),
        treatment_name=treatment_col,
        outcome_name=outcome_col,
    )
    return dataset, report


def _looks_numeric(values: list[str]) -> bool:
    try:
        for v in values:
            float(v)
    except ValueError:
        return False
    return True


def _one_hot(
    values: list[str], column: str, reference_override: str | None
) -> tuple[list[np.ndarray], list[str]]:
    levels = sorted(set(values))
    counts = {lv: values.count(lv) for lv in levels}
    if reference_override is not None:
        if reference_override not in counts:
            raise IngestError(
                f"reference level {reference_override!r} not observed", column=column
            )
        reference = reference_override
    else:
        reference = min(levels, key=lambda lv: (-counts[lv], lv))
    arr = np.asarray(values)
    cols = []
    names = []
    for lv in levels:
        if lv == reference:
            continue
        cols.append((arr == lv).astype(float))
        names.append(f"{column}={lv}")
    return cols, names


def export_dataset(dataset: Dataset, path) -> None:
    """Write the encoded dataset back to CSV (proxies, treatment, outcome, covariates).

    Floats use their shortest round-trip representation, so ingesting a file
    written by this function reproduces it byte for byte.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = list(dataset.z_names) + [dataset.treatment_name]
    columns = [dataset.z[:, i] for i in range(dataset.p)] + [dataset.a]
    if dataset.y is not None:
        header.append(dataset.outcome_name)
        columns.append(dataset.y)
    header.extend(dataset.x_names)
    columns.extend(dataset.x[:, j] for j in range(dataset.m))
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for i in range(dataset.n):
            writer.writerow([repr(float(col[i])) for col in columns])
