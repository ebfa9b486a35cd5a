"""Clustered dose-response dataset: construction, CSV ingestion, summaries.

A dataset is a flat, ordered list of observations.  Each observation
belongs to exactly one cluster (the experimental unit carrying random
effects: an assay, block or day) and one curve (the treatment group whose
fixed-effect parameters it shares).  Only a single hierarchical level is
supported; nested or crossed cluster structures are rejected by design.
"""

from __future__ import annotations

import io
import csv
from dataclasses import dataclass, field
from typing import IO, Iterable

from .errors import SchemaError, ParseError, ValidationError

REQUIRED_COLUMNS = ("dose", "response", "cluster")
OPTIONAL_CURVE_COLUMN = "curve"
DEFAULT_CURVE_ID = "1"


@dataclass(frozen=True)
class Observation:
    """One measured response at one dose, tagged with its cluster and curve."""

    dose: float
    response: float
    cluster_id: str
    curve_id: str = DEFAULT_CURVE_ID

    def __post_init__(self) -> None:
        import math

        if not (math.isfinite(self.dose) and self.dose >= 0.0):
            raise ValidationError(f"dose must be finite and >= 0, got {self.dose}")
        if not math.isfinite(self.response):
            raise ValidationError(f"response must be finite, got {self.response}")


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of observations with cluster and curve indices.

    ``cluster_index`` and ``curve_index`` map identifiers to lists of row
    positions (0-based, in input order); together they partition the rows.
    """

    observations: tuple[Observation, ...]
    cluster_index: dict[str, tuple[int, ...]] = field(init=False)
    curve_index: dict[str, tuple[int, ...]] = field(init=False)

    def __post_init__(self) -> None:
        if not self.observations:
            raise ValidationError("dataset must contain at least one observation")
        clusters: dict[str, list[int]] = {}
        curves: dict[str, list[int]] = {}
        for i, obs in enumerate(self.observations):
            clusters.setdefault(obs.cluster_id, []).append(i)
            curves.setdefault(obs.curve_id, []).append(i)
        object.__setattr__(self, "cluster_index",
                           {k: tuple(v) for k, v in clusters.items()})
        object.__setattr__(self, "curve_index",
                           {k: tuple(v) for k, v in curves.items()})

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def cluster_ids(self) -> list[str]:
        return sorted(self.cluster_index)

    @property
    def curve_ids(self) -> list[str]:
        return sorted(self.curve_index)

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_index)

    def doses(self) -> list[float]:
        return [obs.dose for obs in self.observations]

    def responses(self) -> list[float]:
        return [obs.response for obs in self.observations]

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.observations[i] for i in indices))


def from_rows(rows: Iterable[tuple[float, float, str, str]]) -> Dataset:
    """Build a dataset from (dose, response, cluster_id, curve_id) tuples."""
    return Dataset(tuple(Observation(*row) for row in rows))


def load_csv(source: str | IO[str]) -> Dataset:
    """Parse a dataset from a CSV file path or an open text stream.

    The header must contain ``dose``, ``response`` and ``cluster``; a
    ``curve`` column is optional and defaults to ``"1"``.  Row numbers in
    error messages count the header as row 1.
    """
    if hasattr(source, "read"):
        return _load_csv_stream(source)  # type: ignore[arg-type]
    with open(source, "r", encoding="utf-8", newline="") as handle:
        return _load_csv_stream(handle)


def _load_csv_stream(stream: IO[str]) -> Dataset:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty file: no header row") from None
    header = [h.strip() for h in header]
    col = {name: k for k, name in enumerate(header)}
    for name in REQUIRED_COLUMNS:
        if name not in col:
            raise SchemaError(f"missing required column {name!r}")
    has_curve = OPTIONAL_CURVE_COLUMN in col

    observations: list[Observation] = []
    for rownum, row in enumerate(reader, start=2):
        if not row or all(cell.strip() == "" for cell in row):
            continue
        if len(row) < len(header):
            raise ParseError(f"row {rownum}: expected {len(header)} fields, "
                             f"got {len(row)}")
        try:
            dose = float(row[col["dose"]])
            response = float(row[col["response"]])
        except ValueError as exc:
            raise ParseError(f"row {rownum}: {exc}") from None
        cluster_id = row[col["cluster"]].strip()
        curve_id = row[col["curve"]].strip() if has_curve else DEFAULT_CURVE_ID
        try:
            observations.append(Observation(dose, response, cluster_id, curve_id))
        except ValidationError as exc:
            raise ValidationError(f"row {rownum}: {exc}") from None
    return Dataset(tuple(observations))


def write_csv(dataset: Dataset, target: str | IO[str]) -> None:
    """Emit a dataset in the same schema :func:`load_csv` reads.

    Floats are rendered with 17 significant digits so a load/write cycle
    round-trips values bit-exactly.
    """
    if hasattr(target, "write"):
        _write_csv_stream(dataset, target)  # type: ignore[arg-type]
        return
    with open(target, "w", encoding="utf-8", newline="") as handle:
        _write_csv_stream(dataset, handle)


def _write_csv_stream(dataset: Dataset, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["dose", "response", "cluster", "curve"])
    for obs in dataset.observations:
        writer.writerow([format(obs.dose, ".17g"), format(obs.response, ".17g"),
                         obs.cluster_id, obs.curve_id])


def dumps_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    _write_csv_stream(dataset, buf)
    return buf.getvalue()


@dataclass(frozen=True)
class DatasetSummary:
    n_clusters: int
    n_obs: int
    doses_per_cluster: dict[str, int]
    curve_ids: tuple[str, ...]
    dose_range: tuple[float, float]
    response_range: tuple[float, float]


def summarize(dataset: Dataset) -> DatasetSummary:
    """Deterministic structural summary (cluster count, sizes, ranges)."""
    doses_per_cluster = {
        cid: len({dataset.observations[i].dose for i in idx})
        for cid, idx in sorted(dataset.cluster_index.items())
    }
    doses = dataset.doses()
    responses = dataset.responses()
    return DatasetSummary(
        n_clusters=dataset.n_clusters,
        n_obs=len(dataset),
        doses_per_cluster=doses_per_cluster,
        curve_ids=tuple(dataset.curve_ids),
        dose_range=(min(doses), max(doses)),
        response_range=(min(responses), max(responses)),
    )
