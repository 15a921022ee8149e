# core/boundary/artifacts.py
"""
Reading and writing the files the commands exchange with the outside world.

Every file written here starts with (CSV) or contains (JSON) the RunManifest
that produced it, and nothing time-dependent, so identical runs give
identical bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from core.boundary.config_serializers import StratumRowSerializer, error_text
from core.entity.gmle_solver import ObservationSet
from core.entity.manifest import MANIFEST_PREFIX, RunManifest
from core.entity.mixture_models import CENSORED, NONRESPONSE, Outcome
from core.entity.simulation import ExperimentReport
from core.exceptions import MalformedInputError

STRATA_HEADER = ("stratum_id", "kappa_attempted", "kappa_responded", "x")
SUMMARY_HEADER = ("config_id", "estimator", "mean", "sd", "n_reps", "n_failed")


@dataclass(frozen=True)
class StrataFile:
    observations: ObservationSet
    kappa: Optional[int]
    n_rows: int


def _number(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    return f"{value:.10g}"


def _row_outcome(family: str, row: dict, line: int) -> Outcome:
    kr, x = row["kappa_responded"], row.get("x")
    if kr == 0:
        if family == "bernoulli":
            raise MalformedInputError("the bernoulli family has no nonresponse rows.", line)
        return NONRESPONSE
    if family == "bernoulli":
        if kr != 1:
            raise MalformedInputError("bernoulli rows need kappa_responded = 1.", line)
        return Outcome.response(x)
    return Outcome.response(x, kr)


def read_strata_csv(path: Path | str, family: str) -> StrataFile:
    """Parse a stratum-level CSV into censored observations.

    Lines starting with '#' are skipped; errors carry the physical line number.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedInputError(f"cannot read {path}: {exc}") from exc

    numbered = [(i, line) for i, line in enumerate(text.splitlines(), start=1)
                if line.strip() and not line.lstrip().startswith("#")]
    if not numbered:
        raise MalformedInputError(f"{path} has no header row.")
    header_line, header = numbered[0]
    columns = [c.strip() for c in next(csv.reader([header]))]
    if tuple(columns) != STRATA_HEADER:
        raise MalformedInputError(f"header must be {','.join(STRATA_HEADER)}", header_line)

    outcomes = []
    kappa = None
    seen = set()
    for line_no, line in numbered[1:]:
        cells = next(csv.reader([line]))
        if len(cells) != len(STRATA_HEADER):
            raise MalformedInputError(f"expected {len(STRATA_HEADER)} fields, got {len(cells)}.", line_no)
        raw = {k: (v.strip() or None) for k, v in zip(STRATA_HEADER, cells)}
        serializer = StratumRowSerializer(data=raw)
        if not serializer.is_valid():
            raise MalformedInputError(error_text(serializer.errors), line_no)
        row = serializer.validated_data
        if row["stratum_id"] in seen:
            raise MalformedInputError(f"duplicate stratum_id '{row['stratum_id']}'.", line_no)
        seen.add(row["stratum_id"])
        attempted = row.get("kappa_attempted")
        if family == "binom":
            if attempted is None:
                raise MalformedInputError("kappa_attempted is required for the binom family.", line_no)
            if kappa is None:
                kappa = attempted
            elif attempted != kappa:
                raise MalformedInputError(f"kappa_attempted must be constant ({kappa}), got {attempted}.", line_no)
        outcomes.append(_row_outcome(family, row, line_no))

    if not outcomes:
        raise MalformedInputError(f"{path} has no data rows.")
    return StrataFile(
        observations=ObservationSet.from_outcomes(outcomes, mode=CENSORED),
        kappa=kappa,
        n_rows=len(outcomes),
    )


def write_strata_csv(path: Path | str, outcomes: Sequence[Outcome], kappa: int, manifest: RunManifest) -> None:
    buf = io.StringIO()
    buf.write(manifest.comment_line() + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(STRATA_HEADER)
    for i, o in enumerate(outcomes, start=1):
        if o.nonresponse:
            writer.writerow((f"s{i}", kappa, 0, ""))
        else:
            x, kr = o.payload
            writer.writerow((f"s{i}", kappa, kr, x))
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_summary_csv(path: Path | str, reports: Iterable[ExperimentReport], manifest: RunManifest) -> None:
    buf = io.StringIO()
    buf.write(manifest.comment_line() + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for report in reports:
        for s in report.summaries:
            writer.writerow((report.config.config_id, s.estimator, _number(s.mean), _number(s.sd), s.n_reps, s.n_failed))
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_json(path: Path | str, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def read_manifest(path: Path | str) -> RunManifest:
    """The manifest recorded in a structured report, or in the first line of a CSV artifact."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedInputError(f"cannot read {path}: {exc}") from exc
    try:
        if text.startswith(MANIFEST_PREFIX):
            data = json.loads(text.splitlines()[0][len(MANIFEST_PREFIX):])
        else:
            data = json.loads(text)["manifest"]
        return RunManifest.from_dict(data)
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedInputError(f"{path} does not carry a run manifest ({exc}).") from exc


def _cell(mean: float, sd: float) -> str:
    return f"{mean:.3f}, ({sd:.3f})"


def render_table(reports: Sequence[ExperimentReport]) -> list[str]:
    """Naive and GMLE per configuration, as 'mean, (sd)'."""
    rows = []
    for report in reports:
        naive = [s for s in report.summaries if s.estimator.startswith("naive")]
        gmle = [s for s in report.summaries if s.estimator.startswith("gmle")]
        for n_s, g_s in zip(naive, gmle):
            label = report.config.config_id
            if len(naive) > 1:
                label += n_s.estimator[len("naive"):]
            rows.append((label, _cell(n_s.mean, n_s.sd), _cell(g_s.mean, g_s.sd)))
    width = max([len("config")] + [len(r[0]) for r in rows])
    lines = [f"{'config'.ljust(width)}  {'Naive'.ljust(16)}  GMLE"]
    lines += [f"{label.ljust(width)}  {naive.ljust(16)}  {gmle}" for label, naive, gmle in rows]
    return lines
