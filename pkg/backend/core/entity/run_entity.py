# core/entity/run_entity.py
"""
ENTITY LAYER for the run registry (the only entity module that touches the ORM).
"""

from __future__ import annotations

from typing import Iterable, List, Optional

from django.db import transaction
from django.db.models import QuerySet

from core.models import ExperimentRun, Subcommand


class RunEntity:
    @staticmethod
    @transaction.atomic
    def record(*, subcommand: str, label: str, manifest: dict, summary: List[dict],
               outputs: Iterable[str]) -> ExperimentRun:
        valid = [c[0] for c in Subcommand.choices]
        if subcommand not in valid:
            raise ValueError(f"Invalid subcommand '{subcommand}'. Valid: {valid}")
        return ExperimentRun.objects.create(
            subcommand=subcommand,
            label=label[:200],
            manifest=manifest,
            summary=summary,
            outputs=list(outputs),
        )

    @staticmethod
    def recent(limit: int = 20, subcommand: Optional[str] = None) -> QuerySet:
        qs = ExperimentRun.objects.all()
        if subcommand:
            qs = qs.filter(subcommand=subcommand)
        return qs[:limit]

    @staticmethod
    def get(run_id: str) -> ExperimentRun:
        return ExperimentRun.objects.get(run_id=run_id)
