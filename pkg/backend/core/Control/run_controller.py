# core/Control/run_controller.py

from __future__ import annotations

from dataclasses import asdict
from typing import Any, Dict, List, Optional

from core.entity.manifest import RunManifest
from core.entity.run_entity import RunEntity
from core.entity.simulation import ExperimentReport
from core.models import Subcommand


class RunController:
    @staticmethod
    def record_simulation(manifest: RunManifest, reports: List[ExperimentReport], outputs: List[str]):
        summary = [
            {"config_id": r.config.config_id, **asdict(s)}
            for r in reports
            for s in r.summaries
        ]
        label = ",".join(r.config.config_id for r in reports)
        return RunEntity.record(
            subcommand=Subcommand.SIMULATE, label=label, manifest=manifest.as_dict(), summary=summary, outputs=outputs
        )

    @staticmethod
    def record_fit(manifest: RunManifest, result: Dict[str, Any], outputs: List[str]):
        summary = [{"estimate": result["estimate"], "solver": result["solver"]}]
        label = str(manifest.inputs.get("data", ""))
        return RunEntity.record(
            subcommand=Subcommand.FIT, label=label, manifest=manifest.as_dict(), summary=summary, outputs=outputs
        )

    @staticmethod
    def list_runs(limit: int = 20, subcommand: Optional[str] = None) -> List[Dict[str, Any]]:
        return [
            {
                "run_id": run.run_id,
                "subcommand": run.subcommand,
                "label": run.label,
                "created_at": run.created_at.isoformat(),
                "outputs": run.outputs,
                "rows": len(run.summary),
            }
            for run in RunEntity.recent(limit=limit, subcommand=subcommand)
        ]
