from __future__ import annotations

import logging
from pathlib import Path
from typing import List

from django.conf import settings
from django.core.management.base import BaseCommand
from dotenv import dotenv_values

from core.boundary.artifacts import read_manifest, render_table, write_json, write_strata_csv, write_summary_csv
from core.boundary.cli import existing_dir, existing_file, overrides, runtime_error, usage_error
from core.boundary.config_serializers import ExperimentConfigSerializer
from core.Control.run_controller import RunController
from core.Control.simulation_controller import PRESETS, SimulationController
from core.entity.manifest import RunManifest
from core.entity.mixture_models import MODES
from core.entity.simulation import ExperimentConfig
from core.exceptions import GmleError, MalformedInputError

logger = logging.getLogger(__name__)

# CLI option name -> config document key
OVERRIDES = {
    "family": "family",
    "kappa": "kappa",
    "mode": "mode",
    "grid_res": "grid_res",
    "tol": "tol",
    "max_iter": "max_iter",
    "reps": "reps",
    "seed": "seed",
}


class Command(BaseCommand):
    help = (
        "Run seeded simulation experiments (a named preset, a config file, or a recorded manifest) "
        "and write a summary CSV plus a structured JSON report to --out."
    )

    def add_arguments(self, parser):
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument("--preset", choices=PRESETS)
        source.add_argument("--config", help="Flat key=value experiment document")
        source.add_argument("--manifest", help="Structured report (or CSV) of an earlier run to replay")
        parser.add_argument("--out", required=True, help="Existing output directory")
        parser.add_argument("--family")
        parser.add_argument("--kappa", type=int)
        parser.add_argument("--mode", choices=MODES)
        parser.add_argument("--grid-res", type=int)
        parser.add_argument("--tol", type=float)
        parser.add_argument("--max-iter", type=int)
        parser.add_argument("--reps", type=int)
        parser.add_argument("--seed", type=int)
        parser.add_argument("--jobs", type=int, help="Worker processes for replications")
        parser.add_argument("--emit-data", metavar="DIR", help="Also write each replication's stratum CSV here")
        parser.add_argument("--record", action="store_true", help="Record the run in the run registry")

    def _validate(self, documents: List[dict]) -> List[ExperimentConfig]:
        if not documents:
            raise usage_error("No experiment configuration to run.")
        configs = []
        for doc in documents:
            if not isinstance(doc, dict):
                raise usage_error(f"Config documents must be key/value mappings, got {type(doc).__name__}.")
            serializer = ExperimentConfigSerializer(data=doc)
            if not serializer.is_valid():
                raise usage_error({doc.get("config_id") or "config": serializer.errors})
            configs.append(serializer.validated_data["experiment"])
        return configs

    def _load(self, opts):
        """Flat config documents, manifest inputs and output stem for the chosen source."""
        given = overrides(opts, OVERRIDES)
        if opts["manifest"]:
            if given:
                raise usage_error("--manifest replays a recorded run; it takes no override flags.")
            try:
                manifest = read_manifest(existing_file(opts["manifest"], "--manifest"))
            except MalformedInputError as exc:
                raise usage_error(str(exc))
            if manifest.subcommand != "simulate":
                raise usage_error(f"--manifest: expected a simulate manifest, got '{manifest.subcommand}'.")
            # stratum files carry the single config that generated them
            documents = manifest.config if isinstance(manifest.config, list) else [manifest.config]
            return documents, manifest
        if opts["preset"]:
            if "family" in given or "kappa" in given:
                raise usage_error("--family and --kappa apply to --config runs, not presets.")
            try:
                preset = SimulationController.table_preset(opts["preset"])
            except GmleError as exc:
                raise usage_error(str(exc))
            documents = [{**ExperimentConfigSerializer.flatten(c), **given} for c in preset]
            return documents, {"preset": opts["preset"]}
        path = existing_file(opts["config"], "--config")
        document = {k: v for k, v in dotenv_values(path).items() if v not in (None, "")}
        return [{**document, **given}], {"config": str(opts["config"])}

    def handle(self, *args, **opts):
        out_dir = existing_dir(opts["out"], "--out")
        emit_dir = existing_dir(opts["emit_data"], "--emit-data") if opts["emit_data"] else None
        if opts["jobs"] is not None and opts["jobs"] < 1:
            raise usage_error("--jobs must be >= 1.")

        documents, source = self._load(opts)
        configs = self._validate(documents)
        data_manifest = None
        if isinstance(source, RunManifest):
            manifest = source
            if "data" in manifest.outputs:
                data_manifest = manifest
                manifest = self._summary_manifest(data_manifest, documents, configs[0])
            elif not {"csv", "json"} <= set(manifest.outputs):
                raise usage_error("--manifest: the manifest names no output files to replay.")
        else:
            stem = source.get("preset") or configs[0].config_id
            manifest = RunManifest(
                subcommand="simulate",
                config=[ExperimentConfigSerializer.flatten(c) for c in configs],
                inputs=source,
                outputs={"csv": f"{stem}.csv", "json": f"{stem}.json"},
                seed=configs[0].seed,
                artifact_version=settings.ARTIFACT_VERSION,
            )

        self.stdout.write(self.style.NOTICE(f"Running {len(configs)} configuration(s)..."))
        try:
            reports = SimulationController.run_all(configs, jobs=opts["jobs"])
        except GmleError as exc:
            raise runtime_error(exc)

        csv_path = out_dir / manifest.outputs["csv"]
        json_path = out_dir / manifest.outputs["json"]
        write_summary_csv(csv_path, reports, manifest)
        write_json(json_path, {"manifest": manifest.as_dict(), "reports": [r.as_dict() for r in reports]})
        written = [str(csv_path), str(json_path)]
        if data_manifest is not None:
            written.append(self._replay_data(out_dir, configs[0], data_manifest))
        if emit_dir is not None:
            written += self._emit(emit_dir, configs, manifest)

        for line in render_table(reports):
            self.stdout.write(line)
        for report in reports:
            if report.naive_limit is not None:
                limit = ", ".join(f"{v:.4f}" for v in report.naive_limit)
                self.stdout.write(f"  {report.config.config_id}: naive population limit {limit}")
            if report.n_failed:
                self.stdout.write(self.style.WARNING(
                    f"  {report.config.config_id}: {report.n_failed} replication(s) failed and were excluded"
                ))
        if opts["record"]:
            run = RunController.record_simulation(manifest, reports, written)
            self.stdout.write(self.style.SUCCESS(f"Recorded run {run.run_id}"))
        self.stdout.write(self.style.SUCCESS(f"Wrote {csv_path} and {json_path}"))

    @staticmethod
    def _summary_manifest(data_manifest: RunManifest, documents: List[dict], config: ExperimentConfig) -> RunManifest:
        """The manifest a --config run of this stratum file's configuration would have written."""
        inputs = {k: v for k, v in data_manifest.inputs.items() if k != "replication"}
        return RunManifest(
            subcommand="simulate",
            config=documents,
            inputs=inputs,
            outputs={"csv": f"{config.config_id}.csv", "json": f"{config.config_id}.json"},
            seed=data_manifest.seed,
            artifact_version=data_manifest.artifact_version,
        )

    def _replay_data(self, out_dir: Path, config: ExperimentConfig, data_manifest: RunManifest) -> str:
        r = data_manifest.inputs.get("replication")
        kappa = config.model.describe().get("kappa")
        if not isinstance(r, int) or not 0 <= r < config.replications or kappa is None:
            raise usage_error("--manifest: stratum file manifest has no valid replication index.")
        path = out_dir / data_manifest.outputs["data"]
        write_strata_csv(path, SimulationController.replication_outcomes(config, r), kappa, data_manifest)
        self.stdout.write(self.style.SUCCESS(f"Rewrote stratum file {path}"))
        return str(path)

    def _emit(self, emit_dir: Path, configs: List[ExperimentConfig], manifest: RunManifest) -> List[str]:
        written = []
        for config in configs:
            kappa = config.model.describe().get("kappa")
            if kappa is None:
                self.stdout.write(self.style.WARNING(
                    f"  {config.config_id}: stratum CSVs are written for the binom family only; skipped"
                ))
                continue
            for r in range(config.replications):
                name = f"{config.config_id}_rep{r}.csv"
                data_manifest = RunManifest(
                    subcommand="simulate",
                    config=ExperimentConfigSerializer.flatten(config),
                    inputs={**manifest.inputs, "replication": r},
                    outputs={"data": name},
                    seed=config.seed,
                    artifact_version=manifest.artifact_version,
                )
                write_strata_csv(emit_dir / name, SimulationController.replication_outcomes(config, r), kappa, data_manifest)
                written.append(str(emit_dir / name))
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(written)} stratum file(s) to {emit_dir}"))
        return written
