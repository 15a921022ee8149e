from __future__ import annotations

from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand

from core.boundary.artifacts import read_strata_csv, write_json
from core.boundary.cli import existing_dir, existing_file, overrides, runtime_error, usage_error
from core.boundary.config_serializers import FIT_FAMILIES, FitOptionsSerializer
from core.Control.fit_controller import FitController
from core.Control.run_controller import RunController
from core.entity.manifest import RunManifest
from core.entity.mixture_models import MODES
from core.exceptions import GmleError, MalformedInputError

OPTIONS = {
    "family": "family",
    "kappa": "kappa",
    "lambda_max": "lambda_max",
    "bernoulli_eta": "bernoulli_eta",
    "mode": "mode",
    "grid_res": "grid_res",
    "tol": "tol",
    "max_iter": "max_iter",
    "starts": "starts",
    "seed": "seed",
    "threshold": "threshold",
}


class Command(BaseCommand):
    help = "Fit the grid GMLE to a stratum CSV (stratum_id,kappa_attempted,kappa_responded,x) and write a JSON report."

    def add_arguments(self, parser):
        parser.add_argument("data", help="Stratum-level CSV file")
        parser.add_argument("--family", choices=FIT_FAMILIES, default="binom")
        parser.add_argument("--kappa", type=int, help="Attempts per stratum (binom); defaults to the file's kappa_attempted")
        parser.add_argument("--lambda-max", type=float)
        parser.add_argument("--bernoulli-eta", choices=["theta", "theta_squared"])
        parser.add_argument("--mode", choices=MODES)
        parser.add_argument("--grid-res", type=int)
        parser.add_argument("--tol", type=float)
        parser.add_argument("--max-iter", type=int)
        parser.add_argument("--starts", type=int, help="EM starts; extra starts are seeded Dirichlet draws")
        parser.add_argument("--seed", type=int)
        parser.add_argument("--threshold", type=float, help="Report grid atoms with weight above this")
        parser.add_argument("--out", help="Output JSON path (its directory must exist)")
        parser.add_argument("--record", action="store_true", help="Record the run in the run registry")

    def handle(self, *args, **opts):
        data_path = existing_file(opts["data"], "data")
        out_path = None
        if opts["out"]:
            out_path = Path(opts["out"])
            existing_dir(str(out_path.parent), "--out")

        given = overrides(opts, OPTIONS)
        try:
            strata = read_strata_csv(data_path, given["family"])
        except MalformedInputError as exc:
            raise usage_error(f"{data_path}: {exc}")
        if given["family"] == "binom":
            if given.get("kappa") is not None and given["kappa"] != strata.kappa:
                raise usage_error(f"--kappa {given['kappa']} disagrees with kappa_attempted={strata.kappa} in the file.")
            given["kappa"] = strata.kappa

        serializer = FitOptionsSerializer(data=given)
        if not serializer.is_valid():
            raise usage_error(serializer.errors)
        fit_opts = dict(serializer.validated_data)
        model = fit_opts.pop("model")

        try:
            result = FitController.fit(
                model,
                strata.observations,
                mode=fit_opts["mode"],
                grid_res=fit_opts["grid_res"],
                tol=fit_opts["tol"],
                max_iter=fit_opts["max_iter"],
                starts=fit_opts["starts"],
                seed=fit_opts["seed"],
                threshold=fit_opts["threshold"],
            )
        except GmleError as exc:
            raise runtime_error(exc)

        manifest = RunManifest(
            subcommand="fit",
            config={"model": model.describe(), **{k: fit_opts[k] for k in
                    ("mode", "grid_res", "tol", "max_iter", "starts", "seed", "threshold")}},
            inputs={"data": str(opts["data"])},
            outputs={"json": out_path.name} if out_path else {},
            seed=fit_opts["seed"],
            artifact_version=settings.ARTIFACT_VERSION,
        )

        est = result["estimate"]
        solver = result["solver"]
        eta_hat = ", ".join(f"{v:.4f}" for v in est["eta_hat"])
        naive = "n/a" if est["naive"] is None else ", ".join(f"{v:.4f}" for v in est["naive"])
        self.stdout.write(f"strata: {est['n_total']}  responders: {est['n_responders']}")
        self.stdout.write(f"GMLE eta_hat: {eta_hat}")
        self.stdout.write(f"Naive:        {naive}")
        self.stdout.write(
            f"loglik {solver['loglik']:.6f}  certificate {solver['certificate']:.3g}  "
            f"iterations {solver['iterations']}  starts {solver['starts']}"
        )
        if not solver["converged"]:
            self.stdout.write(self.style.WARNING("EM stopped at --max-iter before the certificate reached --tol"))
        for atom in result["support"][:10]:
            theta = ", ".join(f"{v:.3f}" for v in atom["theta"])
            self.stdout.write(f"  theta=({theta})  weight={atom['weight']:.4f}")

        written = []
        if out_path is not None:
            write_json(out_path, {"manifest": manifest.as_dict(), "fit": result})
            written.append(str(out_path))
            self.stdout.write(self.style.SUCCESS(f"Wrote {out_path}"))
        if opts["record"]:
            run = RunController.record_fit(manifest, result, written)
            self.stdout.write(self.style.SUCCESS(f"Recorded run {run.run_id}"))
