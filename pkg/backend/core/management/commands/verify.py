from __future__ import annotations

import json

from django.core.management.base import BaseCommand

from core.boundary.cli import runtime_error, usage_error
from core.Control.verify_controller import SUITES, VerifyController
from core.exceptions import GmleError


class Command(BaseCommand):
    help = "Run a property suite and print PASS/FAIL per property; exits 1 if any property fails."

    def add_arguments(self, parser):
        parser.add_argument("suite", choices=SUITES)
        parser.add_argument("--datasets", type=int, help="lemma1/identity: number of seeded datasets (default 1)")
        parser.add_argument("--starts", type=int, help="lemma1/identity: EM starts per dataset (default 5)")
        parser.add_argument("--n-strata", type=int)
        parser.add_argument("--grid-res", type=int)
        parser.add_argument("--tol", type=float)
        parser.add_argument("--max-iter", type=int)
        parser.add_argument("--reps", type=int, help="consistency: replications per sample size")
        parser.add_argument("--jobs", type=int)
        parser.add_argument("--instances", type=int, help="oracle: number of random instances (default 50)")
        parser.add_argument("--seed", type=int)

    def handle(self, *args, **opts):
        for key in ("datasets", "starts", "n_strata", "grid_res", "max_iter", "reps", "jobs", "instances"):
            if opts[key] is not None and opts[key] < 1:
                raise usage_error(f"--{key.replace('_', '-')} must be >= 1.")
        options = {k: opts[k] for k in
                   ("datasets", "starts", "n_strata", "grid_res", "tol", "max_iter", "reps", "jobs", "instances", "seed")}
        try:
            checks = VerifyController.run(opts["suite"], **options)
        except GmleError as exc:
            raise runtime_error(exc)

        failed = []
        for check in checks:
            observed = json.dumps(check.observed, default=float)
            if check.passed:
                self.stdout.write(self.style.SUCCESS(f"PASS {check.name}") + f"  {observed}")
            else:
                self.stdout.write(self.style.ERROR(f"FAIL {check.name}") + f"  {observed}")
                failed.append(f"{check.name} {observed}")
        if failed:
            raise runtime_error(f"Suite {opts['suite']} failed: " + "; ".join(failed))
        self.stdout.write(self.style.SUCCESS(f"Suite {opts['suite']}: all {len(checks)} properties passed"))
