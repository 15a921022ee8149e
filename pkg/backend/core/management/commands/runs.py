from django.core.management.base import BaseCommand

from core.Control.run_controller import RunController
from core.models import Subcommand


class Command(BaseCommand):
    help = "List recently recorded simulate/fit runs."

    def add_arguments(self, parser):
        parser.add_argument("--limit", type=int, default=20)
        parser.add_argument("--subcommand", choices=[c[0] for c in Subcommand.choices])

    def handle(self, *args, **opts):
        runs = RunController.list_runs(limit=opts["limit"], subcommand=opts["subcommand"])
        if not runs:
            self.stdout.write(self.style.WARNING("No recorded runs."))
            return
        for run in runs:
            self.stdout.write(
                f"{run['run_id']}  {run['created_at']}  {run['subcommand']:<8}  {run['label']}  "
                f"({run['rows']} row(s), {len(run['outputs'])} file(s))"
            )
