import uuid

from django.db import models
from django.db.models import JSONField


# Generates unique IDs for recorded runs
def runid():
    return "RUN" + uuid.uuid4().hex[:8].upper()


class Subcommand(models.TextChoices):
    SIMULATE = "simulate", "Simulate"
    FIT = "fit", "Fit"


#One recorded simulate/fit invocation. Kept out of the artifact files, so reruns stay byte-identical.
class ExperimentRun(models.Model):
    run_id = models.CharField(max_length=20, unique=True, default=runid, editable=False)
    subcommand = models.CharField(max_length=20, choices=Subcommand.choices)
    label = models.CharField(max_length=200, blank=True, default="")
    manifest = JSONField(default=dict)
    summary = JSONField(default=list, blank=True)  # one dict per estimator row
    outputs = JSONField(default=list, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at", "-id"]
        indexes = [
            models.Index(fields=["subcommand"], name="run_subcommand_idx"),
            models.Index(fields=["created_at"], name="run_created_at_idx"),
        ]

    def __str__(self):
        return f"{self.run_id} {self.subcommand} {self.label}"
