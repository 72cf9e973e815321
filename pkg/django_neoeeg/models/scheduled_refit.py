from django.db import models
from django.utils import timezone

from ..managers import ScheduledIcaRefitManager


class ScheduledIcaRefit(models.Model):
    session = models.ForeignKey(
        "django_neoeeg.MonitoringSession",
        on_delete=models.CASCADE,
        related_name="ica_refits",
    )
    reason = models.CharField(max_length=255, blank=True, default="")
    scheduled_at = models.DateTimeField(auto_now_add=True)
    completed_at = models.DateTimeField(null=True, blank=True)

    objects = ScheduledIcaRefitManager()

    class Meta:
        ordering = ["scheduled_at"]

    def mark_completed(self) -> "ScheduledIcaRefit":
        self.completed_at = timezone.now()
        self.save(update_fields=["completed_at"])
        return self
