from django.contrib import admin
from django.db import models
from django.utils import timezone

from ..managers import SessionManager
from .scheduled_refit import ScheduledIcaRefit


class MonitoringSession(models.Model):
    device_id = models.CharField(max_length=64)
    endpoint = models.CharField(max_length=255, blank=True, default="")
    started_at = models.DateTimeField(auto_now_add=True)
    ended_at = models.DateTimeField(null=True, blank=True)
    session_file = models.CharField(
        max_length=1024,
        blank=True,
        default="",
        help_text="Path of the recorded session file, if any.",
    )
    frames_received = models.PositiveBigIntegerField(default=0)
    gap_count = models.PositiveIntegerField(default=0)
    crc_failures = models.PositiveIntegerField(default=0)

    objects = SessionManager()

    class Meta:
        ordering = ["-started_at"]

    def __str__(self) -> str:
        return f"{self.device_id} @ {self.started_at:%Y-%m-%d %H:%M:%S}"

    def close(self, frames_received: int = 0, gap_count: int = 0, crc_failures: int = 0):
        self.ended_at = timezone.now()
        self.frames_received = frames_received
        self.gap_count = gap_count
        self.crc_failures = crc_failures
        self.save(update_fields=["ended_at", "frames_received", "gap_count", "crc_failures"])
        return self

    @admin.display(boolean=True)
    def is_open(self) -> bool:
        return self.ended_at is None

    @admin.display(boolean=True)
    def refit_scheduled(self) -> bool:
        """
        Return `True` if an ICA refit is waiting for this session,
        `False` otherwise.
        """
        return ScheduledIcaRefit.objects.for_session(self).pending().exists()

    def schedule_ica_refit(self, reason: str = "") -> ScheduledIcaRefit:
        refit, _ = ScheduledIcaRefit.objects.for_session(self).pending().get_or_create(
            session=self, completed_at=None, defaults={"reason": reason}
        )
        return refit
