from typing import Sequence

from django.db import models

from ..core import SeizureOnset
from ..managers import SessionEventManager
from ..stream.motion import MotionEvent, Severity


class SeizureEvent(models.Model):
    session = models.ForeignKey(
        "django_neoeeg.MonitoringSession",
        on_delete=models.CASCADE,
        related_name="seizure_events",
    )
    onset_s = models.FloatField()
    detected_s = models.FloatField()
    peak_probability = models.FloatField()
    top_channels = models.CharField(
        max_length=255,
        blank=True,
        default="",
        help_text="Comma-separated bipolar channels ranked by relevance.",
    )

    objects = SessionEventManager()

    class Meta:
        ordering = ["session", "onset_s"]

    @classmethod
    def from_onset(
        cls, session, onset: SeizureOnset, top_channels: Sequence[str] = ()
    ) -> "SeizureEvent":
        return cls.objects.create(
            session=session,
            onset_s=onset.t_onset_s,
            detected_s=onset.t_detected_s,
            peak_probability=onset.peak_probability,
            top_channels=",".join(top_channels),
        )

    @property
    def channels(self) -> list:
        return [c for c in self.top_channels.split(",") if c]


class MotionAlert(models.Model):
    session = models.ForeignKey(
        "django_neoeeg.MonitoringSession",
        on_delete=models.CASCADE,
        related_name="motion_alerts",
    )
    start_s = models.FloatField()
    end_s = models.FloatField()
    peak_accel_g = models.FloatField()
    peak_gyro_dps = models.FloatField()
    severity = models.CharField(
        max_length=8, choices=[(s.value, s.value) for s in Severity]
    )

    objects = SessionEventManager()

    class Meta:
        ordering = ["session", "start_s"]

    @classmethod
    def from_event(cls, session, event: MotionEvent) -> "MotionAlert":
        """Create or extend the alert that starts where `event` starts."""
        alert, _ = cls.objects.update_or_create(
            session=session,
            start_s=event.t_start_us / 1e6,
            defaults={
                "end_s": event.t_end_us / 1e6,
                "peak_accel_g": event.peak_accel_g,
                "peak_gyro_dps": event.peak_gyro_dps,
                "severity": event.severity.value,
            },
        )
        return alert
