import django.db.models.deletion
from django.db import migrations, models


def _id():
    return (
        "id",
        models.BigAutoField(
            auto_created=True,
            primary_key=True,
            serialize=False,
            verbose_name="ID",
        ),
    )


def _session_fk(related_name):
    return (
        "session",
        models.ForeignKey(
            on_delete=django.db.models.deletion.CASCADE,
            related_name=related_name,
            to="django_neoeeg.monitoringsession",
        ),
    )


class Migration(migrations.Migration):
    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="MonitoringSession",
            fields=[
                _id(),
                ("device_id", models.CharField(max_length=64)),
                ("endpoint", models.CharField(blank=True, default="", max_length=255)),
                ("started_at", models.DateTimeField(auto_now_add=True)),
                ("ended_at", models.DateTimeField(blank=True, null=True)),
                (
                    "session_file",
                    models.CharField(
                        blank=True,
                        default="",
                        help_text="Path of the recorded session file, if any.",
                        max_length=1024,
                    ),
                ),
                ("frames_received", models.PositiveBigIntegerField(default=0)),
                ("gap_count", models.PositiveIntegerField(default=0)),
                ("crc_failures", models.PositiveIntegerField(default=0)),
            ],
            options={"ordering": ["-started_at"]},
        ),
        migrations.CreateModel(
            name="SeizureEvent",
            fields=[
                _id(),
                ("onset_s", models.FloatField()),
                ("detected_s", models.FloatField()),
                ("peak_probability", models.FloatField()),
                (
                    "top_channels",
                    models.CharField(
                        blank=True,
                        default="",
                        help_text="Comma-separated bipolar channels ranked by relevance.",
                        max_length=255,
                    ),
                ),
                _session_fk("seizure_events"),
            ],
            options={"ordering": ["session", "onset_s"]},
        ),
        migrations.CreateModel(
            name="MotionAlert",
            fields=[
                _id(),
                ("start_s", models.FloatField()),
                ("end_s", models.FloatField()),
                ("peak_accel_g", models.FloatField()),
                ("peak_gyro_dps", models.FloatField()),
                (
                    "severity",
                    models.CharField(
                        choices=[("minor", "minor"), ("major", "major")], max_length=8
                    ),
                ),
                _session_fk("motion_alerts"),
            ],
            options={"ordering": ["session", "start_s"]},
        ),
        migrations.CreateModel(
            name="ScheduledIcaRefit",
            fields=[
                _id(),
                ("reason", models.CharField(blank=True, default="", max_length=255)),
                ("scheduled_at", models.DateTimeField(auto_now_add=True)),
                ("completed_at", models.DateTimeField(blank=True, null=True)),
                _session_fk("ica_refits"),
            ],
            options={"ordering": ["scheduled_at"]},
        ),
    ]
