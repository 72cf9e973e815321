from django.contrib import admin

from ..models import MotionAlert, SeizureEvent


@admin.register(SeizureEvent)
class SeizureEventAdmin(admin.ModelAdmin):
    list_display = ["id", "session", "onset_s", "detected_s", "peak_probability", "top_channels"]
    list_filter = ["session"]


@admin.register(MotionAlert)
class MotionAlertAdmin(admin.ModelAdmin):
    list_display = ["id", "session", "start_s", "end_s", "peak_accel_g", "peak_gyro_dps", "severity"]
    list_filter = ["severity"]
