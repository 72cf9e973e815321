from django.contrib import admin

from ..models import MonitoringSession


@admin.register(MonitoringSession)
class MonitoringSessionAdmin(admin.ModelAdmin):
    list_display = [
        "id",
        "device_id",
        "started_at",
        "ended_at",
        "frames_received",
        "gap_count",
        "crc_failures",
        "refit_scheduled",
    ]
    list_filter = ["device_id"]
    actions = ["schedule_ica_refit"]

    @admin.action(description="Schedule ICA refit")
    def schedule_ica_refit(modeladmin, request, queryset):
        for session in queryset:
            session.schedule_ica_refit(reason="requested from admin")
