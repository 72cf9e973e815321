from django.contrib import admin

from ..models import ScheduledIcaRefit


@admin.register(ScheduledIcaRefit)
class ScheduledIcaRefitAdmin(admin.ModelAdmin):
    list_display = ["id", "session", "reason", "scheduled_at", "completed_at"]
