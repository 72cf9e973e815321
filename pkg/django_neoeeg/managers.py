from django.db import models


class SessionQuerySet(models.QuerySet):
    def open_session(self):
        """Sessions still receiving data."""
        return self.filter(ended_at__isnull=True)

    def for_device(self, device_id: str):
        return self.filter(device_id=device_id)


class SessionManager(models.Manager.from_queryset(SessionQuerySet)):  # type: ignore[misc]
    def start(self, device_id: str, endpoint: str = "", **kwargs):
        return self.create(device_id=device_id, endpoint=endpoint, **kwargs)


class SessionEventQuerySet(models.QuerySet):
    def for_session(self, session):
        return self.filter(session=session)


class SessionEventManager(models.Manager.from_queryset(SessionEventQuerySet)):  # type: ignore[misc] # noqa: E501
    pass


class ScheduledIcaRefitQuerySet(SessionEventQuerySet):
    def pending(self):
        return self.filter(completed_at__isnull=True)


class ScheduledIcaRefitManager(models.Manager.from_queryset(ScheduledIcaRefitQuerySet)):  # type: ignore[misc] # noqa: E501
    pass
