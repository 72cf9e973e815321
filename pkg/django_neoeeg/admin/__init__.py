from .events import MotionAlertAdmin, SeizureEventAdmin
from .scheduled_refit import ScheduledIcaRefitAdmin
from .session import MonitoringSessionAdmin
