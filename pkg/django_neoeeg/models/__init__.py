from .events import MotionAlert, SeizureEvent
from .scheduled_refit import ScheduledIcaRefit
from .session import MonitoringSession
