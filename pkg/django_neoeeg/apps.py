from django.apps import AppConfig


class NeoEEGConfig(AppConfig):
    name = "django_neoeeg"
    verbose_name = "NeoEEG monitoring"
    default_auto_field = "django.db.models.BigAutoField"
