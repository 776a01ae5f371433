from django.apps import AppConfig


class EnvAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.env'
    label = 'arena_env'
    verbose_name = 'Predator-Prey Environment'
