from django.apps import AppConfig


class DiffnetConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.diffnet'
    verbose_name = 'Differentiable Networks'
