"""
Django settings for comm_arena project.

The project has no web surface: Django provides the management commands,
the run registry (ORM) and the logging/config plumbing for the lab.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""
from pathlib import Path

from decouple import config
import dj_database_url

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Logging paths and toggles
LOG_TO_FILE = config('LOG_TO_FILE', default=False, cast=bool)
LOG_LEVEL = config('LOG_LEVEL', default='INFO')
LOG_DIR = BASE_DIR / 'logs'
LOG_FILE = LOG_DIR / 'comm_arena.log'

# Create log directory only if file logging is enabled
if LOG_TO_FILE:
    LOG_DIR.mkdir(exist_ok=True)

SECRET_KEY = config('SECRET_KEY', default='comm-arena-local-only-key')
DEBUG = config('DEBUG', default=True, cast=bool)
ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',

    # Local apps
    'apps.diffnet',
    'apps.env',
    'apps.agents',
    'apps.training',
    'apps.metrics',
    'apps.experiments',
]

# Database (run registry only; results themselves live in files)
database_url = config('DATABASE_URL', default=f'sqlite:///{BASE_DIR / "db.sqlite3"}')
DATABASES = {
    'default': dj_database_url.parse(database_url, conn_max_age=600),
}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

USE_TZ = True
TIME_ZONE = 'UTC'

# Lab settings
ARENA_RESULTS_DIR = Path(config('ARENA_RESULTS_DIR', default=str(BASE_DIR / 'results')))
ARENA_DEFAULT_JOBS = config('ARENA_DEFAULT_JOBS', default=1, cast=int)
# Parameter components sampled per layer when a layer is too large to
# finite-difference exhaustively.
ARENA_GRADCHECK_SAMPLES = config('ARENA_GRADCHECK_SAMPLES', default=400, cast=int)

# Logging Configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
        # Optional file handler to avoid startup errors on read-only paths
        **({
            'file': {
                'class': 'logging.FileHandler',
                'filename': str(LOG_FILE),
                'formatter': 'verbose',
            }
        } if LOG_TO_FILE else {})
    },
    'root': {
        'handlers': ['console'] + (['file'] if LOG_TO_FILE else []),
        'level': 'WARNING',
    },
    'loggers': {
        'django': {
            'handlers': ['console'] + (['file'] if LOG_TO_FILE else []),
            'level': 'WARNING',
            'propagate': False,
        },
        'apps': {
            'handlers': ['console'] + (['file'] if LOG_TO_FILE else []),
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}
