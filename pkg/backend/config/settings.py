from pathlib import Path
import os

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

load_dotenv(BASE_DIR / ".env")


# The project runs as management commands only; the key just satisfies Django.
SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "mnar-gmle-local-only")

DEBUG = os.getenv("DJANGO_DEBUG", "False") == "True"

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    "core.apps.CoreConfig",
]


# Database (run registry only)

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.getenv("GMLE_DB_PATH", str(BASE_DIR / 'db.sqlite3')),
    }
}


LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Solver defaults; every value can be overridden from backend/.env
GMLE = {
    "TOL": float(os.getenv("GMLE_TOL", "1e-6")),
    "MAX_ITER": int(os.getenv("GMLE_MAX_ITER", "200000")),
    "GRID_RES": int(os.getenv("GMLE_GRID_RES", "50")),
    "WEIGHT_FLOOR": float(os.getenv("GMLE_WEIGHT_FLOOR", "1e-12")),
    "REPORT_THRESHOLD": float(os.getenv("GMLE_REPORT_THRESHOLD", "1e-6")),
    "POISSON_LAMBDA_MAX": float(os.getenv("GMLE_POISSON_LAMBDA_MAX", "10")),
}

# Simulation harness defaults
SIMULATION = {
    "SEED": int(os.getenv("SIM_SEED", "20240611")),
    "REPLICATIONS": int(os.getenv("SIM_REPLICATIONS", "50")),
    "JOBS": int(os.getenv("SIM_JOBS", "1")),
    "MAX_FAILED_FRACTION": float(os.getenv("SIM_MAX_FAILED_FRACTION", "0.10")),
}

ARTIFACT_VERSION = os.getenv("ARTIFACT_VERSION", "1.0")


LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "plain",
        },
    },
    "loggers": {
        "core": {
            "handlers": ["console"],
            "level": os.getenv("DJANGO_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}
