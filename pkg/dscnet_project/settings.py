"""
Django settings for dscnet_project project.

Hosts the unsupervised video grounding pipeline: management commands for
every stage, a run ledger in the database and a read-only API over it.

For more information on this file, see
https://docs.djangoproject.com/en/6.0/topics/settings/
"""

from pathlib import Path
from dotenv import load_dotenv
import os

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv('SECRET_KEY', 'dscnet-insecure-development-key')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.getenv('DEBUG', 'True') == 'True'

ALLOWED_HOSTS = [host for host in os.getenv('ALLOWED_HOSTS', '').split(',') if host]


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
    'rest_framework',
    'django_filters',
    'grounding',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'dscnet_project.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'dscnet_project.wsgi.application'


# Database
# The run ledger is small; SQLite is the default, any Django backend works.

DATABASES = {
    'default': {
        'ENGINE': os.getenv('DB_ENGINE', 'django.db.backends.sqlite3'),
        'NAME': os.getenv('DB_NAME', str(BASE_DIR / 'db.sqlite3')),
        'USER': os.getenv('DB_USER', ''),
        'PASSWORD': os.getenv('DB_PASSWORD', ''),
        'HOST': os.getenv('DB_HOST', ''),
        'PORT': os.getenv('DB_PORT', ''),
    }
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


STATIC_URL = 'static/'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

REST_FRAMEWORK = {
    'DEFAULT_FILTER_BACKENDS': [
        'django_filters.rest_framework.DjangoFilterBackend',
        'rest_framework.filters.OrderingFilter',
    ],
    'DEFAULT_PAGINATION_CLASS': 'rest_framework.pagination.PageNumberPagination',
    'PAGE_SIZE': 20,
}


# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'grounding': {
            'handlers': ['console'],
            'level': os.getenv('DSCNET_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# Pipeline defaults. Every key can be overridden with DSCNET_<KEY> in the
# environment (or .env); run config files override both.

DSCNET = {
    'num_necks': 4,
    'num_clusters': 16,
    'neck_dim': 32,
    'joint_dim': 64,
    'sentence_dim': 64,
    'word_dim': 32,
    'max_query_length': 10,
    'decoder_hidden': 0,
    'dqa_lambda': 0.5,
    'alpha_w': 0.5,
    'beta_w': 0.5,
    'alpha_v': 0.5,
    'beta_v': 0.5,
    'theta': 1.0,
    'tau1': 0.0001,
    'tau2': 0.0001,
    'tau3': 0.5,
    'threshold': 0.9,
    'centers_per_batch': 4,
    'videos_per_batch': 8,
    'iterations': 5,
    'language_lr': 0.0001,
    'video_lr': 0.0005,
    'language_epochs': 30,
    'language_batch_size': 16,
    'attention_heads': 4,
    'positional_encoding': False,
    'ncut_sigma': 0.0,
    'kmeans_restarts': 8,
    'kmeans_max_iter': 100,
    'center_selection': 'center',
    'top_n': 5,
    'workers': 1,
    'checkpoint_every': 0,
    'seed': 0,
}

for _key in DSCNET:
    _value = os.getenv(f'DSCNET_{_key.upper()}')
    if _value is not None:
        DSCNET[_key] = _value
