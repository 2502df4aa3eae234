"""
WSGI config for dscnet_project project.

It exposes the WSGI callable as a module-level variable named ``application``,
serving the read-only run ledger API.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'dscnet_project.settings')

application = get_wsgi_application()
