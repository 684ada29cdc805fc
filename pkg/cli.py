#!/usr/bin/env python
import os
import sys

if __name__ == "__main__":
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "conf.settings")
    import django

    django.setup()

    from mvsd.cli import cli

    sys.exit(cli(sys.argv[1:]))
