#!/usr/bin/env python3
# mkcnet module
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:

from setuptools import setup
# See setup.cfg
setup(setup_requires=['pbr'],
      pbr=True,
      )
