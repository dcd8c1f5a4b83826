#!/usr/bin/env python3
"""
Team Formation Tool CLI

A command-line interface for the team formation tool.
"""

import sys

from teamform.cli import main


if __name__ == "__main__":
    sys.exit(main())
