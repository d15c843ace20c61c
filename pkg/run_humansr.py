#!/usr/bin/env python3
"""
Скрипт запуска HumanSR из корня репозитория

    python run_humansr.py fixture --out demo --scale 4
    python run_humansr.py pipeline --manifest demo/manifest.json
"""

import sys

from app.main import main

if __name__ == "__main__":
    sys.exit(main())
