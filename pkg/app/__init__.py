"""
HumanSR - суперразрешение видео с человеком по HR эталонным кадрам
"""

__version__ = "0.1.0"
__author__ = "HumanSR Team"
