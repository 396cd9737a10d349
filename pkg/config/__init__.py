"""
Configuration package
"""

from .config import config, load_config, SystemConfig
