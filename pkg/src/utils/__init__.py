"""
Utility modules for nnpost.
"""

from .logger import setup_logging, get_logger
from .error_handler import ErrorHandler, get_error_handler

__all__ = ['setup_logging', 'get_logger', 'ErrorHandler', 'get_error_handler']
