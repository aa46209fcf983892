"""
Utility functions and helpers for TWD Tools.

This package contains shared utilities:
- exceptions: Custom exception classes and their CLI exit codes
"""
