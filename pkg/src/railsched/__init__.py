"""Optimal timetables for double-track lines with capacitated stations."""

__version__ = "0.1.0"
