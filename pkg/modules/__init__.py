"""Laboratorio de Domain Guided Dropout a escala de escritorio"""

__version__ = "1.0.0"
