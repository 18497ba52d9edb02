"""flowdistill: desk-scale teacher-student distillation for dense optical flow."""

__version__ = "0.1.0"
