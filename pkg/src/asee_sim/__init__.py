"""Closed-loop simulator for a dual depth-camera ultrasound end-effector."""

__version__ = "0.1.0"
