"""Event-camera visual odometry with a hierarchical resonator network."""

__version__ = "0.1.0"
