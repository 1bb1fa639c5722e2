"""Moving-object detection in turbulent, camera-shaken video from dense optical flow."""

__version__ = "0.1.0"
