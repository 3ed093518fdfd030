"""Co-rotational beam analysis of fin-ray fingers and contact-force estimation
by displacement control."""

__version__ = "0.1.0"
