"""Social-relationship classification of pedestrian pairs from trajectory readings."""

__version__ = "0.1.0"
