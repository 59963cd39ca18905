"""Visual question answering over synthetic geospatial scenes."""

__version__ = "0.1.0"
