"""Image-dataset embedding exporter for the MSCE container."""

__version__ = "0.1.0"

from .backbone import BackboneError, load_backbone
from .extract import DatasetError, ExtractionSpec, extract
from .writer import MsceWriter
