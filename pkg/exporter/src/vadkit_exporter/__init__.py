from .export import ExportError, ExportJob, dense_features, export, load_backbone, verify
from .fmapio import FmapFormatError, read_fmap, write_fmap

__version__ = "0.1.0"
