"""STFT-KAN layers and the liteDGCNN point-cloud classifier in plain numpy."""

from .errors import (CheckpointError, ConfigError, DataError, DimensionError, FormatError,
                     NumericalError, ParseError, StftKanError, UsageError)
from .fourier_kan import FourierKanLayer
from .model import Architecture, LiteDgcnn, StftLayerSpec, Variant, build, param_count
from .stft_kan import StftKanConfig, StftKanLayer, num_windows
from .windows import WindowKind, WindowSpec, make_window

__version__ = "0.1.0"
