from .types import FlowField, FramePair, ImageFrame
from .flo_io import (
    FLO_MAGIC,
    FloCorruptError,
    FloDimensionError,
    FloError,
    FloFormatError,
    read_flo,
    write_flo,
)
from .image_io import ImageIOError, read_image, write_image
from .colorize import flow_to_color, make_color_wheel
from .preprocess import crop_center, crop_to_multiple

__all__ = [
    "FlowField",
    "FramePair",
    "ImageFrame",
    "FLO_MAGIC",
    "FloError",
    "FloFormatError",
    "FloCorruptError",
    "FloDimensionError",
    "read_flo",
    "write_flo",
    "ImageIOError",
    "read_image",
    "write_image",
    "flow_to_color",
    "make_color_wheel",
    "crop_center",
    "crop_to_multiple",
]
