"""ROI-guided baseline JPEG codec."""

from .decoder import JpegError, TruncatedStreamError, UnsupportedFeatureError, decode, decode_levels
from .encoder import (
    JpegStream,
    RoiCodecConfig,
    block_weights,
    encode,
    encode_roi,
    multipliers,
    stream_stats,
)
from .tables import ZIGZAG, quant_table

__all__ = [
    "JpegError",
    "JpegStream",
    "RoiCodecConfig",
    "TruncatedStreamError",
    "UnsupportedFeatureError",
    "ZIGZAG",
    "block_weights",
    "decode",
    "decode_levels",
    "encode",
    "encode_roi",
    "multipliers",
    "quant_table",
    "stream_stats",
]
