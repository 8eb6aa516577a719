"""Wire protocol: frame codec and socket-backed frame channels."""

from src.protocol.channel import ChannelMode, FrameChannel
from src.protocol.wire import Frame, FrameKind, JoinPayload, decode_frame, encode_frame

__all__ = [
    "ChannelMode",
    "FrameChannel",
    "Frame",
    "FrameKind",
    "JoinPayload",
    "decode_frame",
    "encode_frame",
]
