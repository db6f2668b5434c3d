from .codec import Message, WireError, decode, decode_value, encode, encode_value
from .messages import *  # noqa: F401,F403
from .messages import __all__ as _msg_all
from .transport import CLOSED, ChannelClosed, Endpoint, connect

__all__ = [
    "Message",
    "WireError",
    "decode",
    "encode",
    "encode_value",
    "decode_value",
    "CLOSED",
    "ChannelClosed",
    "Endpoint",
    "connect",
    *_msg_all,
]
