from .config import ServerConfig, load_config
from .session import Close, Send, SessionCore
from .ws import SurfaceSyncServer, replay_trace

__all__ = [
    "Close",
    "Send",
    "ServerConfig",
    "SessionCore",
    "SurfaceSyncServer",
    "load_config",
    "replay_trace",
]
