from .protocol import ClientCommand, ErrorMessage, LeaderboardMessage, StateMessage
from .session import Session, summarize_baseline_csv

__all__ = [
    "ClientCommand",
    "ErrorMessage",
    "LeaderboardMessage",
    "Session",
    "StateMessage",
    "summarize_baseline_csv",
]
