from .base import AgentConfig, RandomAgent, make_agent
from .buffer import ReplayBuffer, Transition
from .crossq import CrossQAgent
from .sac import SacAgent
from .td3 import DdpgAgent, Td3Agent
from .tqc import TqcAgent, truncate_pooled_quantiles

__all__ = [
    "AgentConfig",
    "CrossQAgent",
    "DdpgAgent",
    "RandomAgent",
    "ReplayBuffer",
    "SacAgent",
    "Td3Agent",
    "TqcAgent",
    "Transition",
    "make_agent",
    "truncate_pooled_quantiles",
]
