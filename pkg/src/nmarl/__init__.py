"""Networked multi-agent actor-critic with differentiable neighborhood communication."""
from .agents import PROTOCOLS, AgentConfig, AgentPolicy, MultiAgentSystem, message_size
from .config import RunConfig, resolve
from .errors import ConfigError
from .graph import AgentGraph

__version__ = "0.1.0"

__all__ = ["PROTOCOLS", "AgentConfig", "AgentPolicy", "MultiAgentSystem", "message_size",
           "RunConfig", "resolve", "ConfigError", "AgentGraph"]
