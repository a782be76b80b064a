from .skills import (DEFAULT_SENSITIVE_SKILLS, ExecutionResult, SkillError, execute,
                     parse_task)
from .service import DEFAULT_PORT, GatewayApp, GatewayServer
from .stores import GatewayState, StoreError

__all__ = [
    "DEFAULT_PORT", "DEFAULT_SENSITIVE_SKILLS", "ExecutionResult", "GatewayApp",
    "GatewayServer", "GatewayState", "SkillError", "StoreError", "execute", "parse_task",
]
