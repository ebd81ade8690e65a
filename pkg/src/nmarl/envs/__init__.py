"""Environments: the CACC platoon and the synthetic queueing chain."""
from ..errors import ConfigError
from .cacc import CaccEnv
from .chain import ChainEnv

ENVIRONMENTS = ("cacc_catchup", "cacc_slowdown", "chain")


def make_env(name, train_mode=False, **kw):
    if name == "cacc_catchup":
        return CaccEnv("catchup", train_mode=train_mode, **kw)
    if name == "cacc_slowdown":
        return CaccEnv("slowdown", train_mode=train_mode, **kw)
    if name == "chain":
        return ChainEnv(**kw)
    raise ConfigError(f"unknown environment {name!r}; valid: {', '.join(ENVIRONMENTS)}")


__all__ = ["CaccEnv", "ChainEnv", "ENVIRONMENTS", "make_env"]
