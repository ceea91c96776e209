"""In-memory actor-relational database with nested asynchronous transactions."""

from .commit import CommitOutcome, RootResult
from .deployment import (ContainerSpec, DeploymentConfig, Placement, async_deployment,
                         parse_deployment, serial_deployment, sync_deployment)
from .errors import ConfigurationError, ReactorDBError, TransactionFailure
from .reactor import ReactorContext, ReactorHandle, ReactorType, Relation
from .runtime import Future, Runtime, bootstrap

__all__ = [
    "CommitOutcome", "ConfigurationError", "ContainerSpec", "DeploymentConfig", "Future",
    "Placement", "ReactorContext", "ReactorDBError", "ReactorHandle", "ReactorType", "Relation",
    "RootResult", "Runtime", "TransactionFailure", "async_deployment", "bootstrap",
    "parse_deployment", "serial_deployment", "sync_deployment",
]
