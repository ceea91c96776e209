"""Exception hierarchy shared by the engine modules."""

from __future__ import annotations


class ReactorDBError(Exception):
    """Base class for engine errors."""


class ConfigurationError(ReactorDBError):
    """A deployment, schema or table lookup is invalid."""


class ContractViolation(ReactorDBError):
    """An internal protocol precondition was broken by the caller."""


class TransactionFailure(ReactorDBError):
    """Raised inside a (sub-)transaction; the root transaction aborts."""


class UnknownReactor(TransactionFailure):
    pass


class UnknownFunction(TransactionFailure):
    pass


class ConcurrentContextAccess(TransactionFailure):
    """Two sub-transactions of one root tried to use the same container context at once."""


class SubTransactionFailed(TransactionFailure):
    pass
