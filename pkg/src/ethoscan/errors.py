"""Shared exception base for all ethoscan modules."""


class EthoscanError(Exception):
    """Base class for every error raised by this package.

    The CLI maps any EthoscanError to a structured stderr message and
    exit code 3; everything else is a bug.
    """
