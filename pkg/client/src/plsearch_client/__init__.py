"""plsearch_client: SDK for the plsearch reward and curation service."""

__version__ = "0.1.0"

from .client import (
    BadRequestError,
    BatchTooLargeError,
    Client,
    ClientConfig,
    ClientError,
    RetryExhaustedError,
)
from .jsonl import iter_jsonl, write_jsonl

__all__ = [
    "__version__",
    "BadRequestError",
    "BatchTooLargeError",
    "Client",
    "ClientConfig",
    "ClientError",
    "RetryExhaustedError",
    "iter_jsonl",
    "write_jsonl",
]
