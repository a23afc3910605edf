"""Thin wire client for the perceptrl reward-scoring service."""

from .client import (
    SUPPORTED_ENGINE_MAJOR,
    ClientConfig,
    CompatibilityError,
    RewardClient,
    ServiceError,
    TransportError,
)

__all__ = [
    "ClientConfig",
    "CompatibilityError",
    "RewardClient",
    "ServiceError",
    "SUPPORTED_ENGINE_MAJOR",
    "TransportError",
]
__version__ = "0.1.0"
