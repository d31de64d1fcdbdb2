from afford.reasoner.core import (
    HeuristicProvider,
    Provider,
    ProviderConfig,
    RecordingProvider,
    RemoteProvider,
    ReplayProvider,
    StructuredRequest,
    complete_structured,
    make_provider,
    make_request,
    record_fixture,
    request_key,
)
from afford.reasoner.schemas import FEATURES, SCHEMA_IDS

__all__ = [
    "FEATURES",
    "SCHEMA_IDS",
    "HeuristicProvider",
    "Provider",
    "ProviderConfig",
    "RecordingProvider",
    "RemoteProvider",
    "ReplayProvider",
    "StructuredRequest",
    "complete_structured",
    "make_provider",
    "make_request",
    "record_fixture",
    "request_key",
]
