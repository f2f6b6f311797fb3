"""Bayesian-network learning over vertically partitioned data.

Counts are answered by a secure scalar-product protocol between in-process
parties; ``Central`` offers the same methods over pooled plaintext data.
"""

from ._core import (
    MISSING,
    AlignmentError,
    Attribute,
    Central,
    ConfigError,
    Dataset,
    DegenerateEvidenceError,
    DomainError,
    Error,
    Federation,
    FormatError,
    LocalityError,
    Network,
    PartitionError,
    ProtocolError,
    RegistrationError,
    SchemaError,
    SessionError,
    SizingError,
    Structure,
    TransportError,
    UndefinedAucError,
    auc,
    em,
    equal_split,
    inject_missing,
    load_csv,
    load_network,
    load_structure,
    parse_network,
    run_config,
    scalar_product,
    subprotocol_count,
    validate_public,
)

__all__ = [name for name in dir() if not name.startswith("_")]
