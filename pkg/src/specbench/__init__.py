"""Model-based conformance testing for an array OT merge algorithm and a
pull-based replication protocol."""

__version__ = "0.1.0"
