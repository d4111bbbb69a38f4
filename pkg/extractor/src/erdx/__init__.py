"""Relation-description enrichment and encoding pipeline."""

__version__ = "0.1.0"
