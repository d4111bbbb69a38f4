"""Zero-shot relational forecasting on temporal knowledge graphs.

Relation representations come from frozen text-encoder matrices aligned
into the forecaster's embedding space, so relations that never occur in
training remain scoreable; a relation-history learner captures temporal
relation patterns on top of those representations.
"""

__version__ = "0.1.0"
