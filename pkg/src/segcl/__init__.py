"""Event-graph contrastive learning for text representations."""

__version__ = "0.1.0"
