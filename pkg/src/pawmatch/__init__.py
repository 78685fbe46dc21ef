"""pawmatch: contrastive pet re-identification and lost-pet matching."""

__version__ = "0.1.0"
