"""Signal-companding data augmentation for synthetic speech detection."""

__version__ = "0.1.0"
