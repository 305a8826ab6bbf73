"""One-shot federated learning by two-tier knowledge transfer."""

from .domain import Dataset, Example, PrivacyLevel, VoteHistogram, make_rng
from .models import ModelSpec
from .transfer import FedKtConfig, run_fedkt

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "Example",
    "FedKtConfig",
    "ModelSpec",
    "PrivacyLevel",
    "VoteHistogram",
    "make_rng",
    "run_fedkt",
]
