"""Desk-scale spiking cross-modal retrieval.

Float token features from both modalities are spiked, mixed by spike
self-attention, aligned through bidirectional hard alignment, and (during
training only) fused at the spike level into soft-label embeddings.  A
theoretical energy ledger accounts for every inference-path layer.
"""

from .alignment import (
    PoolConfig,
    biha_enhance,
    fine_similarity,
    hard_align_region,
    hard_align_word,
    lse_pool,
    similarity,
)
from .config import RunConfig, load_config, parse_config
from .data import Dataset, load_manifest, synth_dataset
from .energy import EnergyConstants, EnergyReport, energy_report, firing_rate
from .fusion import FusionConfig, SpikeFusion, comb_mask
from .losses import LossWeights, infonce_pair, total_loss
from .model import RetrievalModel
from .neurons import LIFParams, NeuronState, TLSNParams, lif_sequence, lif_step
from .tensor import Tensor, no_grad, smooth_spike_mode, spike_threshold
from .train import ablation_sweep, evaluate_recall, train

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "EnergyConstants",
    "EnergyReport",
    "FusionConfig",
    "LIFParams",
    "LossWeights",
    "NeuronState",
    "PoolConfig",
    "RetrievalModel",
    "RunConfig",
    "TLSNParams",
    "Tensor",
    "ablation_sweep",
    "biha_enhance",
    "comb_mask",
    "energy_report",
    "evaluate_recall",
    "fine_similarity",
    "firing_rate",
    "hard_align_region",
    "hard_align_word",
    "infonce_pair",
    "lif_sequence",
    "lif_step",
    "load_config",
    "load_manifest",
    "lse_pool",
    "no_grad",
    "parse_config",
    "similarity",
    "smooth_spike_mode",
    "spike_threshold",
    "synth_dataset",
    "total_loss",
    "train",
]
