"""Vector-quantized autoencoders for motion, trajectory and contact."""
from .aux import CONTACT_JOINTS, CONTACT_WIDTH, AuxVQConfig, ContactVQ, SequenceVQ, TrajectoryVQ, contact_from_logits
from .nets import ConvDecoder, ConvEncoder, levels_for
from .partfusion import MODES, PartFusionVQ, VQConfig, merge_parts, split_parts
from .quantize import (Codebook, LatentCode, codebook_loss, commitment_loss, focal_loss, nearest_indices, quantize,
                       quantize_st, reconstruction_loss, temporal_diff)
from .train import (TrainingDiverged, TrainResult, VQTrainConfig, motion_arrays, rng_stream, train_contact_vq,
                    train_trajectory_vq, train_vq)

__all__ = [name for name in dir() if not name.startswith("_")]
