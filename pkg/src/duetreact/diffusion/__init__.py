"""Latent conditional diffusion with contact-guided DDIM sampling."""
from .guidance import (DECODE_MODES, Stage1, contact_consistency_loss, contact_guidance_loss, decode_follower,
                       follower_global, mean_contact_distance)
from .model import CONDITION_PARTS, TARGET_PARTS, DiffusionConfig, LatentLayout, RCDiff
from .sampler import SampleResult, clip_guidance, ddim_step, guided_ddim_sample, guided_epsilon
from .schedule import (SCHEDULES, NoiseSchedule, cosine_schedule, ddim_timesteps, epsilon_from_x0, forward_diffuse,
                       linear_schedule, make_schedule)
from .train import (DiffusionTrainConfig, EncodedDuet, Reaction, diffusion_training_loss, encode_dataset, react,
                    train_diffusion)

__all__ = [name for name in dir() if not name.startswith("_")]
