"""Reactive duet motion: part-fused VQ latents and contact-guided latent diffusion."""
__version__ = "0.1.0"
