"""Multicomponent compressible flow with Maxwell-Stefan diffusion."""
