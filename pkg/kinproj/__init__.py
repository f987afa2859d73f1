"""Projective integration for discrete-velocity kinetic equations in the diffusion limit."""
