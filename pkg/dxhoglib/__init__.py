"""Simulation, verification and communication bounds for distributed XEB heavy output generation."""

import jax

# Amplitudes, bounds and gradients are all compared at 1e-10 or tighter.
jax.config.update("jax_enable_x64", True)
