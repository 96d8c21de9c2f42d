"""Capsule-network routing on a processing-in-memory cube: numerics, cost
model, memory structure, scheduler and simulator."""

__version__ = "0.1.0"
