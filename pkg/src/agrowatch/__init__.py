"""Farm sensing and survey simulation: LoRa sensor nodes, a flight-readiness
gate, wind-aware survey planning, a UAV flight model and vegetation index maps."""

__version__ = "0.1.0"
