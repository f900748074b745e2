"""Real-time flight-training assistant engine.

Monitors simulated flight telemetry at 1 Hz, scores it against task
standards, retrieves flight expertise from a tiered knowledge base,
generates corrective guidance through a pluggable model backend, and
renders that guidance as EMS waveform commands plus voice-prompt events.
"""

__version__ = "0.1.0"
