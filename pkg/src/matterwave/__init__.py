"""Two-channel wavepacket dynamics and iterative matter-wave pulse shaping."""
__version__ = "0.1.0"
