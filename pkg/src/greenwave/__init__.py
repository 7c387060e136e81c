"""Multi-agent signal control on a seeded point-queue traffic simulator."""

__version__ = "0.1.0"
