"""Shared live molecular-view sessions: relay, protocol, headless peer, simulator."""

__version__ = "0.1.0"
