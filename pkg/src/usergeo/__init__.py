"""User geolocation from extended mention/follower multigraphs and tweet text."""

__version__ = "0.1.0"
