"""Dark-channel-guided desmoking of laparoscopic images."""

__version__ = "0.1.0"
