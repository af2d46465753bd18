"""Flash translation layer simulator and write-amplification toolkit."""

__version__ = "0.1.0"
