"""Self-partitioning cell-free mmWave MIMO downlink simulator."""

from .channel import NetworkConfig, sample_channel, sample_geometry
from .partitioning import ClusterConfig, ConfigSpace

__all__ = ["NetworkConfig", "sample_geometry", "sample_channel",
           "ClusterConfig", "ConfigSpace"]
__version__ = "0.1.0"
