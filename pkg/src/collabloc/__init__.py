"""Collaborative indoor positioning from Wi-Fi fingerprints and Bluetooth ranges."""

from .config import Config, FusionConfig, load_config
from .events import BtSighting, EventStream, TimeWindow, WifiScan, ingest, window_events
from .geomap import FloorMap, Position, Trajectory, Wall, crosses_wall, position_at, segments_intersect
from .radio import LdplParams, distance_to_rss, rss_to_distance, sample_rss

__version__ = "0.1.0"

__all__ = [
    "Config", "FusionConfig", "load_config",
    "BtSighting", "EventStream", "TimeWindow", "WifiScan", "ingest", "window_events",
    "FloorMap", "Position", "Trajectory", "Wall", "crosses_wall", "position_at", "segments_intersect",
    "LdplParams", "distance_to_rss", "rss_to_distance", "sample_rss",
]
