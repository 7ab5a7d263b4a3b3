"""Simulation of RRTs, nearest neighbour trees and their covering/depth statistics."""

__version__ = "0.1.0"
