"""Slotted CSMA/CA MAC simulation for energy-harvesting nanonetworks."""

__version__ = "0.1.0"
