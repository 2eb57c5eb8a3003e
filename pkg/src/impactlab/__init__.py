"""Price-impact measurement toolkit: tick ingest, Lee-Ready classification,
binned impact curves, power-law fits and master-curve collapse."""

__version__ = "0.1.0"
