"""Reparameterised feature aggregation, dynamic-convolution attention and panoptic evaluation."""

from .aggregator import AggregatorWeights, PyramidFeatures, aggregate_cfa, aggregate_ifa, fuse, reparameterize
from .decoder import DecoderConfig, DecoderWeights, decode
from .panoptic import ClassTable, PanopticMap, hungarian, merge, pq_evaluate
from .tensor import Rng, summation

__version__ = "0.1.0"

__all__ = [
    "AggregatorWeights", "PyramidFeatures", "aggregate_cfa", "aggregate_ifa", "fuse", "reparameterize",
    "DecoderConfig", "DecoderWeights", "decode",
    "ClassTable", "PanopticMap", "hungarian", "merge", "pq_evaluate",
    "Rng", "summation",
]
