"""Glue from a masked video to proxy layers (vectorize, then propagate)."""
from __future__ import annotations

import logging

from .propagation import PropagationConfig, build_layer
from .vectorizer import VectorizerConfig, vectorize_layer

__all__ = ["seed_layer", "build_layers"]

log = logging.getLogger(__name__)


def seed_layer(video, track, config=None):
    """Seeds of one mask track at its first frame; returns (seeds, truncated)."""
    config = config or VectorizerConfig()
    t0 = track.t_start
    seeds = vectorize_layer(video.frames[t0], track.mask_at(t0), config, frame=t0)
    cap = config.max_seed_nodes if config.max_interior is None else min(
        config.max_seed_nodes, len(seeds.edge_points) + config.max_interior)
    return seeds, len(seeds) >= cap


def build_layers(video, tracker, vec_config=None, prop_config=None):
    """One :class:`ProxyLayer` per mask track of ``video``, in layer order."""
    prop_config = prop_config or PropagationConfig()
    vec_config = vec_config or VectorizerConfig(spacing=prop_config.eps_d / 2.0)
    layers = []
    for track in video.layers:
        seeds, truncated = seed_layer(video, track, vec_config)
        layer = build_layer(seeds, tracker, video, prop_config, track=track, seed_truncated=truncated)
        log.info("layer %d: %d nodes, %d rounds", track.layer_id, layer.n_nodes, layer.n_rounds)
        layers.append(layer)
    return layers
