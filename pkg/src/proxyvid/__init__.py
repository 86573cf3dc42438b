"""Layered proxy-node video representation.

Videos are decomposed into semantic layers, each carrying sparse tracked
nodes with learned texture codes; a shared decoder turns barycentrically
blended codes into colour.
"""
from .appearance import DecoderParams, TrainConfig, decode, fit, freq_encode, interpolate_feature, loss_and_grads
from .config import PipelineConfig, load_config, preset
from .editing import EditConfig, edit_keyframe, inpaint
from .estimator import ProxyVideoModel, check_video
from .exceptions import (DegeneratePointSetError, EditError, EmptyLayerError, FormatError, FrameRangeError,
                         NonFiniteLossError, ProxyVidError, TrackingError, ZeroAreaTriangleError)
from .geometry import BarycentricCoords, Point2, Triangulation, barycentric, delaunay, locate, nearest_triangle_extension
from .io import load_pvr, read_pvt, save_pvr, write_pvt
from .metrics import psnr, ssim
from .pipeline import build_layers
from .propagation import PropagationConfig, ProxyLayer, build_layer
from .renderer import render_frame, render_superres, render_time
from .representation import Representation, param_count, trajectory_count, validate
from .synth import SceneSpec, generate, standard_suite
from .tracking import LKTracker, OracleTracker, PrecomputedTracker, TrackerQuery, TrackerResult
from .vectorizer import SeedNodes, VectorizerConfig, vectorize_layer
from .video import FrameSequence, LayerMaskTrack

__version__ = "0.1.0"
