"""Default values for the tracking pipeline.

Every tunable of :class:`mtmct_tracker.config.PipelineConfig` takes its default
from this module. Values can be overridden with a flat JSON config document
whose keys are lowercase versions of the names below, without the ``DEFAULT_``
prefix.

Attributes:
    DEFAULT_BANDWIDTH (float): MeanShift bandwidth in pixels. Defaults to 250.
    DEFAULT_RHO_ENTRY (float): Entry zone density threshold. Defaults to 0.8.
    DEFAULT_RHO_EXIT (float): Exit zone density threshold. Defaults to 0.8.
    DEFAULT_RHO_TRAFFIC_AWARE (float): Traffic-aware zone density threshold.
        Defaults to 0.8.
    DEFAULT_MIN_ZONE_POINTS (int): Endpoints a cluster needs to become a zone.
        Defaults to 5.
    DEFAULT_MIN_ZONE_AREA_RATIO (float): Minimum zone area as a multiple of the
        mean endpoint box area. Defaults to 1.5.
    DEFAULT_ZONE_MEMBERSHIP_RATIO (float): Fraction of a box that must overlap a
        zone for the box to be inside it. Defaults to 0.5.
    DEFAULT_IOU_ASSOC_THRESHOLD (float): Minimum IOU for frame-to-frame
        association. Defaults to 0.2.
    DEFAULT_GAP_FRAMES (int): Missed frames after which a tracklet is closed.
        Defaults to 2.
    DEFAULT_GAP_MAX (int): Largest gap in frames between two linkable
        tracklets. Defaults to 64.
    DEFAULT_EDGE_WEIGHTS (tuple): Appearance, time and motion weights of the
        tracklet edge cost. Defaults to (0.5, 0.25, 0.25).
    DEFAULT_MERGE_THRESHOLD (float): Largest edge cost at which tracklets are
        merged. Defaults to 0.3.
    DEFAULT_IOU_RECONNECT_THRESHOLD (float): Minimum IOU to reconnect isolated
        trajectories. Defaults to 0.05.
    DEFAULT_APPEARANCE_RECONNECT_THRESHOLD (float): Minimum cosine similarity to
        reconnect isolated trajectories. Defaults to 0.4.
    DEFAULT_RECONNECT_TTL_FRAMES (int): Frames a trajectory may wait in a
        traffic-aware queue. Defaults to 1800.
    DEFAULT_RECONNECT (bool): Whether trajectories broken inside traffic-aware
        zones are reconnected. Defaults to True.
    DEFAULT_CLIP_SIZE (int): Frames per clip when pooling appearance.
        Defaults to 4.
    DEFAULT_METADATA_WEIGHT (float): Scale of the metadata blocks in the fused
        feature. Defaults to 1.0.
    DEFAULT_MAX_PAIR_DISTANCE (float): Largest zone pair distance accepted when
        assigning a trajectory. Defaults to 1.5.
    DEFAULT_TRAFFIC_AWARE_PAIRS (bool): Whether traffic-aware zones take part in
        zone pairs. Defaults to False.
    DEFAULT_MIN_LINK_SAMPLES (int): Training transitions a camera link needs.
        Defaults to 3.
    DEFAULT_WINDOW_PERCENTILES (tuple): Low and high percentile of the learned
        transition time window. Defaults to (0.0, 100.0).
    DEFAULT_WINDOW_PADDING (int): Frames added on both sides of a window.
        Defaults to 10.
    DEFAULT_CLUSTER_THRESHOLD (float): Distance threshold of the hierarchical
        clustering. Defaults to 0.6.
    DEFAULT_CLUSTER_ITERATIONS (int): Passes of the hierarchical clustering.
        Defaults to 2.
    DEFAULT_EVAL_IOU (float): IOU threshold of the evaluation. Defaults to 0.5.
    MEAN_SHIFT_TOLERANCE (float): MeanShift convergence tolerance in pixels.
    MEAN_SHIFT_MAX_ITER (int): MeanShift iteration cap.
    METADATA_ATTRIBUTES (tuple): The metadata attributes in fusion order.
    MAX_BIP_SIZE (int): Largest instance solved exhaustively.
"""

from typing import Final, Tuple

DEFAULT_BANDWIDTH: Final[float] = 250.0
DEFAULT_RHO_ENTRY: Final[float] = 0.8
DEFAULT_RHO_EXIT: Final[float] = 0.8
DEFAULT_RHO_TRAFFIC_AWARE: Final[float] = 0.8
DEFAULT_MIN_ZONE_POINTS: Final[int] = 5
DEFAULT_MIN_ZONE_AREA_RATIO: Final[float] = 1.5
DEFAULT_ZONE_MEMBERSHIP_RATIO: Final[float] = 0.5

# Single camera tracking
DEFAULT_IOU_ASSOC_THRESHOLD: Final[float] = 0.2
DEFAULT_GAP_FRAMES: Final[int] = 2
DEFAULT_GAP_MAX: Final[int] = 64
DEFAULT_EDGE_WEIGHTS: Final[Tuple[float, float, float]] = (0.5, 0.25, 0.25)
DEFAULT_MERGE_THRESHOLD: Final[float] = 0.3

# Isolated trajectory reconnection
DEFAULT_IOU_RECONNECT_THRESHOLD: Final[float] = 0.05
DEFAULT_APPEARANCE_RECONNECT_THRESHOLD: Final[float] = 0.4
DEFAULT_RECONNECT_TTL_FRAMES: Final[int] = 1800
DEFAULT_RECONNECT: Final[bool] = True

# Feature fusion
DEFAULT_CLIP_SIZE: Final[int] = 4
DEFAULT_METADATA_WEIGHT: Final[float] = 1.0

# Camera link model
DEFAULT_MAX_PAIR_DISTANCE: Final[float] = 1.5
DEFAULT_TRAFFIC_AWARE_PAIRS: Final[bool] = False
DEFAULT_MIN_LINK_SAMPLES: Final[int] = 3
DEFAULT_WINDOW_PERCENTILES: Final[Tuple[float, float]] = (0.0, 100.0)
DEFAULT_WINDOW_PADDING: Final[int] = 10

# Cross camera clustering
DEFAULT_CLUSTER_THRESHOLD: Final[float] = 0.6
DEFAULT_CLUSTER_ITERATIONS: Final[int] = 2

DEFAULT_EVAL_IOU: Final[float] = 0.5

MEAN_SHIFT_TOLERANCE: Final[float] = 1e-3
MEAN_SHIFT_MAX_ITER: Final[int] = 500
METADATA_ATTRIBUTES: Final[Tuple[str, str, str]] = ("type", "brand", "color")
MAX_BIP_SIZE: Final[int] = 10
