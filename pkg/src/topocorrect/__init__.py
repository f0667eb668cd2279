"""Correction of extrema and Morse-Smale segmentation distortions in
error-bounded lossy-compressed scalar fields."""

from .grid import STENCIL, ScalarField, linear_index, neighbors, precedes, vertex_coords
from .topology import (DistortionReport, ExtremaSet, NeighborScan,
                       SegmentationLabels, compare_plmss, compute_segmentation,
                       compute_segmentation_naive, extreme_neighbor, field_scan,
                       find_extrema, is_maximum, is_minimum, scan_neighbors)
from .quantizer import (QuantizedPayload, PayloadFormatError, quantize,
                        reconstruct, relative_to_absolute)
from .synth import NoiseSpec, constant, perlin, ramp
from .correction import (BoundViolationError, BoundsField, ConvergenceError,
                         CorrectionConfig, CorrectionResult, Distortion,
                         DistortionKind, EditSet, apply_edit, compute_bounds,
                         correction_iteration, detect_distortions,
                         propose_corrections, run_correction,
                         validate_error_bound)
from .parallel import (Block, BlockDecomposition, ParallelStats, SyncStrategy,
                       decompose, local_converge, run_parallel, sync_ghosts)
from .codec import FormatError
from . import codec

__version__ = "0.1.0"
