"""Labeled 3D tooth bounding boxes from per-slice 2D detections in CBCT-style volumes."""

from .assignment import FORBIDDEN, solve_assignment
from .boxes import Box3D, iou_2d
from .config import PipelineConfig, load_config
from .detections import Detection2D, NoiseModel, load_detections, synth_detect
from .division import DivisionConfig, DivisionSurface, build_lattice, divide_boxes, flag_double, split_volume
from .evaluation import OutcomeReport, detection_rate, evaluate, match_pred_to_gt
from .phantom import GroundTruth, PhantomSpec, generate_phantom, random_phantom_spec, render_phantom
from .pipeline import run_pipeline
from .reconstruction import MatchConfig, ToothVolume, match_cost, reconstruct
from .slab import axial_mean_profile, sample_slices, select_tooth_slab
from .volume import VoxelVolume, load_volume, save_volume

__version__ = "0.1.0"
