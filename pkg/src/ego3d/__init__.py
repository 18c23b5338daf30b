"""Multi-view 3D human pose annotation and world-frame tracking toolkit."""

__version__ = "0.1.0"

from . import bev, body_fit, errors, geometry, metrics, optim, pose_refine, sim, tracker, triangulation  # noqa: E402
from .bev import BevConfig, Cylinder3D, cylinder_to_bbox, decode_bev, encode_bev, head_pose_to_cylinder  # noqa: E402
from .body_fit import BodyParams, KinematicModel, MeshFitWeights, fit_three_stage, forward_kinematics, loss_mesh  # noqa: E402
from .geometry import CameraIntrinsics, CameraView, RigidPose, SimilarityTransform, project, umeyama_align  # noqa: E402
from .metrics import Frame, chamfer_bidirectional, clear_mot, evaluate_mot, hota, idf1, pose_metrics  # noqa: E402
from .pose_refine import COCO_TOPOLOGY, LimbTopology, PoseTrajectory3D, RefineWeights, loss_pose3d, refine  # noqa: E402
from .sim import NoiseConfig, SceneConfig, generate_scene, render_detections  # noqa: E402
from .tracker import AssociationConfig, DetectionInput, Tracker, simple_baseline_root, tracker_step  # noqa: E402
from .triangulation import Observation2D, RansacConfig, dlt_triangulate, ransac_triangulate, triangulate_pose  # noqa: E402
