"""Kinematic body model and three-stage parameter fitting.

The body is a 24-joint skeleton (root + 23 articulated joints) whose bone
offsets are a rest template plus a linear 10-dimensional shape basis.  Joint
rotations are 6D vectors; the root carries a 6D orientation and a
translation.  A fixed linear regressor maps the 24 joints onto the 17 COCO
keypoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import NonFiniteLoss, ShapeMismatch
from .geometry import matrix_to_rot6d, rot6d_to_matrix, rot6d_vjp, rotation_about
from .optim import OptConfig, minimize
from .pose_refine import (
    COCO_TOPOLOGY,
    EPS,
    LimbTopology,
    PoseTrajectory3D,
    skeleton_terms,
)

NUM_JOINTS = 24
NUM_SHAPE = 10
IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])

# name, parent, rest offset from parent (body frame: +y up, +z forward, +x left)
_SKELETON = (
    ("pelvis", -1, (0.0, 0.0, 0.0)),
    ("spine1", 0, (0.0, 0.12, -0.01)),
    ("spine2", 1, (0.0, 0.14, 0.0)),
    ("neck", 2, (0.0, 0.22, 0.0)),
    ("head", 3, (0.0, 0.12, 0.02)),
    ("nose", 4, (0.0, 0.0, 0.10)),
    ("left_eye", 4, (0.035, 0.03, 0.08)),
    ("right_eye", 4, (-0.035, 0.03, 0.08)),
    ("left_ear", 4, (0.075, 0.0, 0.0)),
    ("right_ear", 4, (-0.075, 0.0, 0.0)),
    ("left_collar", 2, (0.07, 0.16, 0.0)),
    ("left_shoulder", 10, (0.11, 0.02, 0.0)),
    ("left_elbow", 11, (0.0, -0.28, 0.0)),
    ("left_wrist", 12, (0.0, -0.25, 0.0)),
    ("right_collar", 2, (-0.07, 0.16, 0.0)),
    ("right_shoulder", 14, (-0.11, 0.02, 0.0)),
    ("right_elbow", 15, (0.0, -0.28, 0.0)),
    ("right_wrist", 16, (0.0, -0.25, 0.0)),
    ("left_hip", 0, (0.09, -0.07, 0.0)),
    ("left_knee", 18, (0.0, -0.42, 0.01)),
    ("left_ankle", 19, (0.0, -0.41, -0.02)),
    ("right_hip", 0, (-0.09, -0.07, 0.0)),
    ("right_knee", 21, (0.0, -0.42, 0.01)),
    ("right_ankle", 22, (0.0, -0.41, -0.02)),
)
JOINT_NAMES = tuple(s[0] for s in _SKELETON)
_COCO_FROM_SKELETON = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)


def _default_shape_basis(rest: np.ndarray) -> np.ndarray:
    idx = {n: i for i, n in enumerate(JOINT_NAMES)}
    B = np.zeros((NUM_SHAPE, NUM_JOINTS, 3))

    def scale(k, names, s, axes=(0, 1, 2)):
        for n in names:
            for a in axes:
                B[k, idx[n], a] = s * rest[idx[n], a]

    scale(0, JOINT_NAMES, 0.05)  # overall size
    scale(1, ["left_knee", "left_ankle", "right_knee", "right_ankle"], 0.06)
    scale(2, ["left_elbow", "left_wrist", "right_elbow", "right_wrist"], 0.06)
    scale(3, ["left_collar", "left_shoulder", "right_collar", "right_shoulder"], 0.08, (0,))
    scale(4, ["left_hip", "right_hip"], 0.10, (0,))
    scale(5, ["spine1", "spine2", "neck"], 0.06, (1,))
    scale(6, ["nose", "left_eye", "right_eye", "left_ear", "right_ear"], 0.08)
    scale(6, ["head"], 0.05)
    scale(7, ["left_elbow", "right_elbow"], 0.05)
    scale(7, ["left_wrist", "right_wrist"], -0.05)
    scale(8, ["left_knee", "right_knee"], 0.05)
    scale(8, ["left_ankle", "right_ankle"], -0.05)
    for n in ("spine2", "neck"):
        B[9, idx[n], 2] = 0.01
    return B


@dataclass(frozen=True)
class KinematicModel:
    parents: np.ndarray  # (24,), parents[0] == -1
    rest_offsets: np.ndarray  # (24, 3)
    shape_basis: np.ndarray  # (10, 24, 3)
    keypoint_regressor: np.ndarray  # (17, 24)
    joint_names: tuple[str, ...] = JOINT_NAMES

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=int)
        if parents[0] != -1 or np.any(parents[1:] < 0):
            raise ValueError("joint 0 must be the single root")
        if np.any(parents[1:] >= np.arange(1, len(parents))):
            raise ValueError("parents must precede their children")
        object.__setattr__(self, "parents", parents)
        for name in ("rest_offsets", "shape_basis", "keypoint_regressor"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.rest_offsets.shape != (len(parents), 3):
            raise ShapeMismatch("rest_offsets must be (num_joints, 3)")
        if self.shape_basis.shape[1:] != self.rest_offsets.shape:
            raise ShapeMismatch("shape_basis must be (num_shape, num_joints, 3)")
        if self.keypoint_regressor.shape[1] != len(parents):
            raise ShapeMismatch("keypoint_regressor must have one column per joint")

    @classmethod
    def canonical(cls) -> "KinematicModel":
        parents = np.array([s[1] for s in _SKELETON])
        rest = np.array([s[2] for s in _SKELETON], dtype=np.float64)
        reg = np.zeros((len(_COCO_FROM_SKELETON), NUM_JOINTS))
        for i, n in enumerate(_COCO_FROM_SKELETON):
            reg[i, JOINT_NAMES.index(n)] = 1.0
        return cls(parents, rest, _default_shape_basis(rest), reg)

    @property
    def num_joints(self) -> int:
        return len(self.parents)

    @property
    def num_keypoints(self) -> int:
        return self.keypoint_regressor.shape[0]

    def offsets(self, shape) -> np.ndarray:
        return self.rest_offsets + np.einsum("s,sjc->jc", np.asarray(shape, dtype=np.float64), self.shape_basis)

    def height(self, shape=None) -> float:
        """Vertical extent of the rest-pose keypoints."""
        shape = np.zeros(self.shape_basis.shape[0]) if shape is None else shape
        kp = forward_kinematics(self, BodyParams.rest(1, num_shape=len(shape), shape=shape))[0]
        return float(kp[:, 1].max() - kp[:, 1].min())

    def to_dict(self) -> dict:
        return {
            "joint_names": list(self.joint_names),
            "parents": self.parents.tolist(),
            "rest_offsets": self.rest_offsets.tolist(),
            "shape_basis": self.shape_basis.tolist(),
            "keypoint_regressor": self.keypoint_regressor.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KinematicModel":
        return cls(
            np.array(d["parents"]), np.array(d["rest_offsets"]),
            np.array(d["shape_basis"]), np.array(d["keypoint_regressor"]),
            tuple(d.get("joint_names", JOINT_NAMES)),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "KinematicModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class BodyParams:
    """Per-frame body parameters for a sequence of ``T`` frames.

    ``global_orient`` is a 6D rotation and ``transl`` a translation, so the
    global block has 9 numbers per frame; :meth:`from_axis_angle_global`
    accepts the compact 6-number (axis-angle, translation) form.
    """

    pose: np.ndarray  # (T, 23, 6)
    shape: np.ndarray  # (10,)
    global_orient: np.ndarray  # (T, 6)
    transl: np.ndarray  # (T, 3)

    def __post_init__(self):
        self.pose = np.array(self.pose, dtype=np.float64)
        self.shape = np.array(self.shape, dtype=np.float64)
        self.global_orient = np.array(self.global_orient, dtype=np.float64)
        self.transl = np.array(self.transl, dtype=np.float64)
        T = self.pose.shape[0]
        if self.pose.ndim != 3 or self.pose.shape[2] != 6:
            raise ShapeMismatch(f"pose must be (T, J-1, 6), got {self.pose.shape}")
        if self.global_orient.shape != (T, 6) or self.transl.shape != (T, 3):
            raise ShapeMismatch("global_orient must be (T, 6) and transl (T, 3)")
        if not np.isfinite(self.transl).all():
            raise ValueError("global translation must be finite")

    @classmethod
    def rest(cls, T: int = 1, num_joints: int = NUM_JOINTS, num_shape: int = NUM_SHAPE,
             shape=None, transl=None) -> "BodyParams":
        return cls(
            np.tile(IDENTITY_6D, (T, num_joints - 1, 1)),
            np.zeros(num_shape) if shape is None else shape,
            np.tile(IDENTITY_6D, (T, 1)),
            np.zeros((T, 3)) if transl is None else np.broadcast_to(transl, (T, 3)),
        )

    @classmethod
    def from_axis_angle_global(cls, pose, shape, global6) -> "BodyParams":
        g = np.atleast_2d(np.asarray(global6, dtype=np.float64))
        R = Rotation.from_rotvec(g[:, :3]).as_matrix()
        return cls(pose, shape, matrix_to_rot6d(R), g[:, 3:])

    @property
    def T(self) -> int:
        return self.pose.shape[0]

    @property
    def global_params(self) -> np.ndarray:
        return np.concatenate([self.global_orient, self.transl], axis=1)

    def copy(self) -> "BodyParams":
        return BodyParams(self.pose.copy(), self.shape.copy(),
                          self.global_orient.copy(), self.transl.copy())

    def to_dict(self) -> dict:
        return {
            "pose": self.pose.tolist(),
            "shape": self.shape.tolist(),
            "global": self.global_params.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BodyParams":
        g = np.atleast_2d(np.asarray(d["global"], dtype=np.float64))
        if g.shape[1] == 6:
            return cls.from_axis_angle_global(d["pose"], d["shape"], g)
        return cls(d["pose"], d["shape"], g[:, :6], g[:, 6:])


def _fk(model: KinematicModel, theta: BodyParams):
    T, J = theta.T, model.num_joints
    if theta.pose.shape[1] != J - 1 or len(theta.shape) != model.shape_basis.shape[0]:
        raise ShapeMismatch("body parameters do not match the kinematic model")
    R_local = rot6d_to_matrix(theta.pose)  # (T, J-1, 3, 3)
    R_root = rot6d_to_matrix(theta.global_orient)
    off = model.offsets(theta.shape)
    G = np.empty((T, J, 3, 3))
    pos = np.empty((T, J, 3))
    G[:, 0] = R_root
    pos[:, 0] = theta.transl + R_root @ off[0]
    for k in range(1, J):
        p = model.parents[k]
        pos[:, k] = pos[:, p] + G[:, p] @ off[k]
        G[:, k] = G[:, p] @ R_local[:, k - 1]
    return pos, G, R_local, off


def forward_kinematics(model: KinematicModel, theta: BodyParams, return_joints: bool = False):
    """Keypoints (T, 17, 3) for every frame of ``theta``."""
    pos, *_ = _fk(model, theta)
    kp = np.einsum("kj,tjc->tkc", model.keypoint_regressor, pos)
    return (kp, pos) if return_joints else kp


def fk_vjp(model: KinematicModel, theta: BodyParams, g_kp: np.ndarray) -> BodyParams:
    """Gradient of ``<g_kp, forward_kinematics(theta)>`` for every parameter block."""
    pos, G, R_local, off = _fk(model, theta)
    T, J = theta.T, model.num_joints
    g_pos = np.einsum("kj,tkc->tjc", model.keypoint_regressor, g_kp)
    gG = np.zeros_like(G)
    gR_local = np.zeros_like(R_local)
    g_off = np.zeros_like(off)
    for k in range(J - 1, 0, -1):
        p = model.parents[k]
        gG[:, p] += gG[:, k] @ np.swapaxes(R_local[:, k - 1], -1, -2)
        gR_local[:, k - 1] = np.swapaxes(G[:, p], -1, -2) @ gG[:, k]
        g_pos[:, p] += g_pos[:, k]
        gG[:, p] += g_pos[:, k][:, :, None] * off[k][None, None, :]
        g_off[k] += np.einsum("tab,ta->b", G[:, p], g_pos[:, k])
    gG[:, 0] += g_pos[:, 0][:, :, None] * off[0][None, None, :]
    g_off[0] += np.einsum("tab,ta->b", G[:, 0], g_pos[:, 0])
    return BodyParams(
        rot6d_vjp(theta.pose, gR_local),
        np.einsum("sjc,jc->s", model.shape_basis, g_off),
        rot6d_vjp(theta.global_orient, gG[:, 0]),
        g_pos[:, 0],
    )


@dataclass(frozen=True)
class MeshFitWeights:
    w1: float = 1.0
    w2: float = 1e-3
    w3: float = 0.1
    w4: float = 0.1
    w5: float = 0.1
    w6: float = 1e-3

    def __post_init__(self):
        if min(self.as_tuple()) < 0:
            raise ValueError("weights must be non-negative")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.w1, self.w2, self.w3, self.w4, self.w5, self.w6)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class MeshLoss:
    total: float
    data: float
    pose_prior: float
    limb: float
    symm: float
    temporal: float
    shape_prior: float
    grad: BodyParams | None = field(default=None, repr=False)


def _target_arrays(target, T: int, J: int):
    if isinstance(target, PoseTrajectory3D):
        Y, valid = target.values, target.valid
    else:
        Y = np.asarray(target, dtype=np.float64)
        if Y.ndim == 2:
            Y = Y[None]
        valid = np.isfinite(Y).all(axis=2)
    if Y.shape != (T, J, 3):
        raise ShapeMismatch(f"target must be ({T}, {J}, 3), got {Y.shape}")
    return np.where(valid[..., None], Y, 0.0), valid


def loss_mesh(
    theta: BodyParams,
    target,
    w: MeshFitWeights = MeshFitWeights(),
    topo: LimbTopology = COCO_TOPOLOGY,
    model: KinematicModel | None = None,
    with_grad: bool = False,
) -> MeshLoss:
    """Fitting loss between Phi(theta) and a target keypoint trajectory.

    data      sum_t ||y_t - Phi(theta)_t||   (valid joints only)
    pose      sum_t ||theta_pose_t - rest||  (deviation from the identity 6D)
    limb/symm/temporal  skeleton terms evaluated on Phi(theta)
    shape     0.5 * ||theta_shape||^2
    """
    model = model or KinematicModel.canonical()
    kp = forward_kinematics(model, theta)
    Y, valid = _target_arrays(target, theta.T, kp.shape[1])

    r = ((Y - kp) * valid[..., None]).reshape(theta.T, -1)
    r_sq = (r**2).sum(axis=1)
    data = float(np.sqrt(r_sq).sum())
    dp = (theta.pose - IDENTITY_6D).reshape(theta.T, -1)
    dp_sq = (dp**2).sum(axis=1)
    pose_prior = float(np.sqrt(dp_sq).sum())
    (limb, symm, temporal), sk_grads = skeleton_terms(kp, topo, with_grad)
    shape_prior = 0.5 * float(theta.shape @ theta.shape)
    total = (
        w.w1 * data + w.w2 * pose_prior + w.w3 * limb
        + w.w4 * symm + w.w5 * temporal + w.w6 * shape_prior
    )
    grad = None
    if with_grad:
        g_kp = -w.w1 * (r / np.sqrt(r_sq + EPS**2)[:, None]).reshape(kp.shape) * valid[..., None]
        g_kp += w.w3 * sk_grads[0] + w.w4 * sk_grads[1] + w.w5 * sk_grads[2]
        grad = fk_vjp(model, theta, g_kp)
        grad.pose += w.w2 * (dp / np.sqrt(dp_sq + EPS**2)[:, None]).reshape(theta.pose.shape)
        grad.shape += w.w6 * theta.shape
    return MeshLoss(total, data, pose_prior, limb, symm, temporal, shape_prior, grad)


@dataclass
class FitResult:
    params: BodyParams
    loss: MeshLoss
    stage_losses: list[float]
    history: list[float]
    stage_params: list[BodyParams] = field(default_factory=list, repr=False)


_BLOCKS = ("pose", "shape", "global_orient", "transl")
STAGES = (("global_orient", "transl"), ("shape",), ("pose", "global_orient", "transl"))


def _optimise_blocks(model, theta, target, w, topo, blocks, cfg):
    sizes = [getattr(theta, b).size for b in blocks]
    shapes = [getattr(theta, b).shape for b in blocks]

    def unpack(x):
        params = theta.copy()
        i = 0
        for b, n, s in zip(blocks, sizes, shapes):
            setattr(params, b, x[i:i + n].reshape(s))
            i += n
        return params

    def fun(x):
        L = loss_mesh(unpack(x), target, w, topo, model, with_grad=True)
        return L.total, np.concatenate([getattr(L.grad, b).ravel() for b in blocks])

    def value(x):
        try:
            return loss_mesh(unpack(x), target, w, topo, model).total
        except ArithmeticError:
            return np.inf
        except ValueError:  # degenerate 6D blocks along a trial step
            return np.inf

    x0 = np.concatenate([getattr(theta, b).ravel() for b in blocks])
    res = minimize(fun, x0, cfg, value_only=value)
    return unpack(res.x), res


def default_init(model: KinematicModel, target: PoseTrajectory3D) -> BodyParams:
    """Rest pose translated so its keypoint centroid sits on the target's."""
    theta = BodyParams.rest(target.T, model.num_joints, model.shape_basis.shape[0])
    rest_kp = forward_kinematics(model, theta)
    tgt = np.where(target.valid[..., None], target.values, np.nan)
    theta.transl = np.nanmean(tgt, axis=1) - rest_kp.mean(axis=1)
    return theta


def fit_three_stage(
    model: KinematicModel,
    theta_init: BodyParams | None,
    target: PoseTrajectory3D,
    w: MeshFitWeights = MeshFitWeights(),
    opt_config: OptConfig = OptConfig(max_iterations=300),
    topo: LimbTopology = COCO_TOPOLOGY,
) -> FitResult:
    """Global block first, then shape, then pose and global jointly."""
    theta = default_init(model, target) if theta_init is None else theta_init.copy()
    start = loss_mesh(theta, target, w, topo, model)
    if not np.isfinite(start.total):
        raise NonFiniteLoss("mesh loss is not finite at initialisation")
    stage_losses = [start.total]
    history = [start.total]
    stage_params = []
    for blocks in STAGES:
        theta, res = _optimise_blocks(model, theta, target, w, topo, blocks, opt_config)
        stage_losses.append(res.value)
        history.extend(res.history[1:])
        stage_params.append(theta.copy())
    final = loss_mesh(theta, target, w, topo, model)
    return FitResult(theta, final, stage_losses, history, stage_params)


def perturb(theta: BodyParams, rng: np.random.Generator, translation: float = 0.05,
            rotation_deg: float = 5.0) -> BodyParams:
    """Copy of ``theta`` with a random translation offset and small joint rotations."""
    out = theta.copy()
    d = rng.normal(size=3)
    out.transl = out.transl + translation * d / np.linalg.norm(d)

    def jitter(r6):
        R = rot6d_to_matrix(r6)
        axis = rng.normal(size=3)
        ang = np.deg2rad(rotation_deg) * rng.uniform(-1, 1)
        return matrix_to_rot6d(rotation_about(axis, ang) @ R)

    out.global_orient = np.array([jitter(g) for g in out.global_orient])
    out.pose = np.array([[jitter(p) for p in frame] for frame in out.pose])
    return out


__all__ = [
    "BodyParams", "KinematicModel", "MeshFitWeights", "MeshLoss", "FitResult",
    "forward_kinematics", "fk_vjp", "loss_mesh", "fit_three_stage", "default_init",
    "perturb", "JOINT_NAMES", "IDENTITY_6D",
]
