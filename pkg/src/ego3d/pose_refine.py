"""Trajectory-level 3D pose refinement.

The objective combines constant limb length, left/right symmetry, temporal
smoothness and an anchor to the triangulated initialisation::

    L = w_l * L_limb + w_s * L_symm + w_t * L_temporal + w_i * L_reg

All norms are plain (unsquared) Euclidean norms of stacked difference
vectors.  Gradients use the smoothed norm sqrt(|v|^2 + eps^2) so they stay
defined where a difference vanishes; reported loss values use exact norms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidJoint, NonFiniteLoss, ShapeMismatch
from .optim import OptConfig, minimize

EPS = 1e-9

COCO_JOINTS = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)


@dataclass(frozen=True)
class LimbTopology:
    limbs: tuple[tuple[int, int], ...]
    left_right_pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        for a, b in self.left_right_pairs:
            if a == b:
                raise ValueError("a left/right pair must reference two distinct limbs")
            if not (0 <= a < len(self.limbs) and 0 <= b < len(self.limbs)):
                raise ValueError("left/right pair references an unknown limb")

    @property
    def starts(self) -> np.ndarray:
        return np.array([a for a, _ in self.limbs], dtype=int)

    @property
    def ends(self) -> np.ndarray:
        return np.array([b for _, b in self.limbs], dtype=int)

    def check(self, num_joints: int) -> None:
        if self.limbs and max(max(l) for l in self.limbs) >= num_joints:
            raise ValueError(f"topology references joints beyond J={num_joints}")


# 12 limbs, every one paired with its mirror image.
COCO_TOPOLOGY = LimbTopology(
    limbs=(
        (5, 7), (6, 8),      # upper arms
        (7, 9), (8, 10),     # forearms
        (11, 13), (12, 14),  # thighs
        (13, 15), (14, 16),  # shins
        (5, 11), (6, 12),    # torso sides
        (1, 3), (2, 4),      # eye-ear
    ),
    left_right_pairs=((0, 1), (2, 3), (4, 5), (6, 7), (8, 9), (10, 11)),
)


@dataclass(frozen=True)
class RefineWeights:
    w_l: float = 1.0
    w_s: float = 1.0
    w_t: float = 0.5
    w_i: float = 0.1

    def __post_init__(self):
        if min(self.w_l, self.w_s, self.w_t, self.w_i) < 0:
            raise ValueError("weights must be non-negative")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class PoseTrajectory3D:
    values: np.ndarray  # (T, J, 3) metres
    valid: np.ndarray = None  # (T, J) bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[2] != 3 or len(self.values) < 1:
            raise ShapeMismatch(f"trajectory must be (T, J, 3), got {self.values.shape}")
        if self.valid is None:
            self.valid = np.isfinite(self.values).all(axis=2)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.values.shape[:2]:
            raise ShapeMismatch("validity mask must be (T, J)")
        if not np.isfinite(self.values[self.valid]).all():
            raise ValueError("valid entries must be finite")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def J(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "PoseTrajectory3D":
        return PoseTrajectory3D(self.values.copy(), self.valid.copy())


@dataclass
class LossBreakdown:
    total: float
    limb: float
    symm: float
    temporal: float
    reg: float
    grad: np.ndarray | None = field(default=None, repr=False)


def limb_lengths(pose, topo: LimbTopology = COCO_TOPOLOGY, valid=None) -> np.ndarray:
    """Per-limb Euclidean lengths of a (J, 3) pose (or (T, J, 3) -> (T, L))."""
    pose = np.asarray(pose, dtype=np.float64)
    topo.check(pose.shape[-2])
    if valid is not None:
        valid = np.asarray(valid, dtype=bool)
        used = np.union1d(topo.starts, topo.ends)
        if not valid[..., used].all():
            raise InvalidJoint("a limb references an invalid joint")
    d = pose[..., topo.starts, :] - pose[..., topo.ends, :]
    return np.linalg.norm(d, axis=-1)


def _pair_index(topo: LimbTopology) -> tuple[np.ndarray, np.ndarray]:
    left = np.array([a for a, _ in topo.left_right_pairs], dtype=int)
    right = np.array([b for _, b in topo.left_right_pairs], dtype=int)
    return left, right


def _smooth(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row norms (exact) and the unit-ish direction of the smoothed norm."""
    sq = (v**2).sum(axis=-1)
    return np.sqrt(sq), v / np.sqrt(sq + EPS**2)[..., None]


def skeleton_terms(Y: np.ndarray, topo: LimbTopology, want_grad: bool = True):
    """L_limb, L_symm, L_temporal of a (T, J, 3) array and their gradients."""
    T = Y.shape[0]
    starts, ends = topo.starts, topo.ends
    left, right = _pair_index(topo)
    D = Y[:, starts] - Y[:, ends]  # (T, L, 3)
    lam, dlam = _smooth(D)  # (T, L), (T, L, 3)

    dl = lam[1:] - lam[:-1]  # (T-1, L)
    n_limb, u_limb = _smooth(dl)
    sym = lam[:, left] - lam[:, right]
    n_sym, u_sym = _smooth(sym)
    E = (Y[1:] - Y[:-1]).reshape(T - 1, Y[0].size)
    n_tmp, u_tmp = _smooth(E)

    vals = (float(n_limb.sum()), float(n_sym.sum()), float(n_tmp.sum()))
    if not want_grad:
        return vals, None

    g_lam_limb = np.zeros_like(lam)
    g_lam_limb[1:] += u_limb
    g_lam_limb[:-1] -= u_limb
    g_lam_sym = np.zeros_like(lam)
    np.add.at(g_lam_sym.T, left, u_sym.T)
    np.add.at(g_lam_sym.T, right, -u_sym.T)

    def lam_to_y(g_lam):
        gD = g_lam[..., None] * dlam
        gY = np.zeros_like(Y)
        np.add.at(gY.transpose(1, 0, 2), starts, gD.transpose(1, 0, 2))
        np.add.at(gY.transpose(1, 0, 2), ends, -gD.transpose(1, 0, 2))
        return gY

    g_tmp = np.zeros_like(Y)
    u_tmp = u_tmp.reshape(T - 1, *Y.shape[1:])
    g_tmp[1:] += u_tmp
    g_tmp[:-1] -= u_tmp
    return vals, (lam_to_y(g_lam_limb), lam_to_y(g_lam_sym), g_tmp)


def _check_pair(traj: PoseTrajectory3D, init: PoseTrajectory3D) -> None:
    if traj.values.shape != init.values.shape:
        raise ShapeMismatch(f"{traj.values.shape} vs {init.values.shape}")
    if not np.array_equal(traj.valid, init.valid):
        raise ShapeMismatch("trajectory and initialisation masks differ")


def _loss(Y, Y0, mask, topo, w, want_grad=True) -> LossBreakdown:
    (l_limb, l_symm, l_tmp), grads = skeleton_terms(Y, topo, want_grad)
    R = ((Y - Y0) * mask[..., None]).reshape(len(Y), -1)
    n_reg, u_reg = _smooth(R)
    l_reg = float(n_reg.sum())
    total = w.w_l * l_limb + w.w_s * l_symm + w.w_t * l_tmp + w.w_i * l_reg
    grad = None
    if want_grad:
        g_limb, g_symm, g_tmp = grads
        g_reg = u_reg.reshape(Y.shape) * mask[..., None]
        grad = w.w_l * g_limb + w.w_s * g_symm + w.w_t * g_tmp + w.w_i * g_reg
    return LossBreakdown(total, l_limb, l_symm, l_tmp, l_reg, grad)


def loss_pose3d(
    traj: PoseTrajectory3D,
    init: PoseTrajectory3D,
    topo: LimbTopology = COCO_TOPOLOGY,
    w: RefineWeights = RefineWeights(),
    with_grad: bool = False,
) -> LossBreakdown:
    """Weighted refinement loss with its per-term breakdown.

    Every joint of ``traj`` enters the skeleton terms (masked joints must
    already be filled in); the anchor term only covers joints marked valid.
    """
    _check_pair(traj, init)
    topo.check(traj.J)
    Y = traj.values
    if not np.isfinite(Y).all():
        raise NonFiniteLoss("trajectory contains non-finite values")
    Y0 = np.where(init.valid[..., None], init.values, 0.0)
    return _loss(Y, Y0, init.valid, topo, w, with_grad)


def fill_invalid(traj: PoseTrajectory3D) -> np.ndarray:
    """Linear temporal interpolation of masked joints (edge values held)."""
    Y = traj.values.copy()
    t = np.arange(traj.T)
    for j in range(traj.J):
        ok = traj.valid[:, j]
        if ok.all():
            continue
        if ok.any():
            for k in range(3):
                Y[:, j, k] = np.interp(t, t[ok], Y[ok, j, k])
        else:
            # never observed: park it on the per-frame centroid of observed joints
            for ti in range(traj.T):
                v = traj.valid[ti]
                Y[ti, j] = Y[ti, v].mean(axis=0) if v.any() else np.nan
    if not np.isfinite(Y).all():
        raise NonFiniteLoss("trajectory has frames without any valid joint")
    return Y


@dataclass
class RefineResult:
    trajectory: PoseTrajectory3D
    initial: LossBreakdown
    final: LossBreakdown
    iterations: int
    history: list[float]


def refine(
    traj_init: PoseTrajectory3D,
    topo: LimbTopology = COCO_TOPOLOGY,
    w: RefineWeights = RefineWeights(),
    opt_config: OptConfig = OptConfig(),
) -> RefineResult:
    """Minimise the refinement loss over the whole trajectory."""
    topo.check(traj_init.J)
    Y0 = fill_invalid(traj_init)
    anchor = np.where(traj_init.valid[..., None], traj_init.values, 0.0)
    mask = traj_init.valid
    shape = Y0.shape

    def fun(x):
        b = _loss(x.reshape(shape), anchor, mask, topo, w, True)
        return b.total, b.grad.ravel()

    def value(x):
        return _loss(x.reshape(shape), anchor, mask, topo, w, False).total

    initial = _loss(Y0, anchor, mask, topo, w, False)
    if not np.isfinite(initial.total):
        raise NonFiniteLoss("refinement objective is not finite at initialisation")
    if w.w_l == w.w_s == w.w_t == w.w_i == 0:
        return RefineResult(PoseTrajectory3D(Y0, mask.copy()), initial, initial, 0, [initial.total])

    res = minimize(fun, Y0.ravel(), opt_config, value_only=value)
    Y = res.x.reshape(shape)
    final = _loss(Y, anchor, mask, topo, w, False)
    return RefineResult(PoseTrajectory3D(Y, mask.copy()), initial, final, res.iterations, res.history)
