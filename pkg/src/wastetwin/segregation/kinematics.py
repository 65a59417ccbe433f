"""6-DOF serial arm kinematics: DH forward chain and damped least-squares IK."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

POSITION_TOL = 1e-6   # m
ORIENTATION_TOL = 1e-4  # rad
MAX_ITERATIONS = 500
DAMPING = 0.05
_MAX_STEP_RAD = 1.0


class LimitError(ValueError):
    """Joint vector outside the arm's limits."""


class ReachabilityError(ValueError):
    """Target position outside the arm's reach sphere."""


class ConvergenceError(RuntimeError):
    """IK hit the iteration cap; carries the best residual seen."""

    def __init__(self, message: str, best_position_error: float,
                 best_orientation_error: float):
        super().__init__(message)
        self.best_position_error = best_position_error
        self.best_orientation_error = best_orientation_error


@dataclass(frozen=True)
class Pose:
    position: np.ndarray        # (3,) m
    rotation: np.ndarray | None  # (3, 3); None for position-only targets

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).ravel())
        if self.rotation is not None:
            R = np.asarray(self.rotation, dtype=float)
            if R.shape != (3, 3):
                raise ValueError("rotation must be 3x3")
            object.__setattr__(self, "rotation", R)


@dataclass(frozen=True)
class ArmModel:
    """Six DH rows (a, alpha, d, theta_offset) plus joint limits and speed."""

    dh: np.ndarray            # (6, 4)
    joint_limits: np.ndarray  # (6, 2) rad
    max_joint_speed: float = 2.0  # rad/s

    def __post_init__(self):
        dh = np.asarray(self.dh, dtype=float)
        limits = np.asarray(self.joint_limits, dtype=float)
        if dh.shape != (6, 4):
            raise ValueError("dh must be (6, 4)")
        if limits.shape != (6, 2) or np.any(limits[:, 0] >= limits[:, 1]):
            raise ValueError("joint_limits must be (6, 2) with min < max")
        object.__setattr__(self, "dh", dh)
        object.__setattr__(self, "joint_limits", limits)

    @property
    def reach(self) -> float:
        return float(np.sum(np.abs(self.dh[:, 0]) + np.abs(self.dh[:, 2])))


def default_arm() -> ArmModel:
    # synthetic small-arm table (~0.1 m links), not matched to any hardware
    dh = np.array([
        [0.000, np.pi / 2, 0.132, 0.0],
        [0.110, 0.0,       0.000, 0.0],
        [0.096, 0.0,       0.000, 0.0],
        [0.000, np.pi / 2, 0.063, 0.0],
        [0.000, -np.pi / 2, 0.075, 0.0],
        [0.000, 0.0,       0.045, 0.0],
    ])
    limits = np.tile(np.array([[-2.88, 2.88]]), (6, 1))
    return ArmModel(dh=dh, joint_limits=limits)


def dh_transform(a: float, alpha: float, d: float, theta: float) -> np.ndarray:
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def fk_frames(arm: ArmModel, joints: np.ndarray) -> list[np.ndarray]:
    """Cumulative base->joint transforms, base frame first (length 7)."""
    frames = [np.eye(4)]
    T = np.eye(4)
    for i in range(6):
        a, alpha, d, offset = arm.dh[i]
        T = T @ dh_transform(a, alpha, d, joints[i] + offset)
        frames.append(T)
    return frames


def check_limits(arm: ArmModel, joints: np.ndarray) -> None:
    joints = np.asarray(joints, dtype=float)
    lo, hi = arm.joint_limits[:, 0], arm.joint_limits[:, 1]
    bad = np.flatnonzero((joints < lo) | (joints > hi))
    if bad.size:
        raise LimitError(f"joints {bad.tolist()} outside limits")


def forward_kinematics(arm: ArmModel, joints: np.ndarray) -> Pose:
    joints = np.asarray(joints, dtype=float).ravel()
    if joints.shape != (6,):
        raise ValueError("expected 6 joint angles")
    check_limits(arm, joints)
    T = fk_frames(arm, joints)[-1]
    return Pose(position=T[:3, 3].copy(), rotation=T[:3, :3].copy())


def _jacobian(frames: list[np.ndarray]) -> np.ndarray:
    p_end = frames[-1][:3, 3]
    J = np.empty((6, 6))
    for i in range(6):
        z = frames[i][:3, 2]
        p = frames[i][:3, 3]
        J[:3, i] = np.cross(z, p_end - p)
        J[3:, i] = z
    return J


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix, safe near 0 and pi."""
    cos_angle = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos_angle)
    if angle < 1e-10:
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    if np.pi - angle < 1e-6:
        # near pi the skew part vanishes; recover the axis from the diagonal
        axis = np.sqrt(np.maximum((np.diag(R) + 1.0) / 2.0, 0.0))
        axis *= np.sign([R[2, 1] - R[1, 2] or 1.0,
                         R[0, 2] - R[2, 0] or 1.0,
                         R[1, 0] - R[0, 1] or 1.0])
        return angle * axis / np.linalg.norm(axis)
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return angle * axis / (2.0 * np.sin(angle))


def inverse_kinematics(arm: ArmModel, target: Pose, seed_joints: np.ndarray,
                       position_only: bool = False,
                       position_tol: float = POSITION_TOL,
                       orientation_tol: float = ORIENTATION_TOL,
                       damping: float = DAMPING,
                       max_iterations: int = MAX_ITERATIONS) -> np.ndarray:
    """Damped least-squares IK with per-iteration joint-limit projection.

    position_only relaxes the orientation rows (redundant 3x6 problem), used
    by the sort line where grasps are position-targeted.
    """
    target_pos = np.asarray(target.position, dtype=float).ravel()
    if np.linalg.norm(target_pos) > arm.reach:
        raise ReachabilityError(
            f"target at {np.linalg.norm(target_pos):.3f} m exceeds reach {arm.reach:.3f} m")
    if not position_only and target.rotation is None:
        raise ValueError("full-pose IK needs a target rotation")
    q = np.clip(np.asarray(seed_joints, dtype=float).ravel().copy(),
                arm.joint_limits[:, 0], arm.joint_limits[:, 1])
    best_pos_err = np.inf
    best_ori_err = np.inf
    lam2 = damping * damping
    for _ in range(max_iterations + 1):
        frames = fk_frames(arm, q)
        T = frames[-1]
        e_pos = target_pos - T[:3, 3]
        pos_err = float(np.linalg.norm(e_pos))
        if position_only:
            e = e_pos
            ori_err = 0.0
        else:
            e_ori = rotation_log(target.rotation @ T[:3, :3].T)
            ori_err = float(np.linalg.norm(e_ori))
            e = np.concatenate([e_pos, e_ori])
        if pos_err < best_pos_err:
            best_pos_err, best_ori_err = pos_err, ori_err
        if pos_err < position_tol and ori_err < orientation_tol:
            return q
        J = _jacobian(frames)
        if position_only:
            J = J[:3]
        JJt = J @ J.T + lam2 * np.eye(J.shape[0])
        dq = J.T @ np.linalg.solve(JJt, e)
        peak = np.max(np.abs(dq))
        if peak > _MAX_STEP_RAD:
            dq *= _MAX_STEP_RAD / peak
        q = np.clip(q + dq, arm.joint_limits[:, 0], arm.joint_limits[:, 1])
    raise ConvergenceError(
        f"no convergence in {max_iterations} iterations "
        f"(best {best_pos_err:.2e} m / {best_ori_err:.2e} rad)",
        best_pos_err, best_ori_err)
