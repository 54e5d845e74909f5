"""SE(3)/se(3) kernel: hat/vee, exponentials, left Jacobian and the adjoint.

Twists are parameterized as the 6-vector [omega, v] (rotational part first).
The 6x6 adjoint representation of a pose g = (R, p) in that ordering is

    L[Ad_g] = [[R,       0],
               [hat(p)R, R]]

so that P(g X g^-1) = L[Ad_g] P(X).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

THETA_SWITCH = 1e-4
TOL_ORTH = 1e-9
TOL_DET = 1e-9


def _vec3(x, name: str = "vector") -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise ValueError(f"{name} must have 3 entries, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def hat(t) -> np.ndarray:
    """Skew-symmetric matrix with hat(t) @ v == cross(t, v)."""
    t = _vec3(t, "t")
    return np.array(
        [
            [0.0, -t[2], t[1]],
            [t[2], 0.0, -t[0]],
            [-t[1], t[0], 0.0],
        ]
    )


def vee(s) -> np.ndarray:
    """Inverse of hat. Reads the three below-diagonal parameters."""
    s = np.asarray(s, dtype=float)
    return np.array([s[2, 1], s[0, 2], s[1, 0]])


def is_rotation(r, tol_orth: float = TOL_ORTH, tol_det: float = TOL_DET) -> bool:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    orth = np.linalg.norm(r.T @ r - np.eye(3))
    return bool(orth <= tol_orth and abs(np.linalg.det(r) - 1.0) <= tol_det)


def exp_so3(omega) -> np.ndarray:
    """Rodrigues formula, with a Taylor expansion for tiny angles."""
    w = _vec3(omega, "omega")
    th = np.linalg.norm(w)
    k = hat(w)
    k2 = k @ k
    if th < THETA_SWITCH:
        th2 = th * th
        a = 1.0 - th2 / 6.0
        b = 0.5 - th2 / 24.0
    else:
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / (th * th)
    return np.eye(3) + a * k + b * k2


def left_jacobian(omega) -> np.ndarray:
    """Left Jacobian of SO(3): I + (1-cos)/th^2 W + (th-sin)/th^3 W^2."""
    w = _vec3(omega, "omega")
    th = np.linalg.norm(w)
    k = hat(w)
    k2 = k @ k
    if th < THETA_SWITCH:
        # third-order Taylor; the neglected terms are O(th^3) in the coefficients
        th2 = th * th
        b = 0.5 - th2 / 24.0
        c = 1.0 / 6.0 - th2 / 120.0
    else:
        b = (1.0 - np.cos(th)) / (th * th)
        c = (th - np.sin(th)) / (th**3)
    return np.eye(3) + b * k + c * k2


@dataclass(frozen=True)
class Twist:
    """Element of se(3): rotational generator omega and translational v."""

    omega: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", _vec3(self.omega, "omega"))
        object.__setattr__(self, "v", _vec3(self.v, "v"))

    def matrix(self) -> np.ndarray:
        m = np.zeros((4, 4))
        m[:3, :3] = hat(self.omega)
        m[:3, 3] = self.v
        return m

    @classmethod
    def from_matrix(cls, m) -> "Twist":
        m = np.asarray(m, dtype=float)
        return cls(vee(m[:3, :3]), m[:3, 3].copy())

    @classmethod
    def zero(cls) -> "Twist":
        return cls(np.zeros(3), np.zeros(3))


@dataclass(frozen=True)
class Pose:
    """Element of SE(3) stored as (rotation, translation)."""

    r: np.ndarray
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.shape != (3, 3) or not np.all(np.isfinite(r)):
            raise ValueError("rotation must be a finite 3x3 matrix")
        object.__setattr__(self, "r", r.copy())
        object.__setattr__(self, "p", _vec3(self.p, "p"))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.r
        m[:3, 3] = self.p
        return m

    def is_valid(self, tol_orth: float = TOL_ORTH, tol_det: float = TOL_DET) -> bool:
        return is_rotation(self.r, tol_orth, tol_det)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def validated(cls, r, p) -> "Pose":
        """Construct from external data, rejecting non-rotations."""
        g = cls(r, p)
        if not g.is_valid():
            raise ValueError("rotation fails orthonormality/determinant check")
        return g


def exp_se3(xi: Twist) -> Pose:
    return Pose(exp_so3(xi.omega), left_jacobian(xi.omega) @ xi.v)


def parameterize(x: Twist) -> np.ndarray:
    return np.concatenate([x.omega, x.v])


def unparameterize(xi) -> Twist:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape != (6,):
        raise ValueError(f"twist parameter vector must have 6 entries, got {xi.shape}")
    return Twist(xi[:3], xi[3:])


def compose(g1: Pose, g2: Pose) -> Pose:
    r = g1.r @ g2.r
    if not is_rotation(r):
        from .projection import project_so3

        r = project_so3(r)
    return Pose(r, g1.r @ g2.p + g1.p)


def inverse(g: Pose) -> Pose:
    rt = g.r.T
    return Pose(rt, -rt @ g.p)


def adjoint(g: Pose, x: Twist) -> Twist:
    """Ad_g(X) = g X g^-1, evaluated in closed form."""
    rw = g.r @ x.omega
    return Twist(rw, np.cross(g.p, rw) + g.r @ x.v)


def linear_rep(g: Pose) -> np.ndarray:
    """6x6 matrix of Ad_g acting on [omega, v] parameter vectors."""
    m = np.zeros((6, 6))
    m[:3, :3] = g.r
    m[3:, 3:] = g.r
    m[3:, :3] = hat(g.p) @ g.r
    return m


def bracket(x: Twist, y: Twist) -> Twist:
    """Lie bracket via matrix commutator."""
    mx, my = x.matrix(), y.matrix()
    return Twist.from_matrix(mx @ my - my @ mx)


def is_adjoint_matrix(m, tol: float = 1e-8) -> bool:
    return adjoint_deviation(m) <= tol


def adjoint_deviation(m) -> float:
    """Largest violation of the L[Ad_SE(3)] block invariants.

    Checks B = 0, A = D, A in SO(3) and C A^T skew-symmetric.
    """
    m = np.asarray(m, dtype=float)
    a, b, c, d = m[:3, :3], m[:3, 3:], m[3:, :3], m[3:, 3:]
    s = c @ a.T
    return float(
        max(
            np.abs(b).max(),
            np.abs(a - d).max(),
            np.linalg.norm(a.T @ a - np.eye(3)),
            abs(np.linalg.det(a) - 1.0),
            np.abs(s + s.T).max(),
        )
    )


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform rotation from a random unit quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_pose(rng: np.random.Generator, scale: float = 1.0) -> Pose:
    return Pose(random_rotation(rng), scale * rng.standard_normal(3))
