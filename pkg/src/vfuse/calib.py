"""Camera calibration, LiDAR-to-pixel projection and augmentation undo.

Two calibration forms project points:

* :class:`CalibrationMatrix` - a pinhole camera ``K [R | T]`` with a pixel
  scale factor ``h`` applied after the perspective divide.
* :class:`KittiCalibration` - the KITTI chain ``P2 @ R0_rect @ Tr_velo_to_cam``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CalibParseError, FormatError

KITTI_REQUIRED = {"P2": (3, 4), "R0_rect": (3, 3), "Tr_velo_to_cam": (3, 4)}


@dataclass(frozen=True)
class CalibrationMatrix:
    """Pinhole camera with extrinsics mapping the LiDAR frame into the camera frame."""

    K: np.ndarray
    R: np.ndarray
    T: np.ndarray
    h: float = 1.0
    image_size: tuple = None

    def __post_init__(self):
        K = np.asarray(self.K, dtype=np.float64).reshape(3, 3)
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        T = np.asarray(self.T, dtype=np.float64).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-6, rtol=0):
            raise ValueError("rotation R is not orthonormal")
        if not (K[0, 0] > 0 and K[1, 1] > 0):
            raise ValueError("focal lengths fx, fy must be positive")
        if not self.h > 0:
            raise ValueError("scale factor h must be positive")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def from_intrinsics(cls, fx, fy, cx, cy, skew=0.0, R=None, T=None, h=1.0, image_size=None):
        K = np.array([[fx, skew, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
        R = np.eye(3) if R is None else R
        T = np.zeros(3) if T is None else T
        return cls(K, R, T, h, image_size)

    def matrix(self):
        """The 3x4 matrix ``K [R | T]``, without ``h``."""
        return self.K @ np.hstack([self.R, self.T[:, None]])


@dataclass(frozen=True)
class KittiCalibration:
    P2: np.ndarray
    R0_rect: np.ndarray
    Tr_velo_to_cam: np.ndarray
    h: float = 1.0
    image_size: tuple = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name, shape in KITTI_REQUIRED.items():
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(shape)
            )
        if not np.all(np.isfinite(self.matrix())):
            raise ValueError("composite KITTI projection matrix is not finite")

    def homogeneous(self):
        """The three factors padded to 4x4 homogeneous matrices."""
        p2 = np.eye(4)
        p2[:3, :4] = self.P2
        r0 = np.eye(4)
        r0[:3, :3] = self.R0_rect
        tr = np.eye(4)
        tr[:3, :4] = self.Tr_velo_to_cam
        return p2, r0, tr

    def matrix(self):
        """Composite 3x4 projection ``P2 @ R0_rect @ Tr_velo_to_cam``."""
        p2, r0, tr = self.homogeneous()
        return (p2 @ r0 @ tr)[:3]


def parse_kitti_calib_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        key, sep, rest = line.partition(":")
        if not sep:
            raise CalibParseError(f"line {lineno}: expected 'KEY: values'")
        key = key.strip()
        try:
            values[key] = [float(tok) for tok in rest.split()]
        except ValueError as exc:
            raise CalibParseError(f"line {lineno}: non-numeric value for {key}") from exc
    mats = {}
    for key, shape in KITTI_REQUIRED.items():
        if key not in values:
            raise CalibParseError(f"missing required calibration key '{key}'")
        need = shape[0] * shape[1]
        if len(values[key]) != need:
            raise CalibParseError(f"key '{key}' has {len(values[key])} values, expected {need}")
        mats[key] = np.array(values[key]).reshape(shape)
    extra = {k: v for k, v in values.items() if k not in KITTI_REQUIRED}
    return KittiCalibration(mats["P2"], mats["R0_rect"], mats["Tr_velo_to_cam"], extra=extra)


def parse_kitti_calib(path):
    """Read P2, R0_rect and Tr_velo_to_cam from a KITTI ``calib/*.txt`` file.

    Other keys are kept in ``extra`` but otherwise ignored.
    """
    with open(path, "r", encoding="ascii") as fh:
        return parse_kitti_calib_text(fh.read())


def format_kitti_calib(calib):
    lines = []
    for key in ("P0", "P1"):
        if key in calib.extra:
            lines.append(_calib_line(key, calib.extra[key]))
    lines.append(_calib_line("P2", calib.P2.ravel()))
    for key in ("P3",):
        if key in calib.extra:
            lines.append(_calib_line(key, calib.extra[key]))
    lines.append(_calib_line("R0_rect", calib.R0_rect.ravel()))
    lines.append(_calib_line("Tr_velo_to_cam", calib.Tr_velo_to_cam.ravel()))
    for key, vals in calib.extra.items():
        if key not in ("P0", "P1", "P3"):
            lines.append(_calib_line(key, vals))
    return "\n".join(lines) + "\n"


def _calib_line(key, vals):
    return f"{key}: " + " ".join(f"{float(v):.12e}" for v in vals)


def write_kitti_calib(calib, path):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_kitti_calib(calib))


def read_velodyne_bin(path):
    """Load a KITTI velodyne scan as an (M, 4) float32 array of x, y, z, reflectance."""
    raw = np.fromfile(path, dtype="<f4")
    if raw.size % 4:
        raise FormatError(f"{path}: size is not a multiple of 16 bytes")
    return raw.reshape(-1, 4)


def write_velodyne_bin(points, path):
    pts = np.asarray(points)
    if pts.ndim != 2 or pts.shape[1] != 4:
        raise ValueError(f"velodyne points must be (M, 4), got {pts.shape}")
    np.ascontiguousarray(pts, dtype="<f4").tofile(path)


def project_points(points, calib, image_size=None):
    """Project LiDAR-frame points to pixel coordinates.

    Returns ``(pixels, depths, valid)``: ``pixels`` is (N, 2) float64 ``(u, v)``
    already multiplied by the calibration's ``h``, ``depths`` is the camera
    depth ``z_c`` and ``valid`` marks points with ``z_c > 0`` that fall in the
    half-open image rectangle ``[0, W) x [0, H)``. ``image_size`` overrides the
    size stored on the calibration; with neither, only depth is checked.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    M = calib.matrix()
    cam = pts @ M[:, :3].T + M[:, 3]
    depths = cam[:, 2].copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        pixels = cam[:, :2] / depths[:, None]
    pixels *= calib.h
    valid = depths > 0
    size = image_size if image_size is not None else calib.image_size
    if size is not None:
        w, h = size
        u, v = pixels[:, 0], pixels[:, 1]
        valid &= (u >= 0) & (u < w) & (v >= 0) & (v < h)
    return pixels, depths, valid


# --- point cloud augmentation ---------------------------------------------

FLIP = "flip"
ROTATE_Z = "rotate_z"
SCALE = "scale"


@dataclass(frozen=True)
class AugmentationRecord:
    """Ordered list of ``(kind, value)`` transforms applied during augmentation.

    ``kind`` is ``"flip"`` (mirror across the x-z plane, value ignored),
    ``"rotate_z"`` (radians) or ``"scale"`` (positive factor).
    """

    ops: tuple = ()

    def __post_init__(self):
        ops = tuple((str(k), float(v)) for k, v in self.ops)
        for kind, value in ops:
            if kind not in (FLIP, ROTATE_Z, SCALE):
                raise ValueError(f"unknown augmentation '{kind}'")
            if kind == SCALE and not value > 0:
                raise ValueError("scale factor must be positive")
        object.__setattr__(self, "ops", ops)


def _rot_z(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _apply_one(pts, kind, value, inverse):
    if kind == FLIP:
        out = pts.copy()
        out[:, 1] = -out[:, 1]
        return out
    if kind == ROTATE_Z:
        return pts @ _rot_z(-value if inverse else value).T
    return pts / value if inverse else pts * value


def apply_augmentation(points, record):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    for kind, value in record.ops:
        pts = _apply_one(pts, kind, value, inverse=False)
    return pts


def invert_augmentation(points, record):
    """Undo ``record`` by applying each inverse transform in reverse order."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    for kind, value in reversed(record.ops):
        pts = _apply_one(pts, kind, value, inverse=True)
    return pts
