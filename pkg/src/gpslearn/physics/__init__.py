"""Physics kernels for the simulated environments.

The compiled extension is used when it was built; otherwise the pure-Python
module is loaded. Set ``GPSLEARN_PURE_PYTHON=1`` to force the fallback.
``BACKEND`` names the active implementation.
"""

import os

from . import _physics_py as python_backend
from ._physics_py import ARM_PARAM_NAMES, POINTMASS_PARAM_NAMES

compiled_backend = None
if os.environ.get("GPSLEARN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _physics_ext as compiled_backend
    except ImportError:
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

arm_kinematics = _active.arm_kinematics
arm_accel = _active.arm_accel
arm_step = _active.arm_step
arm_energy = _active.arm_energy
pointmass_step = _active.pointmass_step

__all__ = [
    "ARM_PARAM_NAMES",
    "POINTMASS_PARAM_NAMES",
    "BACKEND",
    "arm_kinematics",
    "arm_accel",
    "arm_step",
    "arm_energy",
    "pointmass_step",
    "python_backend",
    "compiled_backend",
]
