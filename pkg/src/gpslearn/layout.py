"""Index layout of environment state vectors."""

from dataclasses import dataclass


@dataclass(frozen=True)
class StateLayout:
    """Fixed slices of the observation vector.

    Mechanical environments order the state as joint angles, joint
    velocities, object-point Cartesian velocities, displacement of the object
    points from their targets (``p_t - p*``), and the previous action. Slices
    that do not apply to an environment are empty.
    """

    joint_angles: slice
    joint_velocities: slice
    point_velocities: slice
    target_displacement: slice
    prev_action: slice
    dim: int

    @classmethod
    def mechanical(cls, n_joints, n_points, n_actions, space_dim=2):
        nq, npnt = n_joints, n_points * space_dim
        edges = [0, nq, 2 * nq, 2 * nq + npnt, 2 * nq + 2 * npnt, 2 * nq + 2 * npnt + n_actions]
        s = [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]
        return cls(*s, dim=edges[-1])

    @property
    def n_joints(self):
        return self.joint_angles.stop - self.joint_angles.start

    @property
    def n_point_coords(self):
        return self.target_displacement.stop - self.target_displacement.start

    def as_dict(self):
        return {
            name: [getattr(self, name).start, getattr(self, name).stop]
            for name in (
                "joint_angles",
                "joint_velocities",
                "point_velocities",
                "target_displacement",
                "prev_action",
            )
        }
