"""Pure-Python physics kernels.

Reference implementation of the compiled ``_physics_ext`` module. The
arithmetic is written in the same order as the Cython source so both
backends agree to rounding.

Arm parameter vector layout (see ``ARM_PARAM_NAMES``) and point-mass
parameter vector layout (``POINTMASS_PARAM_NAMES``) are shared with the
extension.
"""

import math

ARM_PARAM_NAMES = (
    "l1", "l2", "m1", "m2", "damping1", "damping2", "torque_scale",
    "stiffness", "contact_damping", "friction",
    "peg_length", "peg_angle",
    "hole_x", "hole_y", "axis_x", "axis_y",
    "half_width", "depth", "chamfer_width", "chamfer_depth",
    "contact_enabled", "dt",
)  # fmt: skip
POINTMASS_PARAM_NAMES = (
    "mass", "viscosity_out", "viscosity_in", "boundary_y", "force_scale", "dt",
)  # fmt: skip

FRICTION_VEL = 0.01


def arm_kinematics(q1, q2, dq1, dq2, p):
    """Object points and their velocities: (tip_x, tip_y, base_x, base_y, vtip_x, vtip_y, vbase_x, vbase_y)."""
    l1, l2, peg, phi = p[0], p[1], p[10], p[11]
    ex = l1 * math.cos(q1)
    ey = l1 * math.sin(q1)
    bx = ex + l2 * math.cos(q1 + q2)
    by = ey + l2 * math.sin(q1 + q2)
    tx = bx + peg * math.cos(q1 + q2 + phi)
    ty = by + peg * math.sin(q1 + q2 + phi)
    vtx = -ty * dq1 - (ty - ey) * dq2
    vty = tx * dq1 + (tx - ex) * dq2
    vbx = -by * dq1 - (by - ey) * dq2
    vby = bx * dq1 + (bx - ex) * dq2
    return tx, ty, bx, by, vtx, vty, vbx, vby


def _contact_force(px, py, vx, vy, p):
    """Penalty-spring force on one object point from the holed block."""
    k, cd, mu = p[7], p[8], p[9]
    hx, hy, ax, ay = p[12], p[13], p[14], p[15]
    hw, depth, cw, cdepth = p[16], p[17], p[18], p[19]
    tx = ay
    ty = -ax
    rx = px - hx
    ry = py - hy
    s = rx * tx + ry * ty
    n = rx * ax + ry * ay
    if n <= 0.0:
        return 0.0, 0.0
    width = hw
    if cdepth > 0.0 and n < cdepth:
        width = hw + cw * (1.0 - n / cdepth)
    abs_s = s if s >= 0.0 else -s
    sgn = 1.0 if s >= 0.0 else -1.0
    if abs_s < width:
        if n <= depth:
            return 0.0, 0.0
        pen = n - depth
        nx = -ax
        ny = -ay
    else:
        pen_wall = abs_s - width
        if n <= pen_wall:
            pen = n
            nx = -ax
            ny = -ay
        else:
            pen = pen_wall
            nx = -sgn * tx
            ny = -sgn * ty
    vn = vx * nx + vy * ny
    fn = k * pen - cd * vn
    if fn <= 0.0:
        return 0.0, 0.0
    gx = -ny
    gy = nx
    vt = vx * gx + vy * gy
    ft = -mu * fn * math.tanh(vt / FRICTION_VEL)
    return fn * nx + ft * gx, fn * ny + ft * gy


def arm_accel(q1, q2, dq1, dq2, tau1, tau2, p):
    l1, l2, m1, m2 = p[0], p[1], p[2], p[3]
    lc1 = 0.5 * l1
    lc2 = 0.5 * l2
    i1 = m1 * l1 * l1 / 12.0
    i2 = m2 * l2 * l2 / 12.0
    a = i1 + i2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2)
    b = m2 * l1 * lc2
    d = i2 + m2 * lc2 * lc2
    c2 = math.cos(q2)
    s2 = math.sin(q2)
    m11 = a + 2.0 * b * c2
    m12 = d + b * c2
    m22 = d
    g1 = p[6] * tau1 - p[4] * dq1 + b * s2 * (2.0 * dq1 * dq2 + dq2 * dq2)
    g2 = p[6] * tau2 - p[5] * dq2 - b * s2 * dq1 * dq1
    if p[20] > 0.0:
        ex = l1 * math.cos(q1)
        ey = l1 * math.sin(q1)
        tx, ty, bx, by, vtx, vty, vbx, vby = arm_kinematics(q1, q2, dq1, dq2, p)
        fx, fy = _contact_force(tx, ty, vtx, vty, p)
        g1 += -ty * fx + tx * fy
        g2 += -(ty - ey) * fx + (tx - ex) * fy
        fx, fy = _contact_force(bx, by, vbx, vby, p)
        g1 += -by * fx + bx * fy
        g2 += -(by - ey) * fx + (bx - ex) * fy
    det = m11 * m22 - m12 * m12
    return (m22 * g1 - m12 * g2) / det, (m11 * g2 - m12 * g1) / det


def arm_step(q1, q2, dq1, dq2, tau1, tau2, p, nsub):
    """Advance the arm by one control period with ``nsub`` semi-implicit Euler substeps."""
    h = p[21] / nsub
    for _ in range(nsub):
        a1, a2 = arm_accel(q1, q2, dq1, dq2, tau1, tau2, p)
        dq1 = dq1 + h * a1
        dq2 = dq2 + h * a2
        q1 = q1 + h * dq1
        q2 = q2 + h * dq2
    return q1, q2, dq1, dq2


def arm_energy(q1, q2, dq1, dq2, p):
    """Kinetic energy plus contact spring potential."""
    l1, l2, m1, m2 = p[0], p[1], p[2], p[3]
    lc1 = 0.5 * l1
    lc2 = 0.5 * l2
    i1 = m1 * l1 * l1 / 12.0
    i2 = m2 * l2 * l2 / 12.0
    a = i1 + i2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2)
    b = m2 * l1 * lc2
    d = i2 + m2 * lc2 * lc2
    c2 = math.cos(q2)
    ke = 0.5 * ((a + 2.0 * b * c2) * dq1 * dq1 + 2.0 * (d + b * c2) * dq1 * dq2 + d * dq2 * dq2)
    pe = 0.0
    if p[20] > 0.0:
        tx, ty, bx, by, _, _, _, _ = arm_kinematics(q1, q2, 0.0, 0.0, p)
        for px, py in ((tx, ty), (bx, by)):
            fx, fy = _contact_force(px, py, 0.0, 0.0, p)
            f = math.sqrt(fx * fx + fy * fy)
            pe += 0.5 * f * f / p[7]
    return ke + pe


def pointmass_step(x, y, vx, vy, ux, uy, p, nsub):
    m, c_out, c_in, boundary, scale = p[0], p[1], p[2], p[3], p[4]
    h = p[5] / nsub
    for _ in range(nsub):
        c = c_in if y < boundary else c_out
        ax = (scale * ux - c * vx) / m
        ay = (scale * uy - c * vy) / m
        vx = vx + h * ax
        vy = vy + h * ay
        x = x + h * vx
        y = y + h * vy
    return x, y, vx, vy
