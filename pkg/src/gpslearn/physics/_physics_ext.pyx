# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled physics kernels; mirrors ``_physics_py`` operation for operation."""

from libc.math cimport cos, sin, tanh, sqrt

cdef double FRICTION_VEL = 0.01


cdef inline void _kin(double q1, double q2, double dq1, double dq2, const double[::1] p,
                      double* out) noexcept nogil:
    cdef double l1 = p[0], l2 = p[1], peg = p[10], phi = p[11]
    cdef double ex = l1 * cos(q1)
    cdef double ey = l1 * sin(q1)
    cdef double bx = ex + l2 * cos(q1 + q2)
    cdef double by = ey + l2 * sin(q1 + q2)
    cdef double tx = bx + peg * cos(q1 + q2 + phi)
    cdef double ty = by + peg * sin(q1 + q2 + phi)
    out[0] = tx
    out[1] = ty
    out[2] = bx
    out[3] = by
    out[4] = -ty * dq1 - (ty - ey) * dq2
    out[5] = tx * dq1 + (tx - ex) * dq2
    out[6] = -by * dq1 - (by - ey) * dq2
    out[7] = bx * dq1 + (bx - ex) * dq2


cdef inline void _contact(double px, double py, double vx, double vy, const double[::1] p,
                          double* f) noexcept nogil:
    cdef double k = p[7], cd = p[8], mu = p[9]
    cdef double hx = p[12], hy = p[13], ax = p[14], ay = p[15]
    cdef double hw = p[16], depth = p[17], cw = p[18], cdepth = p[19]
    cdef double tx = ay
    cdef double ty = -ax
    cdef double rx = px - hx
    cdef double ry = py - hy
    cdef double s = rx * tx + ry * ty
    cdef double n = rx * ax + ry * ay
    cdef double width, abs_s, sgn, pen, pen_wall, nx, ny, vn, fn, gx, gy, vt, ft
    f[0] = 0.0
    f[1] = 0.0
    if n <= 0.0:
        return
    width = hw
    if cdepth > 0.0 and n < cdepth:
        width = hw + cw * (1.0 - n / cdepth)
    abs_s = s if s >= 0.0 else -s
    sgn = 1.0 if s >= 0.0 else -1.0
    if abs_s < width:
        if n <= depth:
            return
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
        return
    gx = -ny
    gy = nx
    vt = vx * gx + vy * gy
    ft = -mu * fn * tanh(vt / FRICTION_VEL)
    f[0] = fn * nx + ft * gx
    f[1] = fn * ny + ft * gy


cdef inline void _accel(double q1, double q2, double dq1, double dq2, double tau1, double tau2,
                        const double[::1] p, double* acc) noexcept nogil:
    cdef double l1 = p[0], l2 = p[1], m1 = p[2], m2 = p[3]
    cdef double lc1 = 0.5 * l1
    cdef double lc2 = 0.5 * l2
    cdef double i1 = m1 * l1 * l1 / 12.0
    cdef double i2 = m2 * l2 * l2 / 12.0
    cdef double a = i1 + i2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2)
    cdef double b = m2 * l1 * lc2
    cdef double d = i2 + m2 * lc2 * lc2
    cdef double c2 = cos(q2)
    cdef double s2 = sin(q2)
    cdef double m11 = a + 2.0 * b * c2
    cdef double m12 = d + b * c2
    cdef double m22 = d
    cdef double g1 = p[6] * tau1 - p[4] * dq1 + b * s2 * (2.0 * dq1 * dq2 + dq2 * dq2)
    cdef double g2 = p[6] * tau2 - p[5] * dq2 - b * s2 * dq1 * dq1
    cdef double ex, ey, det
    cdef double kin[8]
    cdef double f[2]
    if p[20] > 0.0:
        ex = l1 * cos(q1)
        ey = l1 * sin(q1)
        _kin(q1, q2, dq1, dq2, p, kin)
        _contact(kin[0], kin[1], kin[4], kin[5], p, f)
        g1 += -kin[1] * f[0] + kin[0] * f[1]
        g2 += -(kin[1] - ey) * f[0] + (kin[0] - ex) * f[1]
        _contact(kin[2], kin[3], kin[6], kin[7], p, f)
        g1 += -kin[3] * f[0] + kin[2] * f[1]
        g2 += -(kin[3] - ey) * f[0] + (kin[2] - ex) * f[1]
    det = m11 * m22 - m12 * m12
    acc[0] = (m22 * g1 - m12 * g2) / det
    acc[1] = (m11 * g2 - m12 * g1) / det


def arm_kinematics(double q1, double q2, double dq1, double dq2, const double[::1] p):
    cdef double out[8]
    _kin(q1, q2, dq1, dq2, p, out)
    return out[0], out[1], out[2], out[3], out[4], out[5], out[6], out[7]


def arm_accel(double q1, double q2, double dq1, double dq2, double tau1, double tau2,
              const double[::1] p):
    cdef double acc[2]
    _accel(q1, q2, dq1, dq2, tau1, tau2, p, acc)
    return acc[0], acc[1]


def arm_step(double q1, double q2, double dq1, double dq2, double tau1, double tau2,
             const double[::1] p, int nsub):
    cdef double h = p[21] / nsub
    cdef double acc[2]
    cdef int i
    with nogil:
        for i in range(nsub):
            _accel(q1, q2, dq1, dq2, tau1, tau2, p, acc)
            dq1 = dq1 + h * acc[0]
            dq2 = dq2 + h * acc[1]
            q1 = q1 + h * dq1
            q2 = q2 + h * dq2
    return q1, q2, dq1, dq2


def arm_energy(double q1, double q2, double dq1, double dq2, const double[::1] p):
    cdef double l1 = p[0], l2 = p[1], m1 = p[2], m2 = p[3]
    cdef double lc1 = 0.5 * l1
    cdef double lc2 = 0.5 * l2
    cdef double i1 = m1 * l1 * l1 / 12.0
    cdef double i2 = m2 * l2 * l2 / 12.0
    cdef double a = i1 + i2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2)
    cdef double b = m2 * l1 * lc2
    cdef double d = i2 + m2 * lc2 * lc2
    cdef double c2 = cos(q2)
    cdef double ke = 0.5 * ((a + 2.0 * b * c2) * dq1 * dq1 + 2.0 * (d + b * c2) * dq1 * dq2 + d * dq2 * dq2)
    cdef double pe = 0.0
    cdef double kin[8]
    cdef double f[2]
    cdef double fm
    cdef int j
    if p[20] > 0.0:
        _kin(q1, q2, 0.0, 0.0, p, kin)
        for j in range(2):
            _contact(kin[2 * j], kin[2 * j + 1], 0.0, 0.0, p, f)
            fm = sqrt(f[0] * f[0] + f[1] * f[1])
            pe += 0.5 * fm * fm / p[7]
    return ke + pe


def pointmass_step(double x, double y, double vx, double vy, double ux, double uy,
                   const double[::1] p, int nsub):
    cdef double m = p[0], c_out = p[1], c_in = p[2], boundary = p[3], scale = p[4]
    cdef double h = p[5] / nsub
    cdef double c, ax, ay
    cdef int i
    for i in range(nsub):
        c = c_in if y < boundary else c_out
        ax = (scale * ux - c * vx) / m
        ay = (scale * uy - c * vy) / m
        vx = vx + h * ax
        vy = vy + h * ay
        x = x + h * vx
        y = y + h * vy
    return x, y, vx, vy
