# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: point-mesh distance, winding numbers, trilinear sampling.

Same contracts as skinret._kernels_np; selected by skinret.backend when the
extension built.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, sqrt

cnp.import_array()


cdef inline double _dot3(double ax, double ay, double az, double bx, double by, double bz) nogil:
    return ax * bx + ay * by + az * bz


cdef double _tri_dist_sq(double px, double py, double pz,
                         double ax, double ay, double az,
                         double bx, double by, double bz,
                         double cx, double cy, double cz) nogil:
    # Ericson closest-point-on-triangle, squared distance.
    cdef double abx = bx - ax, aby = by - ay, abz = bz - az
    cdef double acx = cx - ax, acy = cy - ay, acz = cz - az
    cdef double apx = px - ax, apy = py - ay, apz = pz - az
    cdef double d1 = _dot3(abx, aby, abz, apx, apy, apz)
    cdef double d2 = _dot3(acx, acy, acz, apx, apy, apz)
    cdef double qx, qy, qz, v, w, denom
    if d1 <= 0.0 and d2 <= 0.0:
        qx = ax; qy = ay; qz = az
        return _dot3(px - qx, py - qy, pz - qz, px - qx, py - qy, pz - qz)
    cdef double bpx = px - bx, bpy = py - by, bpz = pz - bz
    cdef double d3 = _dot3(abx, aby, abz, bpx, bpy, bpz)
    cdef double d4 = _dot3(acx, acy, acz, bpx, bpy, bpz)
    if d3 >= 0.0 and d4 <= d3:
        qx = bx; qy = by; qz = bz
        return _dot3(px - qx, py - qy, pz - qz, px - qx, py - qy, pz - qz)
    cdef double vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        qx = ax + v * abx; qy = ay + v * aby; qz = az + v * abz
        return _dot3(px - qx, py - qy, pz - qz, px - qx, py - qy, pz - qz)
    cdef double cpx = px - cx, cpy = py - cy, cpz = pz - cz
    cdef double d5 = _dot3(abx, aby, abz, cpx, cpy, cpz)
    cdef double d6 = _dot3(acx, acy, acz, cpx, cpy, cpz)
    if d6 >= 0.0 and d5 <= d6:
        qx = cx; qy = cy; qz = cz
        return _dot3(px - qx, py - qy, pz - qz, px - qx, py - qy, pz - qz)
    cdef double vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        qx = ax + w * acx; qy = ay + w * acy; qz = az + w * acz
        return _dot3(px - qx, py - qy, pz - qz, px - qx, py - qy, pz - qz)
    cdef double va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        qx = bx + w * (cx - bx); qy = by + w * (cy - by); qz = bz + w * (cz - bz)
        return _dot3(px - qx, py - qy, pz - qz, px - qx, py - qy, pz - qz)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    qx = ax + abx * v + acx * w
    qy = ay + aby * v + acy * w
    qz = az + abz * v + acz * w
    return _dot3(px - qx, py - qy, pz - qz, px - qx, py - qy, pz - qz)


def point_mesh_distances(points, vertices, triangles):
    """Unsigned distance from each point to the closest triangle."""
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] v = np.ascontiguousarray(vertices, dtype=np.float64)
    cdef long long[:, ::1] t = np.ascontiguousarray(triangles, dtype=np.int64)
    cdef Py_ssize_t n_p = p.shape[0], n_t = t.shape[0]
    out_arr = np.empty(n_p, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, f
    cdef double best, d
    cdef long long i0, i1, i2
    with nogil:
        for i in range(n_p):
            best = 1e300
            for f in range(n_t):
                i0 = t[f, 0]; i1 = t[f, 1]; i2 = t[f, 2]
                d = _tri_dist_sq(p[i, 0], p[i, 1], p[i, 2],
                                 v[i0, 0], v[i0, 1], v[i0, 2],
                                 v[i1, 0], v[i1, 1], v[i1, 2],
                                 v[i2, 0], v[i2, 1], v[i2, 2])
                if d < best:
                    best = d
            out[i] = sqrt(best)
    return out_arr


def winding_numbers(points, vertices, triangles):
    """Generalized winding number per point (~1 inside a watertight mesh)."""
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] v = np.ascontiguousarray(vertices, dtype=np.float64)
    cdef long long[:, ::1] t = np.ascontiguousarray(triangles, dtype=np.int64)
    cdef Py_ssize_t n_p = p.shape[0], n_t = t.shape[0]
    out_arr = np.empty(n_p, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, f
    cdef long long i0, i1, i2
    cdef double ax, ay, az, bx, by, bz, cx, cy, cz
    cdef double la, lb, lc, num, den, total
    cdef double four_pi = 4.0 * np.pi
    with nogil:
        for i in range(n_p):
            total = 0.0
            for f in range(n_t):
                i0 = t[f, 0]; i1 = t[f, 1]; i2 = t[f, 2]
                ax = v[i0, 0] - p[i, 0]; ay = v[i0, 1] - p[i, 1]; az = v[i0, 2] - p[i, 2]
                bx = v[i1, 0] - p[i, 0]; by = v[i1, 1] - p[i, 1]; bz = v[i1, 2] - p[i, 2]
                cx = v[i2, 0] - p[i, 0]; cy = v[i2, 1] - p[i, 1]; cz = v[i2, 2] - p[i, 2]
                la = sqrt(ax * ax + ay * ay + az * az)
                lb = sqrt(bx * bx + by * by + bz * bz)
                lc = sqrt(cx * cx + cy * cy + cz * cz)
                num = ax * (by * cz - bz * cy) + ay * (bz * cx - bx * cz) + az * (bx * cy - by * cx)
                den = (la * lb * lc
                       + _dot3(ax, ay, az, bx, by, bz) * lc
                       + _dot3(bx, by, bz, cx, cy, cz) * la
                       + _dot3(cx, cy, cz, ax, ay, az) * lb)
                total += 2.0 * atan2(num, den)
            out[i] = total / four_pi
    return out_arr


def trilinear(values, origin, double spacing, points):
    """Trilinear interpolation and spatial gradient; cell indices clamped to grid."""
    cdef double[:, :, ::1] val = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] org = np.ascontiguousarray(origin, dtype=np.float64)
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n_p = p.shape[0]
    cdef Py_ssize_t nx = val.shape[0], ny = val.shape[1], nz = val.shape[2]
    vals_arr = np.empty(n_p, dtype=np.float64)
    grads_arr = np.empty((n_p, 3), dtype=np.float64)
    cdef double[::1] vals = vals_arr
    cdef double[:, ::1] grads = grads_arr
    cdef Py_ssize_t i, ix, iy, iz
    cdef double ux, uy, uz, fx, fy, fz
    cdef double v000, v100, v010, v110, v001, v101, v011, v111
    cdef double c00, c10, c01, c11, c0, c1, d00, d10, d01, d11, e0, e1
    with nogil:
        for i in range(n_p):
            ux = (p[i, 0] - org[0]) / spacing
            uy = (p[i, 1] - org[1]) / spacing
            uz = (p[i, 2] - org[2]) / spacing
            ix = <Py_ssize_t>ux
            iy = <Py_ssize_t>uy
            iz = <Py_ssize_t>uz
            if ux < 0: ix = -1
            if uy < 0: iy = -1
            if uz < 0: iz = -1
            if ix < 0: ix = 0
            if iy < 0: iy = 0
            if iz < 0: iz = 0
            if ix > nx - 2: ix = nx - 2
            if iy > ny - 2: iy = ny - 2
            if iz > nz - 2: iz = nz - 2
            fx = ux - ix
            fy = uy - iy
            fz = uz - iz
            if fx < 0: fx = 0
            if fy < 0: fy = 0
            if fz < 0: fz = 0
            if fx > 1: fx = 1
            if fy > 1: fy = 1
            if fz > 1: fz = 1
            v000 = val[ix, iy, iz]
            v100 = val[ix + 1, iy, iz]
            v010 = val[ix, iy + 1, iz]
            v110 = val[ix + 1, iy + 1, iz]
            v001 = val[ix, iy, iz + 1]
            v101 = val[ix + 1, iy, iz + 1]
            v011 = val[ix, iy + 1, iz + 1]
            v111 = val[ix + 1, iy + 1, iz + 1]
            c00 = v000 + fx * (v100 - v000)
            c10 = v010 + fx * (v110 - v010)
            c01 = v001 + fx * (v101 - v001)
            c11 = v011 + fx * (v111 - v011)
            c0 = c00 + fy * (c10 - c00)
            c1 = c01 + fy * (c11 - c01)
            vals[i] = c0 + fz * (c1 - c0)
            d00 = v100 - v000
            d10 = v110 - v010
            d01 = v101 - v001
            d11 = v111 - v011
            e0 = d00 + fy * (d10 - d00)
            e1 = d01 + fy * (d11 - d01)
            grads[i, 0] = (e0 + fz * (e1 - e0)) / spacing
            grads[i, 1] = ((c10 - c00) + fz * ((c11 - c01) - (c10 - c00))) / spacing
            grads[i, 2] = (c1 - c0) / spacing
    return vals_arr, grads_arr
