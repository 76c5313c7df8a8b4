"""Least-squares feature triangulation in inverse-depth form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..state import StereoExtrinsics


@dataclass
class TriangulationConfig:
    max_iterations: int = 20
    step_tolerance: float = 1e-8
    min_depth: float = 0.1
    max_rms_sigmas: float = 5.0
    # Relative eigenvalue below which a ray bundle is treated as degenerate.
    degeneracy_tolerance: float = 1e-9


@dataclass
class TriangulationResult:
    p_G: np.ndarray
    rms_reprojection: float
    converged: bool
    iterations: int
    reason: str | None = None


def _relative_views(observations, cams, ext: StereoExtrinsics):
    """Per-view rotation/translation from the anchor left camera to each
    left/right camera, plus the matching 2-vector measurements."""
    anchor = cams[observations[0].cam_id]
    C_A = anchor.rotation
    R21 = ext.R_C2C1
    Rs, ts, zs = [], [], []
    for obs in observations:
        cam = cams[obs.cam_id]
        C_i = cam.rotation
        R = C_i @ C_A.T
        t = C_i @ (anchor.p_GC - cam.p_GC)
        Rs += [R, R21 @ R]
        ts += [t, R21 @ (t - ext.p_C1C2)]
        zs += [obs.z[0:2], obs.z[2:4]]
    return C_A, anchor.p_GC, np.array(Rs), np.array(ts), np.array(zs)


def _rays_system(origins, dirs):
    """Normal equations of the point closest to a bundle of rays."""
    d = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    M = np.eye(3) - d[:, :, None] * d[:, None, :]
    return M.sum(axis=0), np.einsum("nij,nj->i", M, origins)


def _initial_guess(Rs, ts, zs, tol):
    # Rays in the anchor frame: camera centre -R^T t, direction R^T (u, v, 1).
    origins = -np.einsum("nji,nj->ni", Rs, ts)
    dirs = np.einsum("nji,nj->ni", Rs, np.hstack([zs, np.ones((len(zs), 1))]))
    for n in (2, len(Rs)):
        A, b = _rays_system(origins[:n], dirs[:n])
        w = np.linalg.eigvalsh(A)
        if w[0] > tol * w[-1]:
            p = np.linalg.solve(A, b)
            if p[2] > 0.0:
                return p
    return None


def _residuals(x, Rs, ts, zs):
    h = Rs @ np.r_[x[0], x[1], 1.0] + x[2] * ts
    return (zs - h[:, :2] / h[:, 2:3]).ravel(), h


def _jacobian(x, Rs, ts, h):
    dh = np.concatenate([Rs[:, :, 0:1], Rs[:, :, 1:2], ts[:, :, None]], axis=2)
    inv_z = 1.0 / h[:, 2]
    J = np.empty((len(h), 2, 3))
    J[:, 0] = inv_z[:, None] * (dh[:, 0] - (h[:, 0] * inv_z)[:, None] * dh[:, 2])
    J[:, 1] = inv_z[:, None] * (dh[:, 1] - (h[:, 1] * inv_z)[:, None] * dh[:, 2])
    # residual = z - prediction
    return -J.reshape(-1, 3)


def triangulate(observations, cams, ext: StereoExtrinsics, sigma_im: float,
                config: TriangulationConfig | None = None) -> TriangulationResult:
    """Estimate the world position of a feature from all its stereo views.

    ``cams`` maps camera id to CamState. The point is parametrized as
    ``(X/Z, Y/Z, 1/Z)`` in the first observing left camera and refined by
    Levenberg-Marquardt on the stacked reprojection errors.
    """
    cfg = config or TriangulationConfig()
    C_A, p_A, Rs, ts, zs = _relative_views(observations, cams, ext)
    nan = np.full(3, np.nan)

    p0 = _initial_guess(Rs, ts, zs, cfg.degeneracy_tolerance)
    if p0 is None:
        return TriangulationResult(nan, np.inf, False, 0, "triangulation_degenerate")
    x = np.array([p0[0] / p0[2], p0[1] / p0[2], 1.0 / p0[2]])

    r, h = _residuals(x, Rs, ts, zs)
    cost = r @ r
    lam = 1e-3
    converged = False
    it = 0
    while it < cfg.max_iterations:
        it += 1
        J = _jacobian(x, Rs, ts, h)
        JtJ = J.T @ J
        g = J.T @ r
        A = JtJ + lam * np.diag(np.diag(JtJ))
        try:
            dx = -np.linalg.solve(A, g)
        except np.linalg.LinAlgError:
            return TriangulationResult(nan, np.inf, False, it, "triangulation_degenerate")
        x_new = x + dx
        r_new, h_new = _residuals(x_new, Rs, ts, zs)
        cost_new = r_new @ r_new
        if np.all(h_new[:, 2] > 0) and cost_new <= cost:
            x, r, h, cost = x_new, r_new, h_new, cost_new
            lam = max(lam / 10.0, 1e-10)
            if np.linalg.norm(dx) < cfg.step_tolerance:
                converged = True
                break
        else:
            lam *= 10.0
            if np.linalg.norm(dx) < cfg.step_tolerance:
                converged = True
                break

    s = np.linalg.svd(_jacobian(x, Rs, ts, h), compute_uv=False)
    rms = float(np.sqrt(cost / len(r)))
    p_anchor = np.array([x[0], x[1], 1.0]) / x[2] if x[2] != 0 else nan
    p_G = C_A.T @ p_anchor + p_A
    if not converged:
        return TriangulationResult(p_G, rms, False, it, "triangulation_diverged")
    if s[-1] <= cfg.degeneracy_tolerance * s[0]:
        return TriangulationResult(p_G, rms, False, it, "triangulation_degenerate")
    if not x[2] > 0 or 1.0 / x[2] < cfg.min_depth or np.any(h[:, 2] <= 0):
        return TriangulationResult(p_G, rms, False, it, "triangulation_depth")
    if rms > cfg.max_rms_sigmas * sigma_im:
        return TriangulationResult(p_G, rms, False, it, "triangulation_rms")
    return TriangulationResult(p_G, rms, True, it)
