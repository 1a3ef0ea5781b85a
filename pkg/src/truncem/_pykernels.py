"""Pure numpy stepping loop; the fallback for the compiled kernels.

Paths are vectorised along the first axis.  The arithmetic order matches
``_ckernels.pyx`` so that both backends agree bit-for-bit on the built-in
problems.
"""

import numpy as np


def _norms(x):
    sq = x[:, 0] * x[:, 0]
    for j in range(1, x.shape[1]):
        sq = sq + x[:, j] * x[:, j]
    return np.sqrt(sq)


def truncate_rows(x, radius):
    """Radially clip each row of ``x`` to norm ``radius`` (inf disables).

    The scale is nudged down an ulp at a time until the computed norm of the
    clipped row is <= radius, so clipping twice changes nothing.
    """
    if radius == np.inf:
        return x
    norm = _norms(x)
    outside = norm > radius
    if not outside.any():
        return x
    scale = np.ones_like(norm)
    np.divide(radius, norm, out=scale, where=outside)
    y = x * scale[:, None]
    over = outside & (_norms(y) > radius)
    while over.any():
        scale[over] = np.nextafter(scale[over], 0.0)
        y[over] = x[over] * scale[over, None]
        over = outside & (_norms(y) > radius)
    return y


def em_rows(problem, t, x, h, dw, radius):
    """One truncated EM step for every row: ``dw`` has shape (n, m)."""
    xt = truncate_rows(x, radius)
    mu = problem.drift(t, xt)
    sig = problem.diffusion(t, xt)
    out = x + mu * h
    for r in range(dw.shape[1]):
        out = out + sig[..., r] * dw[:, r:r + 1]
    return out


def advance(problem, x, dW, t0, dt, k_start, h, radius,
            record_idx=None, recorded=None, traj=None):
    """Advance the rows of ``x`` in place through ``dW.shape[1]`` steps.

    Step ``j`` has global index ``k = k_start + j``, is evaluated at time
    ``t0 + k*dt`` and has length ``h[j]``.  Rows whose ``record_idx`` equals
    the global index of the current state copy it into ``recorded``; ``traj``
    (shape (n, K+1, d)) receives every state when given.
    """
    n_steps = dW.shape[1]
    with np.errstate(all="ignore"):
        for j in range(n_steps + 1):
            k = k_start + j
            if record_idx is not None:
                hit = record_idx == k
                if hit.any():
                    recorded[hit] = x[hit]
            if traj is not None:
                traj[:, j] = x
            if j == n_steps:
                break
            x[...] = em_rows(problem, t0 + k * dt, x, h[j], dW[:, j], radius)
    return x
