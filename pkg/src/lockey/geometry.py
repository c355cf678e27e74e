"""Planar geometry helpers shared by the mobility, observation and
localization code.

All functions broadcast over leading axes: points are arrays whose last
axis has length 2, angles and distances drop that axis.  Conventions used
throughout the package:

* ``bearing(p, q)`` is the angle of ``q`` as seen from ``p``, i.e.
  ``atan2(qy - py, qx - px)``, wrapped into ``(-pi, pi]``.
* ``angle_at(e, p, q)`` is the vertex angle at ``e`` in the triangle
  ``(e, p, q)``, obtained from the cosine law, always in ``[0, pi]``.
* Degenerate configurations (coincident points) yield angle 0 by
  convention rather than an error, so that observation models stay
  well defined on every grid state.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi

__all__ = ["dist", "bearing", "angle_at", "wrap_angle"]


def dist(p, q):
    """Euclidean distance between points ``p`` and ``q``."""
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    return np.hypot(d[..., 0], d[..., 1])


def wrap_angle(x):
    """Wrap angles into the half-open interval ``(-pi, pi]``."""
    x = np.asarray(x, dtype=float)
    return np.pi - np.mod(np.pi - x, TWO_PI)


def bearing(p, q):
    """Angle of ``q`` as seen from ``p``; 0 when the points coincide.

    ``atan2(0, 0)`` already returns 0, which matches the degeneracy
    convention, so no special casing is needed.
    """
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    return np.arctan2(d[..., 1], d[..., 0])


def angle_at(e, p, q):
    """Vertex angle at ``e`` between directions to ``p`` and ``q``.

    Computed from the cosine law and clipped into ``[-1, 1]`` before the
    arccos so rounding noise cannot escape the domain.  Returns 0 when
    either point coincides with ``e``.
    """
    e = np.asarray(e, dtype=float)
    dp = dist(e, p)
    dq = dist(e, q)
    dpq = dist(p, q)
    denom = 2.0 * dp * dq
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (dp**2 + dq**2 - dpq**2) / denom
    c = np.where(denom > 0.0, c, 1.0)
    return np.arccos(np.clip(c, -1.0, 1.0))
