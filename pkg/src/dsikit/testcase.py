"""Three-input linear benchmark: X1 + X2 + X3 with correlated Gaussian inputs.

Variances are (2, 8, 8); ``CORRELATION_SETS`` lists (rho12, rho13, rho23)
for the ten configurations, and ``closed_form_jacobians`` gives the exact
dependency-model derivatives for every (u, j) pair of the three-input block.
"""

import numpy as np

from dsikit.inputs import build_input_spec, register_builtin_model

VARIANCES = (2.0, 8.0, 8.0)
BETA = (1.0, 1.0, 1.0)

CORRELATION_SETS = {
    "C1": (1.0, 1.0, 1.0),
    "C2": (0.25, 0.5, 0.75),
    "C3": (0.01, 0.0, 0.75),
    "C4": (0.5, 0.5, 0.5),
    "C5": (-0.5, 0.5, -0.5),
    "C6": (0.0, 0.6, 0.0),
    "C7": (0.0, 0.0, 0.0),
    "C8": (0.25, 0.8, 0.5),
    "C9": (0.0, 0.75, 0.45),
    "C10": (-0.25, 0.25, 0.25),
}

DEGENERATE_SETS = ("C1",)


def covariance(rhos, variances=VARIANCES):
    r12, r13, r23 = rhos
    sd = np.sqrt(np.asarray(variances, dtype=float))
    corr = np.array([[1.0, r12, r13], [r12, 1.0, r23], [r13, r23, 1.0]])
    return corr * np.outer(sd, sd)


def input_spec(name, variances=VARIANCES):
    return build_input_spec(np.zeros(3), covariance(CORRELATION_SETS[name], variances))


def linear_model():
    return register_builtin_model("linear", BETA, d=3)


def closed_form_jacobians(rhos, variances=VARIANCES):
    """All twelve derivative vectors, keyed by ``(u, j)`` with 0-based inputs."""
    r12, r13, r23 = rhos
    s1, s2, s3 = np.sqrt(np.asarray(variances, dtype=float))
    det = 1 - r12**2 - r13**2 - r23**2 + 2 * r12 * r13 * r23
    c12, c13, c23 = (np.sqrt(1 - r**2) for r in (r12, r13, r23))
    J = {
        ((), 0): [1.0, r12 * s2 / s1, r13 * s3 / s1],
        ((), 1): [r12 * s1 / s2, 1.0, r23 * s3 / s2],
        ((), 2): [r13 * s1 / s3, r23 * s2 / s3, 1.0],
        ((0,), 1): [0.0, c12, s3 * (r23 - r12 * r13) / (s2 * c12)],
        ((0,), 2): [0.0, s2 * (r23 - r12 * r13) / (s3 * c13), c13],
        ((1,), 0): [c12, 0.0, s3 * (r13 - r12 * r23) / (s1 * c12)],
        ((1,), 2): [s1 * (r13 - r12 * r23) / (s3 * c23), 0.0, c23],
        ((2,), 0): [c13, s2 * (r12 - r13 * r23) / (s1 * c13), 0.0],
        ((2,), 1): [s1 * (r12 - r13 * r23) / (s2 * c23), c23, 0.0],
        ((0, 1), 2): [0.0, 0.0, np.sqrt(det / (1 - r12**2))],
        ((1, 2), 0): [np.sqrt(det / (1 - r23**2)), 0.0, 0.0],
        ((0, 2), 1): [0.0, np.sqrt(det / (1 - r13**2)), 0.0],
    }
    return {k: np.array(v) for k, v in J.items()}
