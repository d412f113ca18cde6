"""Virtual decomposition control of a 6-DoF hydraulic manipulator.

Library + CLI simulator: spatial algebra, per-body adaptive dynamics,
closed-chain kinematics, hydraulic actuator plant, deadzone/backlash
inversion, RBF estimators and the orchestrating controller.
"""

__version__ = "0.1.0"
