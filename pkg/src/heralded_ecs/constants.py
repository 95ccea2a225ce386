"""Physical constants (CODATA 2018, SI units)."""

HBAR = 1.054571817e-34  # J s
K_B = 1.380649e-23  # J / K
G_NEWTON = 6.67430e-11  # m^3 / (kg s^2)

TWO_PI = 6.283185307179586
