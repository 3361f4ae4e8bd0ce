"""Physical constants and unit conversions used across the package.

Internal unit conventions:

* energies are E/h in Hz
* angular frequencies in rad/s
* lengths in meters inside numerics; nm at API boundaries where noted
* magnetic field in gauss, angles in degrees at API boundaries
* polarizabilities in atomic units (a.u.)

The squared field amplitude ``e0sq`` carried by a polarization sample is the
reduced quantity I / (2 eps0 c) in (V/m)^2, chosen so that a state with
scalar polarizability alpha (SI) has potential energy U = -alpha * e0sq.
"""

from __future__ import annotations

import scipy.constants as _c

H_PLANCK = _c.h                      # J s
HBAR = _c.hbar                       # J s
K_B = _c.k                           # J/K
EPS0 = _c.epsilon_0                  # F/m
C_LIGHT = _c.c                       # m/s

# 1 atomic unit of polarizability, C^2 m^2 / J.
AU_POLARIZABILITY = _c.value("atomic unit of electric polarizability")

# Bohr magneton over h, in Hz per gauss (1 G = 1e-4 T).
MU_B_HZ_PER_G = _c.value("Bohr magneton") / _c.h * 1e-4

# Atom mass: the 88 u bosonic strontium isotope.
MASS_SR88 = 87.9056 * _c.value("atomic mass constant")   # kg


def intensity_to_e0sq(intensity_w_m2: float) -> float:
    """Reduced squared field I/(2 eps0 c) for a plane-wave intensity."""
    return intensity_w_m2 / (2.0 * EPS0 * C_LIGHT)


def e0sq_au_to_hz(e0sq: float) -> float:
    """Energy scale (Hz) of 1 a.u. of polarizability at reduced field e0sq."""
    return e0sq * AU_POLARIZABILITY / H_PLANCK
