"""Conversions between laboratory units and the internal rad/ps convention.

Every rate and frequency inside the package is an angular frequency in
rad/ps. The helpers here are the only place where GHz, micro-electronvolts,
wavelength offsets and quality factors enter.
"""

import math

from scipy import constants

from .errors import UnitError

#: Speed of light in nm/ps.
C_NM_PER_PS = constants.c * 1e9 / 1e12
#: Reduced Planck constant in ueV*ps (so that E[ueV] / HBAR = omega[rad/ps]).
HBAR_UEV_PS = constants.hbar / constants.e * 1e6 * 1e12

DEFAULT_WAVELENGTH_NM = 920.0

RAD_PS = "rad/ps"
_ALIASES = {
    "rad/ps": RAD_PS,
    "1/ps": RAD_PS,
    "ghz": "GHz",
    "uev": "ueV",
    "µev": "ueV",
    "μev": "ueV",
    "nm": "nm",
    "q": "Q",
}


def canonical_unit(unit):
    try:
        return _ALIASES[unit.strip().lower()]
    except (KeyError, AttributeError):
        raise UnitError(f"unsupported unit {unit!r}") from None


def ghz_to_rad_ps(f_ghz):
    """Ordinary frequency in GHz to angular frequency in rad/ps."""
    return 2.0 * math.pi * f_ghz * 1e-3


def rad_ps_to_ghz(w):
    return w / (2.0 * math.pi * 1e-3)


def uev_to_rad_ps(e_uev):
    return e_uev / HBAR_UEV_PS


def rad_ps_to_uev(w):
    return w * HBAR_UEV_PS


def carrier_frequency(wavelength_nm=DEFAULT_WAVELENGTH_NM):
    """Optical angular frequency (rad/ps) at the given vacuum wavelength."""
    return 2.0 * math.pi * C_NM_PER_PS / wavelength_nm


def nm_to_rad_ps(dlambda_nm, wavelength_nm=DEFAULT_WAVELENGTH_NM):
    """Angular-frequency shift produced by a small wavelength shift.

    Linearised about ``wavelength_nm``: d(omega) = -2 pi c d(lambda) / lambda^2,
    so a positive wavelength offset is a negative frequency offset.
    """
    return -2.0 * math.pi * C_NM_PER_PS * dlambda_nm / wavelength_nm**2


def rad_ps_to_nm(dw, wavelength_nm=DEFAULT_WAVELENGTH_NM):
    return -dw * wavelength_nm**2 / (2.0 * math.pi * C_NM_PER_PS)


def detuning_from_nm(dot_minus_cavity_nm, wavelength_nm=DEFAULT_WAVELENGTH_NM):
    """Cavity-dot detuning omega_c - omega_qd from a wavelength difference.

    The wavelength difference is quoted as lambda_dot - lambda_cavity, so a
    blue-detuned dot (negative value) gives a negative omega_c - omega_qd.
    """
    return -nm_to_rad_ps(dot_minus_cavity_nm, wavelength_nm)


def detuning_to_nm(delta, wavelength_nm=DEFAULT_WAVELENGTH_NM):
    return -rad_ps_to_nm(delta, wavelength_nm)


def q_to_rad_ps(q, wavelength_nm=DEFAULT_WAVELENGTH_NM):
    """Photon-number (energy) decay rate omega/Q of a cavity with quality factor Q."""
    if q <= 0:
        raise UnitError("quality factor must be positive")
    return carrier_frequency(wavelength_nm) / q


def rad_ps_to_q(kappa, wavelength_nm=DEFAULT_WAVELENGTH_NM):
    if kappa <= 0:
        raise UnitError("decay rate must be positive to express it as a Q factor")
    return carrier_frequency(wavelength_nm) / kappa


def from_field_decay_rate(x):
    """Energy decay rate from a field (amplitude) decay rate."""
    return 2.0 * x


_TO_RAD = {
    "GHz": lambda v, lam: ghz_to_rad_ps(v),
    "ueV": lambda v, lam: uev_to_rad_ps(v),
    "nm": nm_to_rad_ps,
    "Q": q_to_rad_ps,
    RAD_PS: lambda v, lam: v,
}
_FROM_RAD = {
    "GHz": lambda v, lam: rad_ps_to_ghz(v),
    "ueV": lambda v, lam: rad_ps_to_uev(v),
    "nm": rad_ps_to_nm,
    "Q": rad_ps_to_q,
    RAD_PS: lambda v, lam: v,
}


def convert_units(value, from_unit, to_unit, wavelength_nm=DEFAULT_WAVELENGTH_NM):
    """Convert ``value`` between any two supported units via rad/ps.

    Supported units: ``GHz`` (ordinary frequency), ``ueV`` (photon energy),
    ``nm`` (wavelength offset at ``wavelength_nm``), ``Q`` (quality factor at
    ``wavelength_nm``, mapped to omega/Q) and ``rad/ps``.

    >>> round(convert_units(25, "GHz", "rad/ps"), 6)
    0.15708
    """
    src = canonical_unit(from_unit)
    dst = canonical_unit(to_unit)
    value = float(value)
    if not math.isfinite(value):
        raise UnitError("value must be finite")
    if src == dst:
        return value
    return _FROM_RAD[dst](_TO_RAD[src](value, wavelength_nm), wavelength_nm)
