"""Power and level conversions.

Single place for the power convention used everywhere in this package:
complex baseband samples are in volts across a 1 ohm reference, so
``|sample|**2`` is instantaneous power in watts, and 0 dBm = 1 mW under
that unit impedance.
"""

import numpy as np

DBM_REF_WATTS = 1e-3


def db_to_linear(db: float) -> float:
    """Power ratio for a dB value."""
    return 10.0 ** (db / 10.0)


def linear_to_db(ratio: float) -> float:
    """dB value for a power ratio."""
    return 10.0 * np.log10(ratio)


def db_to_amplitude(db: float) -> float:
    """Amplitude (voltage) ratio for a dB value."""
    return 10.0 ** (db / 20.0)


def dbm_to_watts(dbm: float) -> float:
    return DBM_REF_WATTS * 10.0 ** (dbm / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * np.log10(watts / DBM_REF_WATTS)


def mean_power_watts(samples: np.ndarray) -> float:
    """Average of |x|^2, i.e. mean power in watts."""
    return float(np.mean(np.abs(samples) ** 2))


def mean_power_dbm(samples: np.ndarray) -> float:
    return watts_to_dbm(mean_power_watts(samples))
