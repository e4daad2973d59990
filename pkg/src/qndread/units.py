"""Unit helpers.

Internal convention: time in ns, angular frequencies and rates in rad/ns.
Config files and constructors talk plain-cycle frequencies (GHz, MHz, kHz),
matching the usual f = omega/2pi notation; these helpers do the conversion
in one place so no 2*pi factor ever appears ad hoc elsewhere.
"""

import math

TWO_PI = 2.0 * math.pi


def ghz(f):
    """Cycle frequency in GHz -> angular frequency in rad/ns."""
    return TWO_PI * f


def mhz(f):
    """Cycle frequency in MHz -> angular frequency in rad/ns."""
    return TWO_PI * f * 1e-3


def khz(f):
    """Cycle frequency in kHz -> angular frequency in rad/ns."""
    return TWO_PI * f * 1e-6


def to_ghz(omega):
    """Angular frequency in rad/ns -> cycle frequency in GHz."""
    return omega / TWO_PI
