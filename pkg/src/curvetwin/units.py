"""Unit conversion factors.

Everything inside the simulator is SI (m, kg, s, N, rad). Config files and
reports use US customary units (ft, in, lbs, mph); these exact factors are the
only place the two systems meet.
"""

FT = 0.3048  # m per ft (exact)
INCH = 0.0254  # m per in (exact)
MPH = 0.44704  # m/s per mph (exact)
LB = 0.45359237  # kg per lb (exact)
LBFT = 1.3558179483314004  # N*m per lb-ft

G = 9.80665  # standard gravity, m/s^2


def ft_to_m(x):
    return x * FT


def m_to_ft(x):
    return x / FT


def in_to_m(x):
    return x * INCH


def mph_to_ms(x):
    return x * MPH


def ms_to_mph(x):
    return x / MPH


def lb_to_kg(x):
    return x * LB
