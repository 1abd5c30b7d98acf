"""Unit conversions at the I/O boundary. Everything internal is SI."""

LPM_PER_M3S = 60000.0
MM_PER_M = 1000.0
MM3_PER_M3 = 1e9


def lpm_to_m3s(lpm):
    return lpm / LPM_PER_M3S


def m3s_to_lpm(m3s):
    return m3s * LPM_PER_M3S


def mm_to_m(mm):
    return mm / MM_PER_M


def m_to_mm(m):
    return m * MM_PER_M


def mm3_to_m3(mm3):
    return mm3 / MM3_PER_M3


def m3_to_mm3(m3):
    return m3 * MM3_PER_M3
