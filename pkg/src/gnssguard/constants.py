"""Physical constants and GPS signal parameters used throughout the package."""

C = 299792458.0                  # speed of light [m/s]
MU = 3.986004418e14              # Earth gravitational parameter [m^3/s^2]
OMEGA_E = 7.2921151467e-5        # Earth rotation rate [rad/s]
F_L1 = 1.57542e9                 # GPS L1 carrier [Hz]

# WGS-84 ellipsoid
WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

SECONDS_PER_WEEK = 604800.0
HALF_WEEK = 302400.0

EPHEMERIS_VALIDITY = 7200.0      # max |t - toe| [s]
NAV_FRAME = 30.0                 # NAV message length, receiver re-sync cadence [s]
T_MIN_REPLAY = 0.020             # first NAV bit at 50 bit/s [s]
DEFAULT_MASK_DEG = 10.0
MIN_SATS = 4
