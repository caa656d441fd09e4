"""Exception hierarchy. Everything raised on purpose derives from GnssError."""


class GnssError(Exception):
    pass


class RinexError(GnssError):
    pass


class RinexParseError(RinexError):
    def __init__(self, message, line=None, sat_id=None):
        self.line = line
        self.sat_id = sat_id
        where = []
        if line is not None:
            where.append(f"line {line}")
        if sat_id is not None:
            where.append(f"satellite {sat_id}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class UnsupportedVersionError(RinexError):
    pass


class RinexStructureError(RinexError):
    pass


class SeriesError(GnssError):
    pass


class EphemerisError(GnssError):
    pass


class StaleEphemerisError(EphemerisError):
    pass


class KeplerConvergenceError(EphemerisError):
    pass


class ConstellationError(GnssError):
    pass


class GeometryError(GnssError):
    pass


class UnderdeterminedError(GnssError):
    """Fewer than four usable satellites."""


class KalmanError(GnssError):
    pass


class InsufficientDataError(GnssError):
    pass


class StalePredictionError(GnssError):
    pass


class AttackConfigError(GnssError):
    pass


class ConfigError(GnssError):
    pass
