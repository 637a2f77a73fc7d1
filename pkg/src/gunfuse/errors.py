"""Exception types shared across the package."""


class GunfuseError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(GunfuseError):
    """A label, pose, VIA, or config document could not be parsed."""


class ConfigError(GunfuseError):
    """A configuration value or document violates its contract."""


class DegenerateGeometryError(GunfuseError):
    """A geometric primitive is too small or collapsed to operate on."""


class RenderError(GunfuseError):
    """Overlay rendering received inconsistent inputs."""
