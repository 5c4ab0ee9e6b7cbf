"""Single source of the library version string."""

VERSION = "0.1.0"
