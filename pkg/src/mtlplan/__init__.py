"""MTL mission planning by mixed-integer linear programming."""

__version__ = "0.1.0"
