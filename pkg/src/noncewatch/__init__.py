"""noncewatch: embed single-use encrypted nonces in IPv6 source addresses,
probe the network with them, and detect who acts on them afterwards."""

__version__ = "0.1.0"
