"""Distributed MIMO downlink with over-the-air phase synchronization.

Independent single-antenna access points behave as one multi-antenna
transmitter: a master AP sends a header and pilots, secondary APs track
the master's phase and pre-correct their transmissions, and a central
precoder (ZFBF or THP) serves several clients at once.
"""

__version__ = "0.1.0"
