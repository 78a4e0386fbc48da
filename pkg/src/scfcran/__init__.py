"""Max-min SINR resource allocation for multi-antenna C-RAN uplinks.

Radio heads apply local spatial filters and scalar quantizers
(spatial compression and forwarding); the central unit jointly picks user
powers, receive beamformers and fronthaul bit allocations.
"""

__version__ = "0.1.0"
