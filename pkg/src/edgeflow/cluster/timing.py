from dataclasses import dataclass


@dataclass(frozen=True)
class Timing:
    heartbeat_interval: int = 100
    suspect_timeout: int = 500
    fail_timeout: int = 1000
    election_min: int = 150
    election_max: int = 300
    request_timeout: int = 250
    poll_interval: int = 50
