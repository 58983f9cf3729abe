"""Simulator and attack laboratory for device-independent QKD with memory-equipped devices."""

from . import attacks, devices, errors, pamp, protocol, qsim, reconcile
from .ledger import Adversary, EveLedger
from .protocol import (Countermeasures, KeyPool, ProtocolConfig, SessionOutcome, SessionTranscript, run_campaign,
                       run_day, run_day_cm3)

__version__ = "0.1.0"
