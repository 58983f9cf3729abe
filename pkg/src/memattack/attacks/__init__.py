from ..abortcode import abort_decode, abort_encode, capacity
from ..ledger import Adversary, EveLedger
from .memory import (AbortAdversary, AttackRun, PEAdversary, eve_reconstruct, plan_pe_attack, run_abort_attack,
                     run_impostor, run_pe_attack)
from .plans import (BHK, AbortAttack, AttackPlan, HRDepletion, ImpostorAttack, NoAttack, PEAttack, QREAbort,
                    QRELengthLeak, QREProcrustean)
from .bhk import BHKResult, run_bhk
from .hr import depletion_curve, run_hr_depletion
from .qre import QREResult, run_qre
