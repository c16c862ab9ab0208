# qmsep/services/analyzer.py - One object that runs every check on a prepared model
import logging
from typing import Any, Dict, List, Optional, Sequence

from qmsep.config import rel_tol_or_default, subspace_tol_or_default, verdict_tol_or_default
from qmsep.services.balance import BalanceReport, balance_report
from qmsep.services.entropy import EpReport, LimitSample, entropy_production, ep_limit_estimate
from qmsep.services.gksl import GkslGenerator
from qmsep.services.support import fbs_check, hs_span_condition, phi_support_diagnosis

logger = logging.getLogger(__name__)


class SemigroupAnalyzer:
    """
    Entropy production, detailed balance and support analysis of a GKSL
    generator in a faithful invariant state, with the three tolerances fixed
    once at construction (None falls back to settings).
    """

    def __init__(self, rel_tol: Optional[float] = None, tol: Optional[float] = None,
                 subspace_tol: Optional[float] = None):
        self.rel_tol = rel_tol_or_default(rel_tol)
        self.tol = verdict_tol_or_default(tol)
        self.subspace_tol = subspace_tol_or_default(subspace_tol)
        logger.debug(f"Analyzer tolerances: {self.tolerances()}")

    def tolerances(self) -> Dict[str, float]:
        return {"rel_tol": self.rel_tol, "verdict_tol": self.tol, "subspace_tol": self.subspace_tol}

    def entropy_production(self, gen: GkslGenerator, rho, check_fbs: bool = True) -> EpReport:
        return entropy_production(gen, rho, rel_tol=self.rel_tol, tol=self.tol, check_fbs=check_fbs,
                                  subspace_tol=self.subspace_tol)

    def limit_trace(self, gen: GkslGenerator, rho, t_grid: Sequence[float]) -> List[LimitSample]:
        return ep_limit_estimate(gen, rho, t_grid, rel_tol=self.rel_tol, subspace_tol=self.subspace_tol)

    def balance(self, gen: GkslGenerator, rho) -> BalanceReport:
        return balance_report(gen, rho, self.tol)

    def support(self, gen: GkslGenerator, rho) -> Dict[str, Any]:
        span_holds, span_dims = hs_span_condition(gen, rho, self.tol, self.rel_tol, self.subspace_tol)
        return {
            "hs_span_condition": span_holds,
            "span_dims": span_dims,
            "phi_support": phi_support_diagnosis(gen, rho, self.rel_tol, self.subspace_tol),
            "fbs": fbs_check(gen, rho, self.tol, self.rel_tol, self.subspace_tol),
        }
