import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from analysis import (ContractionConstants, LineFit, RateBound, contraction_constants, coupling_envelope,
                      fit_loglog_slope, lebesgue_pi1_range, rate_bound_distribution, rate_bound_path,
                      rate_bound_weighted, weighted_interaction_admissible)
from charts import emit_svg_loglog
from errors import DomainError, SimulationError
from experiment_config import CouplingDoc, ExperimentConfig, ReferenceSpec, WeightFamilySpec
from integrator import simulate_reflection_coupling, simulate_self_interacting
from measures import WeightFamily, WeightedEmpiricalMeasure, pi1_admissible, pi2_admissible
from metrics import CurvePoint, Density1D, mean_w1_curve, w1_1d
from model import (AuxFunction, DriftModel, aux_for_model, check_dissipativity, check_kappa_profile,
                   check_weak_interaction, weak_interaction_threshold_cw)
from storage import ResultStorage, curve_filename

logger = logging.getLogger(__name__)

RUN_NOTES = {
    "recursion": "Z_(k+1) = Z_k + tame(b_k) dt + xi_k; the previous state is included in the update",
    "occupation_in_drift": "step k uses Z_0..Z_k, Z_j weighted by w([j/(k+1), (j+1)/(k+1)]); "
                           "equal weights 1/(k+1) for lebesgue",
    "occupation_evaluated": "the measure at t_k charges Z_j with w([t_j/t_k, t_(j+1)/t_k]) for j < k",
    "taming": "b / (1 + n0^(-alpha) |b|)",
    "noise": "Philox keyed by (seed, path); counter lane 0 drives the increments, lane 1 the initial draw, "
             "lane 2 the coupling, lane 3 the meeting-rule uniforms",
    "coupling_meeting": "a coupled pair whose gap crosses zero within a step (sign change or Brownian-bridge "
                        "crossing) is merged, Y := X; at zero gap both copies share the noise",
    "stderr": "per-checkpoint standard error over paths; checkpoints of one path are correlated",
    "x_axis": "curves carry step and t = step dt; the figure plots t",
}


@dataclass
class SweepEntry:
    parameter: str
    value: float
    curve: List[CurvePoint]
    fit: Optional[LineFit]
    final_decade_fit: Optional[LineFit]
    rate_bound: RateBound
    distribution_bound: RateBound
    checks: Dict
    curve_file: str

    def to_dict(self) -> Dict:
        return {
            "parameter": self.parameter,
            "value": self.value,
            "curve": [{"step": p.step, "t": p.t, "mean_w1": p.mean_w1, "stderr": p.stderr} for p in self.curve],
            "fit": self.fit._asdict() if self.fit else None,
            "final_decade_fit": self.final_decade_fit._asdict() if self.final_decade_fit else None,
            "rate_bound": self.rate_bound.to_dict(),
            "distribution_bound": self.distribution_bound.to_dict(),
            "checks": self.checks,
            "curve_file": self.curve_file,
        }


@dataclass
class RunReport:
    name: str
    entries: List[SweepEntry]
    meta: Dict = field(default_factory=dict)

    def entry(self, value: float) -> SweepEntry:
        for e in self.entries:
            if math.isclose(e.value, value, rel_tol=0.0, abs_tol=1e-12):
                return e
        raise KeyError(value)

    def to_dict(self) -> Dict:
        return {"name": self.name, "meta": self.meta, "entries": [e.to_dict() for e in self.entries]}


@dataclass
class CouplingReport:
    steps: List[int]
    times: np.ndarray
    mean_gap: np.ndarray
    mean_f_gap: np.ndarray
    envelope: np.ndarray
    constants: ContractionConstants
    w1_initial: float
    curve_file: str


def _final_decade(curve: List[CurvePoint]) -> Optional[LineFit]:
    start = next(i for i, p in enumerate(curve) if p.t >= curve[-1].t / 10.0)
    if len(curve) - start < 3:
        return None
    return fit_loglog_slope(curve, window=(start, len(curve)))


def _safe_fit(fn, *args) -> Optional[LineFit]:
    try:
        return fn(*args)
    except DomainError as e:
        logger.warning(f"Slope fit skipped: {e}")
        return None


class ExperimentPipeline:
    """Runs self-interacting sweeps and coupling diagnostics, writing artifacts to storage"""

    def __init__(self, storage: Optional[ResultStorage] = None, threads: Optional[int] = None):
        self.storage = storage
        self.threads = threads

    def _storage(self, output_dir: Optional[str]) -> ResultStorage:
        if self.storage is None:
            self.storage = ResultStorage(output_dir)
        return self.storage

    def run_experiment(self, cfg: ExperimentConfig) -> RunReport:
        """
        Run every sweep entry of an experiment
        Args:
            cfg: Experiment configuration
        Returns:
            RunReport; curve_<value>.csv per entry, report.json and figure.svg are written
        """
        storage = self._storage(cfg.output_dir)
        threads = self.threads if self.threads is not None else cfg.threads
        seed = cfg.master_seed
        checkpoints = cfg.checkpoint_steps()
        sim_family = cfg.weights.build()
        eval_spec = cfg.evaluation_weights
        eval_family = eval_spec.build()
        reference = cfg.reference.build(cfg.model)
        pi2 = pi2_admissible(eval_family, eval_spec.eps2)
        if not pi2.admissible:
            logger.warning(f"Evaluation weights {eval_family.to_dict()} fail the second admissibility check")

        logger.info(f"Experiment {cfg.name}: {len(cfg.sweep)} sweep entries, "
                    f"{cfg.scheme.n_paths} paths x {cfg.scheme.n_steps} steps, seed {seed}")
        entries = []
        for value in cfg.sweep:
            entries.append(self.run_sweep_entry(cfg, value, reference, sim_family, eval_family,
                                                eval_spec, checkpoints, pi2, seed, threads))

        scheme = cfg.scheme.build(seed)
        meta = {
            "seed": seed,
            "scheme": scheme.to_dict(),
            "model": cfg.model.model_dump(),
            "weights": sim_family.to_dict(),
            "eval_weights": eval_family.to_dict(),
            "reference": {"name": reference.name, "normalization": reference.normalization},
            "checkpoints": checkpoints,
            "notes": RUN_NOTES,
        }
        report = RunReport(cfg.name, entries, meta)
        storage.save_report(report.to_dict())
        curves = [(f"{e.parameter}={e.value:g}", e.curve) for e in entries]
        emit_svg_loglog(curves, storage.path("figure.svg"), title=cfg.name, x_label="t", y_label="mean W1")
        logger.info(f"Experiment {cfg.name} finished")
        return report

    def run_sweep_entry(self, cfg: ExperimentConfig, value: float, reference: Density1D,
                        sim_family: WeightFamily, eval_family: WeightFamily, eval_spec: WeightFamilySpec,
                        checkpoints: List[int], pi2, seed: int, threads: Optional[int]) -> SweepEntry:
        """
        Build, check, simulate and score one sweep entry
        Returns:
            SweepEntry with the W1 curve, fits, rate bounds and admissibility flags
        """
        parameter = cfg.model.sweep_parameter
        label = f"{parameter}={value:g}"
        model = cfg.model.build(value)
        aux = aux_for_model(model)
        checks = self.assess_model(model, aux, cfg, eval_family, eval_spec, value)
        checks["pi2"] = {"admissible": pi2.admissible, "sup_single": pi2.sup_single,
                         "sup_double": pi2.sup_double, "eps": eval_spec.eps2}

        scheme = cfg.scheme.build(seed)
        logger.info(f"Simulating {label}")
        try:
            traj = simulate_self_interacting(model, sim_family, scheme, threads=threads)
        except SimulationError as e:
            raise SimulationError(f"sweep entry {label}: {e}") from e

        curve = mean_w1_curve(traj, eval_family, reference, checkpoints, threads=threads)
        filename = curve_filename(value)
        self._storage(cfg.output_dir).save_curve(curve, filename)

        q = model.q or cfg.model.q
        if eval_family.kind.value == "lebesgue":
            bound = rate_bound_path(1, q, model.eta, aux.fprime0)
        else:
            bound = rate_bound_weighted(1, q, eval_spec.eps1, eval_spec.eps2)
        fit = _safe_fit(fit_loglog_slope, curve)
        final = _safe_fit(_final_decade, curve)
        logger.info(f"{label}: final mean W1 {curve[-1].mean_w1:.4f}, "
                    f"slope {fit.slope if fit else float('nan'):.3f}, eps_max {bound.epsilon_max:.3f}")
        return SweepEntry(parameter, float(value), curve, fit, final, bound,
                          rate_bound_distribution(1, q), checks, filename)

    def assess_model(self, model: DriftModel, aux: AuxFunction, cfg: ExperimentConfig,
                     eval_family: WeightFamily, eval_spec: WeightFamilySpec, value: float) -> Dict:
        """Admissibility flags, each taken from the standalone checker"""
        samples = cfg.assumption_samples
        kappa = check_kappa_profile(model)
        dissipativity = check_dissipativity(model, n_samples=samples)
        weak = check_weak_interaction(model, n_samples=samples)
        constants = contraction_constants(aux, model.eta)
        weighted = weighted_interaction_admissible(model.eta, aux)
        pi1 = pi1_admissible(eval_family, eval_spec.eps1, model.eta, aux.kappa_inf, aux.fprime0)
        checks = {
            "kappa_profile": {"passed": kappa.passed, "small_end_value": kappa.small_end_value},
            "dissipativity": {"passed": dissipativity.passed, "max_violation": dissipativity.max_violation},
            "weak_interaction": {"passed": weak.passed, "eta_hat": weak.eta_hat, "declared_eta": weak.declared_eta},
            "contraction": constants.to_dict(),
            "weighted_interaction": {"admissible": weighted.admissible, "margin": weighted.margin,
                                     "bound": weighted.bound},
            "pi1": {"admissible": pi1.admissible, "margin": pi1.margin, "bound": pi1.bound,
                    "worst_integral": pi1.worst_integral, "eps": eval_spec.eps1},
            "lebesgue_pi1_range": lebesgue_pi1_range(model.eta, aux),
            "aux": {"fprime0": aux.fprime0, "kappa_inf": aux.kappa_inf},
        }
        if cfg.model.type == "curie_weiss":
            threshold = weak_interaction_threshold_cw(cfg.model.beta)
            checks["threshold"] = {"value": threshold, "below": bool(value < threshold)}
            if value >= threshold:
                logger.warning(f"K={value:g} is above the weak-interaction threshold {threshold:.4f}")
        return checks

    def run_coupling_diagnostic(self, doc: CouplingDoc) -> CouplingReport:
        """
        Reflection coupling of two copies of the frozen-measure dynamics
        Args:
            doc: Coupling document
        Returns:
            CouplingReport; coupling.csv holds E|gap|, E f(|gap|) and the envelope per checkpoint
        """
        storage = self._storage(doc.output_dir)
        threads = self.threads if self.threads is not None else doc.threads
        model = doc.model.build()
        aux = aux_for_model(model)
        # The measure argument is frozen, so the interaction does not enter the rate
        constants = contraction_constants(aux, 0.0)
        frozen = self._frozen_measure(doc, model)
        drift = _frozen_drift(model, frozen)
        cc = doc.build()

        result = simulate_reflection_coupling(drift, drift, cc, dimension=model.dimension, aux=aux,
                                              threads=threads)
        if model.dimension == 1:
            w1_initial = w1_1d(result.x.ensemble_measure(0), result.y.ensemble_measure(0))
        else:
            w1_initial = float(result.mean_gap[0])

        steps = [0] + doc.checkpoints.steps(cc.scheme.n_steps)
        times = result.times[steps]
        envelope = np.asarray(coupling_envelope(constants, w1_initial, times))
        filename = "coupling.csv"
        storage.save_table({"step": steps, "t": times, "mean_gap": result.mean_gap[steps],
                            "mean_f_gap": result.mean_f_gap[steps], "envelope": envelope}, filename)
        storage.save_report({"name": doc.name, "delta": doc.delta, "coalesce": cc.coalesce, "w1_initial": w1_initial,
                             "constants": constants.to_dict(), "scheme": cc.scheme.to_dict(),
                             "model": model.describe(), "notes": RUN_NOTES}, "coupling_report.json")
        return CouplingReport(steps, times, result.mean_gap[steps], result.mean_f_gap[steps], envelope,
                              constants, w1_initial, filename)

    @staticmethod
    def _frozen_measure(doc: CouplingDoc, model: DriftModel) -> WeightedEmpiricalMeasure:
        if doc.frozen == "dirac":
            return WeightedEmpiricalMeasure.dirac(doc.frozen_point)
        kind = "curie_weiss" if doc.model.type == "curie_weiss" else "gibbs_polynomial"
        return ReferenceSpec(type=kind).build(doc.model).quantile_measure(1000)


def _frozen_drift(model: DriftModel, measure: WeightedEmpiricalMeasure):
    if model.uses_mean_only:
        mean = measure.mean()
        return lambda x, t: model.batch_drift(x, np.tile(mean, (x.shape[0], 1)))
    return lambda x, t: np.stack([model(row, measure) for row in x])
