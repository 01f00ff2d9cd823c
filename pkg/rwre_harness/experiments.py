# ABOUTME: One Experiment subclass per experiment kind, composing the library's estimators.
# ABOUTME: Each records its estimates, pass/fail criteria and plot series for the runner's report.

import logging
import math
from typing import Any, Dict, List, Sequence, Tuple, Type

import numpy as np

from rwre_harness.base import Experiment
from rwre_harness.model import REQUIRED_PARAMS
from rwre_lab.coupling import couple_initial, coupled_step, discrepancy_decay, meeting_experiment
from rwre_lab.environment import Environment, EnvironmentSpec, compute_f, compute_invariants
from rwre_lab.estimators import (
    convergence_tv,
    hitting_tail,
    hydro_transport_error,
    mean_preservation,
    slowdown_scaling,
    speed_estimate,
    stationarity_check,
    uniform_lln_deviation,
)
from rwre_lab.particles import DeterministicConstant, pairing_sites, sample_initial
from rwre_lab.rng import SeedMode, SeedPolicy, derive_seed
from rwre_lab.walker import backtrack_tail
from rwre_lab.window import Window

logger = logging.getLogger(__name__)

EXPERIMENTS: Dict[str, Type[Experiment]] = {}

Z_95 = 1.959963984540054


def register(kind: str):
    """Class decorator adding an Experiment subclass to the registry"""
    def wrap(cls: Type[Experiment]) -> Type[Experiment]:
        cls.kind = kind
        cls.required_params = REQUIRED_PARAMS[kind]
        EXPERIMENTS[kind] = cls
        return cls
    return wrap


def create_experiment(config, **kwargs) -> Experiment:
    """Instantiate the registered experiment for config.kind"""
    try:
        cls = EXPERIMENTS[config.kind]
    except KeyError:
        raise ValueError(f"no experiment registered for kind '{config.kind}'") from None
    return cls(config, **kwargs)


def _master_seeds(master: int, count: int) -> List[int]:
    """Independent master seeds for repeated runs (index 0 is master itself)"""
    return [master] + [derive_seed(master, i) for i in range(1, count)]


def _environment(spec: EnvironmentSpec, policy: SeedPolicy) -> Environment:
    return Environment(spec, policy.fixed_env_seed())


# Worker functions for Experiment.map must be top-level to pickle


def _lln_worker(args: Tuple) -> float:
    spec, env_seed, A, B, n, particles_per_site, seed = args
    env = Environment(spec, env_seed)
    return uniform_lln_deviation(env, A, B, n, particles_per_site, seed).max_deviation


def _hydro_worker(args: Tuple) -> List[float]:
    spec, profile, N, t, test_functions, policy, rounding = args
    report = hydro_transport_error(spec, profile, N, t, test_functions, policy, rounding)
    return [r.mean_error for r in report.results]


@register("invariants")
class InvariantsExperiment(Experiment):
    """Analytic invariants of the environment law"""

    def compute(self, **params) -> Dict[str, Any]:
        inv = compute_invariants(self.spec)
        tol = float(params.get("s_tol", 1e-10))
        if inv.s_exponent is not None:
            self.check("s_residual", inv.s_residual <= tol, f"|E rho^s - 1| = {inv.s_residual:.3g}")
            top = 1.5 * inv.s_exponent
        else:
            top = 4.0
        grid = np.linspace(0.0, top, 41)
        self.add_series("rho_moment", grid, [math.exp(self.spec.log_rho_moment(s)) for s in grid])
        return {"invariants": inv}


@register("f-check")
class FCheckExperiment(Experiment):
    """Three-term identity and mean of f over a window of one environment"""

    def estimate_cost(self, **params) -> float:
        window = params.get("window", Window(0, 999))
        return float(window.size * 64)

    def compute(self, **params) -> Dict[str, Any]:
        window = params.get("window", Window(0, 999))
        tol = float(params.get("tol", 1e-8))
        env = _environment(self.spec, self.policy)
        inv = compute_invariants(self.spec)
        pw = compute_f(env, window, tol)
        residual = float(np.abs(pw.identity_residuals()).max()) if window.size > 2 else 0.0
        mean_f = pw.mean()
        relative_gap = abs(mean_f * inv.speed - 1.0)
        self.check("identity_residual", residual <= 3.0 * tol, f"max residual {residual:.3g}, tol {tol:g}")
        if "mean_rel_tol" in params:
            self.check(
                "mean_f",
                relative_gap <= float(params["mean_rel_tol"]),
                f"mean f = {mean_f:.6g} vs 1/v_P = {1.0 / inv.speed:.6g}",
            )
        stride = max(1, window.size // 500)
        self.add_series("f", pw.window.sites()[::stride], pw.values[::stride])
        return {
            "window": window,
            "tol": tol,
            "depth": pw.depth,
            "max_residual": residual,
            "mean_f": mean_f,
            "inverse_speed": 1.0 / inv.speed,
            "relative_gap": relative_gap,
            "f_min": float(pw.values.min()),
            "f_max": float(pw.values.max()),
        }


@register("speed")
class SpeedExperiment(Experiment):
    """Empirical X_n / n against v_P"""

    def estimate_cost(self, **params) -> float:
        return float(self.policy.replicas) * int(params["n"])

    def compute(self, **params) -> Dict[str, Any]:
        est = speed_estimate(self.spec, int(params["n"]), self.policy, int(params.get("start", 0)))
        z_max = float(params.get("z_max", 4.0))
        self.check("speed", est.z_score <= z_max, f"z = {est.z_score:.3g} (limit {z_max:g})")
        self.add_series(
            "speed", [est.n], [est.mean],
            [est.mean - Z_95 * est.stderr], [est.mean + Z_95 * est.stderr],
        )
        return {"speed": est}


@register("lln")
class LLNExperiment(Experiment):
    """Uniform LLN deviation over many master seeds"""

    def _walks(self, params) -> int:
        n = int(params["n"])
        return pairing_sites(n, float(params["A"]), float(params["B"])).size * int(
            params.get("particles_per_site", 1)
        )

    def estimate_cost(self, **params) -> float:
        return float(params.get("master_seeds", 1)) * self._walks(params) * int(params["n"])

    def compute(self, **params) -> Dict[str, Any]:
        A, B, n = float(params["A"]), float(params["B"]), int(params["n"])
        m = int(params.get("particles_per_site", 1))
        threshold = float(params.get("threshold", 0.05))
        required = float(params.get("required_fraction", 0.95))
        masters = _master_seeds(self.policy.master_seed, int(params.get("master_seeds", 1)))
        jobs = [
            (self.spec, self.policy.with_master(s).fixed_env_seed(), A, B, n, m, s)
            for s in masters
        ]
        deviations = self.map(_lln_worker, jobs)
        below = float(np.mean([d < threshold for d in deviations]))
        self.check(
            "uniform_lln", below >= required,
            f"{below:.3f} of {len(masters)} seeds below {threshold:g} (need {required:g})",
        )
        self.add_series("max_deviation", range(len(deviations)), deviations)
        return {
            "n": n,
            "A": A,
            "B": B,
            "particles_per_site": m,
            "implied_gamma": math.log(m) / math.log(n) if n > 1 else None,
            "walks": self._walks(params),
            "speed": compute_invariants(self.spec).speed,
            "max_deviations": deviations,
            "fraction_below": below,
        }


@register("slowdown")
class SlowdownExperiment(Experiment):
    """Slowdown probabilities over several n and their decay fit"""

    def estimate_cost(self, **params) -> float:
        return float(self.policy.replicas) * sum(int(n) for n in params["ns"])

    def compute(self, **params) -> Dict[str, Any]:
        speed = compute_invariants(self.spec).speed
        v = float(params["v"]) if "v" in params else speed * float(params.get("v_fraction", 0.5))
        diag = slowdown_scaling(
            self.spec, v, params["ns"], self.policy, bool(params.get("free_fit", False))
        )
        if self.policy.quenched:
            self.check("strictly_decreasing", diag.strictly_decreasing(), "disjoint 95% intervals")
        elif diag.fitted_exponent is not None and diag.reference_exponent is not None:
            band = float(params.get("exponent_band", 1.0))
            gap = abs(diag.fitted_exponent - diag.reference_exponent)
            self.check(
                "averaged_exponent", gap <= band,
                f"fitted {diag.fitted_exponent:.3g} vs 1 - s = {diag.reference_exponent:.3g}",
            )
        est = [e.estimate for e in diag.estimates]
        self.add_series(
            "slowdown", diag.ns, [e.p_hat for e in est],
            [e.ci_low for e in est], [e.ci_high for e in est],
        )
        return {"v": v, "scaling": diag}


@register("hitting")
class HittingExperiment(Experiment):
    """Hitting-time delay tail plus the backtrack tail of the same family"""

    def estimate_cost(self, **params) -> float:
        starts = params.get("starts", [0])
        n, mu = int(params["n"]), float(params["mu"])
        return float(self.policy.replicas) * len(starts) * n * (mu + 1.0)

    def compute(self, **params) -> Dict[str, Any]:
        n, mu = int(params["n"]), float(params["mu"])
        starts = [int(y) for y in params.get("starts", [0])]
        env = _environment(self.spec, self.policy)
        seed = self.policy.master_seed
        tail = hitting_tail(env, starts, n, mu, self.policy.replicas, seed, params.get("cap"))
        if "max_probability" in params:
            limit = float(params["max_probability"])
            self.check(
                "hitting_tail", tail.estimate.ci_low <= limit,
                f"p = {tail.estimate.p_hat:.4g}, limit {limit:g}",
            )
        back = backtrack_tail(
            env, starts, n, self.policy.replicas, seed, self.policy.mode,
            params.get("backtrack_measure", "below_start"),
        )
        self.add_series(
            "backtrack", back.k, back.tail,
            back.tail - Z_95 * back.stderr, back.tail + Z_95 * back.stderr,
        )
        return {
            "hitting": tail,
            "backtrack": {"measure": back.measure, "samples": back.samples, "tail": back.tail},
        }


@register("stationary")
class StationaryExperiment(Experiment):
    """Poisson(alpha f) start stays Poisson(alpha f) in a fixed environment"""

    def _times(self, params) -> List[int]:
        T = int(params["T"])
        default = [T // 2] if T > 1 else []
        return sorted(set([int(t) for t in params.get("times", default)] + [T]))

    def estimate_cost(self, **params) -> float:
        probes = params["probes"].size
        T = int(params["T"])
        routed = sum(2 * t + probes for t in self._times(params)) * probes
        return float(self.policy.replicas) * routed + probes * (probes + 2 * T) * T

    def compute(self, **params) -> Dict[str, Any]:
        times = self._times(params)
        level = float(params.get("level", 0.05))
        report = stationarity_check(
            self.spec, float(params["alpha"]), params["probes"], times, self.policy,
            int(params.get("batches", 1)), level, mapper=self.map,
        )
        z_max = float(params.get("z_max", 3.0))
        self.check("marginal_means", float(report.z_scores.max()) <= z_max,
                   f"max z = {float(report.z_scores.max()):.3g} (limit {z_max:g})")
        band = max(
            float(params.get("rejection_band", 0.03)),
            4.0 * math.sqrt(level * (1.0 - level) / report.tests),
        )
        self.check(
            "gof_rejection_rate", abs(report.rejection_rate - level) <= band,
            f"{report.rejection_rate:.3f} over {report.tests} tests (band {band:.3f})",
        )
        self.add_series("expected_mean", report.probes, report.expected)
        self.add_series("empirical_mean", report.probes, report.means[-1])
        return {"stationarity": report}


@register("converge")
class ConvergeExperiment(Experiment):
    """Total variation distance of eta_n(site) to its Poisson limit

    The optional mean check is an averaged statement (in a fixed environment
    E eta_n(site) tends to v_P f rather than to E eta_0(site)), so it runs
    under an averaged policy of mean_replicas replicas from the same master seed.
    """

    def _mean_policy(self, params) -> SeedPolicy:
        replicas = int(params.get("mean_replicas", min(self.policy.replicas, 200)))
        return SeedPolicy(SeedMode.AVERAGED, replicas, self.policy.master_seed)

    def estimate_cost(self, **params) -> float:
        ns = [int(n) for n in params["ns"]]
        top = max(ns)
        cost = float(self.policy.replicas) * sum(2 * n + 1 for n in ns) + (2 * top + 1) * top
        if params.get("mean_check", False):
            cost += float(self._mean_policy(params).replicas) * (top + 1) * (top + 1)
        return cost

    def compute(self, **params) -> Dict[str, Any]:
        law = params.get("law", DeterministicConstant(1))
        site = int(params.get("site", 0))
        alpha = params.get("alpha")
        alpha = None if alpha in (None, "auto") else float(alpha)
        report = convergence_tv(self.spec, law, params["ns"], self.policy, site, alpha, mapper=self.map)
        self.check("tv_decreasing", report.decreasing(), f"tv = {[round(v, 4) for v in report.tv]}")
        if "final_tv_max" in params:
            limit = float(params["final_tv_max"])
            self.check("final_tv", report.tv[-1] < limit, f"{report.tv[-1]:.4g} (limit {limit:g})")
        self.add_series("tv", report.ns, report.tv)
        results: Dict[str, Any] = {"convergence": report}
        if params.get("mean_check", False):
            means = mean_preservation(
                self.spec, law, params["ns"], self._mean_policy(params), site, mapper=self.map,
            )
            z = max(means.z_scores())
            self.check("mean_preserved", z <= float(params.get("z_max", 4.0)), f"max z = {z:.3g}")
            results["mean_preservation"] = means
        return results


@register("couple")
class CoupleExperiment(Experiment):
    """Discrepancy decay of two coupled systems, plus exact coupled-step checks"""

    def estimate_cost(self, **params) -> float:
        T = int(params["T"])
        checks = int(params.get("coupled_checks", 0))
        window = params["window"]
        decay = 3.0 * self.policy.replicas * (window.size + 2 * T) * T
        return decay + 3.0 * checks * (window.size + checks)

    def _exact_checks(self, law_eta, law_zeta, window: Window, steps: int) -> Tuple[bool, str]:
        env = _environment(self.spec, self.policy)
        seed = self.policy.master_seed
        eta0 = sample_initial(env, law_eta, window, derive_seed(seed, 0))
        zeta0 = sample_initial(env, law_zeta, window, derive_seed(seed, 1))
        cc = couple_initial(eta0, zeta0)
        dyn_seed = derive_seed(seed, 2)
        for t in range(steps):
            cc = coupled_step(env, cc, dyn_seed)
            ok, errors = cc.validate()
            if not ok:
                return False, f"step {t + 1}: {errors[0]}"
            if cc.eta.total != eta0.total or cc.zeta.total != zeta0.total:
                return False, f"step {t + 1}: marginal particle counts changed"
        return True, f"{steps} coupled steps"

    def compute(self, **params) -> Dict[str, Any]:
        window, T = params["window"], int(params["T"])
        law_eta, law_zeta = params["law_eta"], params["law_zeta"]
        checks = int(params.get("coupled_checks", 0))
        if checks > 0:
            ok, detail = self._exact_checks(law_eta, law_zeta, window, checks)
            self.check("coupled_invariants", ok, detail)
        series = discrepancy_decay(
            self.spec, law_eta, law_zeta, window, T, self.policy,
            bool(params.get("shared_config_seeds", False)),
        )
        k = float(params.get("monotone_k", 2.0))
        violations = series.monotone_violations(k)
        self.check("beta_minus_monotone", not violations, f"{len(violations)} steps rise by > {k:g} SE")
        drift = series.difference_drift()
        drift_max = float(params.get("drift_max", 3.0))
        self.check("difference_constant", drift <= drift_max, f"max drift {drift:.3g} SE")
        start, end = float(series.minus_density[0]), float(series.minus_density[-1])
        if "min_reduction" in params:
            need = float(params["min_reduction"])
            self.check(
                "beta_minus_reduction", end <= (1.0 - need) * start,
                f"{start:.4g} -> {end:.4g} (need {need:.0%} reduction)",
            )
        self.add_series("beta_plus", series.steps, series.plus_density,
                        series.plus_density - Z_95 * series.plus_stderr,
                        series.plus_density + Z_95 * series.plus_stderr)
        self.add_series("beta_minus", series.steps, series.minus_density,
                        series.minus_density - Z_95 * series.minus_stderr,
                        series.minus_density + Z_95 * series.minus_stderr)
        return {
            "window": window,
            "T": T,
            "replicas": series.replicas,
            "beta_plus_start": float(series.plus_density[0]),
            "beta_plus_end": float(series.plus_density[-1]),
            "beta_minus_start": start,
            "beta_minus_end": end,
            "monotone_violations": violations,
            "difference_drift": drift,
        }


@register("hydro")
class HydroExperiment(Experiment):
    """Transport error of the empirical pairing over master seeds and scales"""

    def _scales(self, params) -> List[int]:
        N = params["N"]
        return [int(v) for v in (N if isinstance(N, (list, tuple)) else [N])]

    def estimate_cost(self, **params) -> float:
        t = float(params["t"])
        seeds = int(params.get("master_seeds", 1))
        total = 0.0
        for N in self._scales(params):
            steps = math.floor(N * t)
            width = N * max(g.support[1] - g.support[0] + 1.0 for g in params["test_functions"])
            total += seeds * self.policy.replicas * (width + 2 * steps) * steps
        return total

    def compute(self, **params) -> Dict[str, Any]:
        t = float(params["t"])
        profile, tfs = params["profile"], params["test_functions"]
        rounding = params.get("rounding", "poisson")
        error_max = float(params.get("error_max", 0.05))
        required = float(params.get("required_fraction", 0.95))
        masters = _master_seeds(self.policy.master_seed, int(params.get("master_seeds", 1)))
        scales = self._scales(params)
        per_scale = []
        for N in scales:
            jobs = [
                (self.spec, profile, N, t, tfs, self.policy.with_master(s), rounding)
                for s in masters
            ]
            errors = np.array(self.map(_hydro_worker, jobs))
            worst = errors.max(axis=1)
            per_scale.append({
                "N": N,
                "steps": math.floor(N * t),
                "errors": errors,
                "median_error": float(np.median(worst)),
                "fraction_below": float(np.mean(worst < error_max)),
            })
        final = per_scale[-1]
        self.check(
            "transport_error", final["fraction_below"] >= required,
            f"{final['fraction_below']:.3f} of seeds below {error_max:g} at N = {final['N']}",
        )
        if len(scales) > 1:
            medians = [s["median_error"] for s in per_scale]
            self.check("median_error_decreasing", medians[-1] <= medians[0],
                       f"median error {medians[0]:.4g} -> {medians[-1]:.4g}")
        self.add_series("median_error", scales, [s["median_error"] for s in per_scale])
        return {"t": t, "speed": compute_invariants(self.spec).speed, "scales": per_scale}


@register("meet")
class MeetExperiment(Experiment):
    """Two walks at even separation in one environment eventually meet"""

    def estimate_cost(self, **params) -> float:
        return 2.0 * self.policy.replicas * int(params["horizon"])

    def compute(self, **params) -> Dict[str, Any]:
        y, z, horizon = int(params["y"]), int(params["z"]), int(params["horizon"])
        env = _environment(self.spec, self.policy)
        report = meeting_experiment(
            env, y, z, horizon, self.policy.replicas, self.policy.master_seed,
            bool(params.get("crosscheck", False)),
        )
        hs = sorted({min(2 ** k, horizon) for k in range(int(math.log2(max(horizon, 1))) + 2)})
        fractions = [report.fraction_by(h) for h in hs]
        self.check(
            "fraction_monotone", all(b >= a for a, b in zip(fractions, fractions[1:])),
            "fraction met non-decreasing in horizon",
        )
        if "min_fraction" in params:
            need = float(params["min_fraction"])
            self.check("fraction_met", report.fraction_met >= need,
                       f"{report.fraction_met:.4f} (need {need:g})")
        consistent = report.crosscheck_consistent()
        if consistent is not None:
            self.check("crosscheck", consistent, "every record flip comes no earlier than a meeting")
        self.add_series("fraction_met", hs, fractions)
        edges, counts = report.histogram()
        return {
            "y": y,
            "z": z,
            "horizon": horizon,
            "replicas": report.replicas,
            "fraction_met": report.fraction_met,
            "histogram": {"edges": edges, "counts": counts},
        }


def registered_kinds() -> Sequence[str]:
    return sorted(EXPERIMENTS)
