"""Config-driven experiment runner: solved families per mesh level and the check registry."""

from __future__ import annotations

import math
from functools import cached_property

from . import verification as V
from .config import ExperimentConfig
from .errors import ConfigError, PEllipticError
from .solver import SolutionField, solve_field

#: ids run by ``all``
MAIN_CHECKS = ("reverse_holder", "caccioppoli", "dissipativity", "square_ntm", "dirichlet", "trace", "good_lambda")
#: further ids: an expected-fail control and diagnostics
EXTRA_CHECKS = ("dissipativity_control", "power_identity", "scale_invariance", "carleson_duality")
ALL_CHECKS = MAIN_CHECKS + EXTRA_CHECKS


def resolve_ids(ids) -> list[str]:
    out = []
    for i in ids or ["all"]:
        if i == "all":
            out.extend(MAIN_CHECKS)
        elif i in ALL_CHECKS:
            out.append(i)
        else:
            raise ConfigError(f"unknown check id {i!r}; known: all, {', '.join(ALL_CHECKS)}")
    return list(dict.fromkeys(out))


def combine(cid: str, reports: list[V.VerificationReport]) -> V.VerificationReport:
    """One report from several parameter cases: worst verdict, largest constant."""
    if len(reports) == 1:
        return reports[0]
    verdicts = [r.verdict for r in reports]
    verdict = "fail" if "fail" in verdicts else ("indeterminate" if "indeterminate" in verdicts else "pass")
    top = max(reports, key=lambda r: r.fitted if math.isfinite(r.fitted) else math.inf)
    k = max(len(r.trend) for r in reports)
    trend = [max(r.trend[i] for r in reports if i < len(r.trend)) for i in range(k)]
    return V.VerificationReport(cid, {"cases": [r.params for r in reports]}, top.lhs, top.rhs, top.fitted, trend,
                                verdict, expected=reports[0].expected,
                                details={"cases": [r.to_dict() for r in reports]})


class Experiment:
    def __init__(self, config: ExperimentConfig):
        self.config = config

    def solve_level(self, mesh, data=None, h=None) -> list[SolutionField]:
        fld = self.config.field(mesh, h)
        return [solve_field(fld, d) for d in (data or self.config.data())]

    @cached_property
    def levels(self) -> list[list[SolutionField]]:
        return [self.solve_level(m) for m in self.config.meshes]

    def _p_list(self, opts, key="p"):
        v = opts.get(key, self.config.exponents.get(key, [2.0]))
        return [float(x) for x in (v if isinstance(v, (list, tuple)) else [v])]

    def run(self, cid: str) -> V.VerificationReport:
        opts = self.config.check_options(cid)
        runner = getattr(self, f"_run_{cid}", None)
        if runner is None:
            raise ConfigError(f"unknown check id {cid!r}")
        try:
            report = runner(opts)
        except PEllipticError as exc:
            report = V.VerificationReport(cid, {"options": opts}, math.nan, math.nan, math.nan, [], "fail",
                                          details={"error": f"{type(exc).__name__}: {exc}"})
        report.params.setdefault("preset", self.config.raw.get("name", ""))
        return report

    # individual checks

    def _balls(self, opts):
        b = opts.get("balls")
        return [tuple(x) for x in b] if b else None

    def _run_reverse_holder(self, opts):
        ps, qs = self._p_list(opts, "p"), self._p_list(opts, "q")
        eps = float(opts.get("epsilon", 0.0))
        return combine("reverse_holder", [V.check_reverse_holder(self.levels, p, q, self._balls(opts), eps)
                                          for p in ps for q in qs])

    def _run_caccioppoli(self, opts):
        eps = opts.get("epsilon")
        reps = []
        for p in self._p_list(opts):
            e = float(eps) if eps is not None else (0.01 if p < 2 else 0.0)
            reps.append(V.check_caccioppoli_p(self.levels, p, self._balls(opts), e))
        return combine("caccioppoli", reps)

    def _run_dissipativity(self, opts):
        chi = opts.get("chi", "one")
        return combine("dissipativity", [V.check_dissipativity_integral(self.levels, p, chi)
                                         for p in self._p_list(opts)])

    def _run_dissipativity_control(self, opts):
        A = opts.get("A")
        if A is None:
            fld = self.config.field(self.config.meshes[0])
            A = fld.all_matrices()[0]
        else:
            from .io import parse_matrix
            A = parse_matrix(A)
        return V.dissipativity_control(A, float(opts.get("p", 8.0)), mesh=float(opts.get("mesh", 1 / 32)))

    def _run_square_ntm(self, opts):
        a = float(opts.get("a", self.config.apertures["a"]))
        return combine("square_ntm", [V.check_square_ntm_bounds(self.levels, p, q, a)
                                      for p in self._p_list(opts) for q in self._p_list(opts, "q")])

    def _run_dirichlet(self, opts):
        a = float(opts.get("a", self.config.apertures["a"]))
        meshes = opts.get("meshes", self.config.meshes)
        heights = opts.get("heights", [1.0, 2.0, 4.0])
        data = self.config.data(opts.get("data"))
        sweep = opts.get("sweep")
        return combine("dirichlet", [
            V.check_dirichlet_solvability(self.config.field_spec, data, p, a, heights, meshes, self.config.n,
                                          self.config.period, sweep)
            for p in self._p_list(opts)])

    def _run_trace(self, opts):
        meshes = opts.get("meshes", self.config.meshes)
        data = self.config.data(opts.get("data"))
        levels = [self.solve_level(tuple(m) if isinstance(m, list) else m, data) for m in meshes]
        jumps = sorted({j for d in data for j in d.jumps}) or None
        return V.check_trace_convergence(levels, float(opts.get("tol", 1e-3)), int(opts.get("kmin", 2)),
                                         opts.get("kmax"), jumps, opts.get("exclude_radius"),
                                         float(opts.get("required", 0.99)), bool(opts.get("relative", True)))

    def _run_good_lambda(self, opts):
        a = float(opts.get("a", self.config.apertures["a"]))
        b = float(opts.get("b", self.config.apertures["b"]))
        gammas = opts.get("gammas", [0.5, 0.25, 0.125])
        return combine("good_lambda", [V.check_good_lambda(self.levels, p, a, b, gammas,
                                                           float(opts.get("nu0_constant", 4.0)))
                                       for p in self._p_list(opts)])

    def _run_power_identity(self, opts):
        return V.check_power_identity(opts.get("p", [1.5, 2.0, 3.0, 4.0]), int(opts.get("samples", 10_000)),
                                      int(opts.get("n", 3)), int(opts.get("seed", self.config.seed)))

    def _run_scale_invariance(self, opts):
        target = opts.get("check", "reverse_holder")
        c = opts.get("c", [3.0, 4.0])
        c = complex(c[0], c[1])
        kw = {k: v for k, v in opts.items() if k not in ("check", "c")}
        funcs = {"reverse_holder": (V.check_reverse_holder, {"p": 4.0, "q": 2.0}),
                 "caccioppoli": (V.check_caccioppoli_p, {"p": 2.0}),
                 "dissipativity": (V.check_dissipativity_integral, {"p": 2.0}),
                 "square_ntm": (V.check_square_ntm_bounds, {"p": 2.0}),
                 "trace": (V.check_trace_convergence, {}),
                 "good_lambda": (V.check_good_lambda, {}),
                 "carleson_duality": (V.check_carleson_duality, {})}
        if target not in funcs:
            raise ConfigError(f"scale invariance is not defined for {target!r}")
        fn, defaults = funcs[target]
        return V.check_scale_invariance(fn, self.levels, c, **dict(defaults, **kw))

    def _run_carleson_duality(self, opts):
        a = float(opts.get("a", self.config.apertures["a"]))
        return combine("carleson_duality", [V.check_carleson_duality(self.levels, p, a)
                                            for p in self._p_list(opts)])


def run_check(config_raw: dict, cid: str) -> dict:
    """Worker entry point (picklable): run one check from a raw config."""
    exp = Experiment(ExperimentConfig(config_raw))
    return exp.run(cid).to_dict()


def report_rows(report: dict) -> list[dict]:
    """CSV rows for one report: one per parameter case."""
    cases = report.get("details", {}).get("cases") if "cases" in report.get("params", {}) else None
    items = cases or [report]
    rows = []
    for r in items:
        params = {k: v for k, v in r["params"].items() if k != "cases"}
        rows.append({"id": report["id"], "params": params, "lhs": r["lhs"], "rhs": r["rhs"],
                     "fitted": r["fitted"], "trend": r["trend"], "verdict": r["verdict"],
                     "expected": report.get("expected", "pass")})
    return rows

