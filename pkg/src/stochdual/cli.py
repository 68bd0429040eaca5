"""Command-line entry point.

Precedence for every option: command-line flag, then the config file, then
the built-in default.  Exit codes: 0 success, 1 verification failure,
2 usage or config error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io as sio
from .models import Family, ModelError, make_spec, spec_from_dict

log = logging.getLogger("stochdual")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

MODEL_FLAGS = ("family", "L", "shape", "alpha", "gamma", "delta", "beta", "T_a", "T_b")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing


def _count(text: str) -> int:
    """Accept '100000' and '1e5'."""
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if v != int(v) or v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(v)


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common() -> argparse.ArgumentParser:
    # SUPPRESS keeps a subcommand from overwriting a value given before it
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="TOML config file")
    p.add_argument("--seed", type=int, default=S, help="base seed (default 0)")
    p.add_argument("--threads", type=int, default=S, help="worker threads (default 1)")
    p.add_argument("--out-dir", default=S, help="output directory (default ./out)")
    p.add_argument("--format", choices=("csv", "json"), default=S, help="table format (default csv)")
    return p


def _model_flags(p):
    g = p.add_argument_group("model (overrides the [model] table)")
    g.add_argument("--family")
    g.add_argument("--L", type=int)
    g.add_argument("--shape", type=float)
    for k in ("alpha", "gamma", "delta", "beta"):
        g.add_argument(f"--{k}", type=float)
    g.add_argument("--T-a", dest="T_a", type=float)
    g.add_argument("--T-b", dest="T_b", type=float)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    p = _Parser(prog="stochdual", parents=[common],
                description="Boundary-driven particle and energy models, their duals and checks.")
    p.add_argument("--replay", metavar="MANIFEST", help="rerun the command recorded in a manifest")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo or SDE simulation")
    _model_flags(s)
    s.add_argument("--mode", choices=("stationary", "transport"))
    s.add_argument("--samples", type=_count)
    s.add_argument("--thinning", type=float)
    s.add_argument("--burn-in", type=float)
    s.add_argument("--replicas", type=_count)
    s.add_argument("--trajectory", action="store_true", default=None, help="also write the samples")
    s.add_argument("--rho", type=float, help="transport: density (mean energy for KMP/ThBEP: temperature)")
    s.add_argument("--t", type=float, help="transport: run length")

    v = sub.add_parser("verify", parents=[common], help="run an invariant suite")
    v.add_argument("suite", choices=("duality", "equilibrium", "absorption", "appendix", "thermalized",
                                     "scaling"))

    a = sub.add_parser("absorption", parents=[common], help="dual absorption probabilities")
    _model_flags(a)
    a.add_argument("--xi", help="dual configuration, L+2 comma-separated entries")
    a.add_argument("--method", choices=("exact", "mc"))
    a.add_argument("--runs", type=_count)

    st = sub.add_parser("stationary", parents=[common], help="exact stationary solve")
    _model_flags(st)
    st.add_argument("--cap", type=int, help="per-site cap for unbounded families")
    st.add_argument("--export-generator", action="store_true", default=None)

    r = sub.add_parser("reproduce", parents=[common], help="emit the data behind a table or figure")
    r.add_argument("target", choices=("fig1", "profiles", "covariances", "mft"))
    _model_flags(r)
    r.add_argument("--L-list", type=_int_list, dest="L_list", help="comma-separated sizes")

    m = sub.add_parser("mft", parents=[common], help="macroscopic predictions and the LD functional")
    _model_flags(m)
    m.add_argument("--profile", help="CSV with columns x,rho")
    m.add_argument("--rho-a", type=float)
    m.add_argument("--rho-b", type=float)
    m.add_argument("--perturb", type=float, help="amplitude of a sin(πx) perturbation of the typical profile")
    m.add_argument("--points", type=_float_list, help="x<y<z for the correlations")
    m.add_argument("--grid", type=int, help="grid points (default 401)")
    return p


# ---------------------------------------------------------------------------
# option resolution


DEFAULTS = {"seed": 0, "threads": 1, "out_dir": "out", "format": "csv"}


class Context:
    """Resolved options of one invocation."""

    def __init__(self, args, cfg: dict, has_config: bool = False):
        self.args = args
        self.cfg = cfg
        self.has_config = has_config
        run = cfg.get("run", {})
        if not isinstance(run, dict):
            raise sio.ConfigError("run: expected a table")
        extra = sorted(set(run) - set(DEFAULTS))
        if extra:
            raise sio.ConfigError(f"run.{extra[0]}: unknown field")
        get = lambda k: getattr(args, k, None) if getattr(args, k, None) is not None else run.get(k, DEFAULTS[k])
        self.seed = int(get("seed"))
        self.threads = max(1, int(get("threads")))
        self.out_dir = Path(get("out_dir"))
        self.format = get("format")
        if self.format not in ("csv", "json"):
            raise sio.ConfigError(f"run.format: expected csv or json, got {self.format!r}")
        self.outputs: list[Path] = []
        self.resolved: dict = {"run": {"seed": self.seed, "threads": self.threads, "format": self.format}}

    def opt(self, section: str, key: str, default):
        """Flag, then ``[section] key``, then ``default``."""
        v = getattr(self.args, key, None)
        if v is not None:
            out = v
        else:
            table = self.cfg.get(section, {})
            if not isinstance(table, dict):
                raise sio.ConfigError(f"{section}: expected a table")
            out = table.get(key, default)
        self.resolved.setdefault(section, {})[key] = out
        return out

    def check_section(self, section: str, allowed):
        table = self.cfg.get(section, {})
        extra = sorted(set(table) - set(allowed)) if isinstance(table, dict) else []
        if extra:
            raise sio.ConfigError(f"{section}.{extra[0]}: unknown field")

    def model_table(self, required=True) -> dict:
        table = dict(self.cfg.get("model", {}))
        for k in MODEL_FLAGS:
            v = getattr(self.args, k, None)
            if v is not None:
                table[k] = v
        if required and not table:
            raise sio.ConfigError("model: no model given (use --config or --family/--L/...)")
        self.resolved["model"] = dict(table)
        return table

    def model(self):
        try:
            spec = spec_from_dict(self.model_table())
        except ModelError as exc:
            raise sio.ConfigError(f"model.{exc}") from None
        self.resolved["model"] = spec.as_dict()
        return spec

    def table(self, stem, rows):
        self.outputs.append(sio.write_table(self.out_dir, stem, rows, self.format))

    def json(self, stem, obj):
        self.outputs.append(sio.write_text(self.out_dir / f"{stem}.json", sio.dumps_json(obj)))

    def text(self, name, text):
        self.outputs.append(sio.write_text(self.out_dir / name, text))


# ---------------------------------------------------------------------------
# commands


SIM_FIELDS = ("mode", "samples", "thinning", "burn_in", "replicas", "trajectory", "rho", "t")


def cmd_simulate(ctx: Context) -> int:
    if not ctx.has_config:
        raise sio.ConfigError("config: simulate needs --config")
    ctx.check_section("simulate", SIM_FIELDS)
    mode = ctx.opt("simulate", "mode", "stationary")
    if mode == "transport":
        return _simulate_transport(ctx)
    if mode != "stationary":
        raise sio.ConfigError(f"simulate.mode: expected stationary or transport, got {mode!r}")
    from .analysis import profile_closed_form
    from .kmc import SamplePlan, sample_stationary

    spec = ctx.model()
    plan = SamplePlan(n_samples=int(float(ctx.opt("simulate", "samples", 10_000))),
                      thinning=float(ctx.opt("simulate", "thinning", 1.0)),
                      burn_in=ctx.opt("simulate", "burn_in", None),
                      replicas=int(ctx.opt("simulate", "replicas", 4)), base_seed=ctx.seed)
    if spec.family.is_discrete:
        res = sample_stationary(spec, plan, threads=ctx.threads)
        label = "eta"
    else:
        from .diffusion import sample_stationary_energy

        res = sample_stationary_energy(spec, plan, threads=ctx.threads)
        label = "z"
    try:
        ref = profile_closed_form(spec)
    except ModelError:
        ref = np.full(spec.L, np.nan)
    rows = [{"i": i + 1, "mean": res.mean[i], "mean_se": res.mean_se[i], "closed_form": ref[i]}
            for i in range(spec.L)]
    ctx.table("profile", rows)
    ctx.json("summary", {"spec": spec.as_dict(), "plan": {"n_samples": plan.n_samples,
                                                         "thinning": plan.thinning,
                                                         "burn_in": plan.burn_in,
                                                         "replicas": plan.replicas},
                         "closed_form_profile": ref} | res.as_dict())
    if ctx.opt("simulate", "trajectory", False):
        burn = 10.0 * spec.L ** 2 if plan.burn_in is None else plan.burn_in
        times = burn + plan.thinning * np.arange(plan.n_samples)
        for r in range(plan.replicas):
            rows = [{"t": float(t)} | {f"{label}_{i + 1}": v for i, v in enumerate(row)}
                    for t, row in zip(times, res.samples[r])]
            ctx.table(f"samples_r{r}", rows)
    return EXIT_OK


def _simulate_transport(ctx: Context) -> int:
    table = ctx.model_table()
    try:
        fam = Family(table.get("family"))
    except ValueError:
        raise sio.ConfigError(f"model.family: unknown family {table.get('family')!r}") from None
    L = int(table.get("L", 50))
    shape = table.get("shape")
    rho = float(ctx.opt("simulate", "rho", 1.0))
    t = float(ctx.opt("simulate", "t", 1000.0))
    reps = int(ctx.opt("simulate", "replicas", 16))
    if fam in (Family.SIP, Family.SEP, Family.IRW):
        from .kmc import estimate_transport, expected_transport

        est = estimate_transport(fam, shape, rho, L=L, t=t, replicas=reps, seed=ctx.seed, threads=ctx.threads)
        D_ref, s_ref = expected_transport(fam, shape, rho)
        out = {"D": est.D, "D_se": est.D_se, "sigma": est.sigma, "sigma_se": est.sigma_se,
               "D_expected": D_ref, "sigma_expected": s_ref, "D_jump": est.D_jump,
               "sigma_literal_jump": est.sigma_literal_jump} | est.details
    elif fam in (Family.KMP, Family.ThBEP):
        from .diffusion import estimate_transport_energy

        est = estimate_transport_energy(fam, shape, rho, L=L, t=t, replicas=reps, seed=ctx.seed,
                                        threads=ctx.threads)
        out = {"D": est.D, "D_se": est.D_se, "sigma": est.sigma, "sigma_se": est.sigma_se,
               "L": L, "t": t, "replicas": reps, "T": rho}
    else:
        raise sio.ConfigError(f"model.family: transport runs cover SIP, SEP, IRW, KMP, ThBEP, not {fam.value}")
    ctx.json("transport", {"family": fam.value, "shape": shape} | out)
    return EXIT_OK


def cmd_verify(ctx: Context) -> int:
    from .verify import run_suite

    suite = ctx.args.suite
    checks = run_suite(suite, seed=ctx.seed)
    failed = [c for c in checks if not c.passed]
    ctx.json(f"verify_{suite}", {"suite": suite, "passed": not failed, "n_checks": len(checks),
                                 "checks": [c.as_dict() for c in checks]})
    for c in checks:
        log.info("%s %s deviation=%.3g tol=%.3g", c.verdict.upper(), c.name, c.deviation, c.tolerance)
    if failed:
        for c in failed:
            print(sio.dumps_json(c.as_dict()), file=sys.stderr, end="")
        return EXIT_FAIL
    return EXIT_OK


def cmd_absorption(ctx: Context) -> int:
    from .duality import absorption_table

    ctx.check_section("absorption", ("xi", "method", "runs"))
    spec = ctx.model()
    xi = ctx.opt("absorption", "xi", None)
    if xi is None:
        xi = [0] + [1] * min(spec.L, 2) + [0] * (spec.L - min(spec.L, 2)) + [0]
    if isinstance(xi, str):
        try:
            xi = [int(v) for v in xi.split(",")]
        except ValueError:
            raise sio.ConfigError(f"absorption.xi: not a list of integers: {xi!r}") from None
    if len(xi) != spec.L + 2:
        raise sio.ConfigError(f"absorption.xi: expected {spec.L + 2} entries, got {len(xi)}")
    method = ctx.opt("absorption", "method", "exact")
    runs = int(ctx.opt("absorption", "runs", 10_000))
    tab = absorption_table(spec, xi, method, n_runs=runs, seed=ctx.seed)
    rows = [{"m": m, "probability": p, "std_error": e}
            for m, (p, e) in enumerate(zip(tab.probability, tab.std_error))]
    ctx.table("absorption", rows)
    return EXIT_OK


def cmd_stationary(ctx: Context) -> int:
    from .analysis import profile_closed_form, stationary_moments_from_generator
    from .generator import build_generator, stationary_distribution, stationary_residual

    ctx.check_section("stationary", ("cap", "export_generator"))
    spec = ctx.model()
    ref = profile_closed_form(spec)
    if not spec.family.is_discrete:
        mom = stationary_moments_from_generator(spec, 2)
        means = np.array([mom[tuple(int(j == i) for j in range(spec.L))] for i in range(spec.L)])
        rows = [{"i": i + 1, "exact": means[i], "closed_form": ref[i], "deviation": means[i] - ref[i]}
                for i in range(spec.L)]
        ctx.table("profile", rows)
        ctx.json("stationary", {"spec": spec.as_dict(), "method": "moment equations",
                                "moments": {",".join(map(str, k)): v for k, v in mom.items()}})
        return EXIT_OK
    cap = ctx.opt("stationary", "cap", None)
    if cap is None and spec.family.base != Family.SEP:
        cap = 12 if spec.L <= 3 else 8
    G = build_generator(spec, cap, threads=ctx.threads)
    pi = stationary_distribution(G)
    means = pi @ G.states
    rows = [{"i": i + 1, "exact": means[i], "closed_form": ref[i], "deviation": means[i] - ref[i]}
            for i in range(spec.L)]
    ctx.table("profile", rows)
    header = "state_index," + ",".join(f"eta_{i + 1}" for i in range(spec.L)) + ",probability\n"
    body = "".join(f"{k}," + ",".join(map(str, G.states[k])) + f",{pi[k]:.17g}\n" for k in range(G.n_states))
    ctx.text("pi.csv", header + body)
    if ctx.opt("stationary", "export_generator", False):
        ctx.text("generator.coo", G.to_coo_text())
    ctx.json("stationary", {"spec": spec.as_dict(), "cap": G.cap, "n_states": G.n_states,
                            "balance_residual": stationary_residual(G, pi),
                            "truncated_mass": float(pi[G.truncated].sum())})
    return EXIT_OK


_DEFAULT_MODELS = {
    "SIP": dict(shape=1.0, alpha=0.5, gamma=1.5, delta=0.25, beta=1.25),
    "SEP": dict(shape=2.0, alpha=1.5, gamma=0.5, delta=0.5, beta=1.5),
    "IRW": dict(alpha=1.5, gamma=1.0, delta=0.5, beta=1.0),
    "BEP": dict(shape=0.5, T_a=2.0, T_b=0.5),
}


def _reproduce_spec(ctx, L):
    table = ctx.model_table(required=False)
    fam = Family(table.get("family", "SIP"))
    if fam.value not in _DEFAULT_MODELS:
        raise sio.ConfigError(f"model.family: reproduce covers SIP, SEP, IRW, BEP, not {fam.value}")
    params = dict(_DEFAULT_MODELS[fam.value])
    params.update({k: v for k, v in table.items() if k not in ("family", "L")})
    try:
        return make_spec(fam, L, params.pop("shape", None), **params)
    except ModelError as exc:
        raise sio.ConfigError(f"model.{exc}") from None


def cmd_reproduce(ctx: Context) -> int:
    target = ctx.args.target
    if target == "fig1":
        from .analysis import fig1_specs, multilinearity_experiment

        rows = []
        for spec in fig1_specs(6):
            r = multilinearity_experiment(spec)
            for k, d in enumerate(r.d):
                i = k + 2
                e = r.e[i - 3] if i >= 3 else math.nan
                rows.append({"j": spec.shape / 2, "i": i, "d_i": d, "e_i": e})
        ctx.table("fig1", rows)
        return EXIT_OK
    if target == "profiles":
        from .analysis import profile_closed_form, stationary_moments_from_generator
        from .generator import build_generator, stationary_distribution

        spec = _reproduce_spec(ctx, int(ctx.model_table(required=False).get("L", 3)))
        ref = profile_closed_form(spec)
        if spec.family.is_discrete:
            G = build_generator(spec, None if spec.family == Family.SEP else 16)
            ex = stationary_distribution(G) @ G.states
        else:
            mom = stationary_moments_from_generator(spec, 1)
            ex = np.array([mom[tuple(int(j == i) for j in range(spec.L))] for i in range(spec.L)])
        ctx.table(f"profiles_{spec.family.value.lower()}",
                  [{"i": i + 1, "closed_form": ref[i], "exact": ex[i], "deviation": ex[i] - ref[i]}
                   for i in range(spec.L)])
        return EXIT_OK
    if target == "covariances":
        from .analysis import covariance_closed_form, solve_appendix_system

        rows = []
        for L in ctx.args.L_list or [4, 6, 10]:
            spec = _reproduce_spec(ctx, L)
            cov = solve_appendix_system(spec).covariance()
            for i in range(1, L + 1):
                for l in range(i + 1, L + 1):
                    c = covariance_closed_form(spec, i, l)
                    rows.append({"L": L, "i": i, "l": l, "system": cov[i - 1, l - 1], "closed_form": c,
                                 "deviation": cov[i - 1, l - 1] - c})
        ctx.table(f"covariances_{spec.family.value.lower()}", rows)
        return EXIT_OK
    from .mft import micro_macro_compare

    spec = _reproduce_spec(ctx, 4)
    rows = [{"L": r.L, "max_abs": r.max_abs, "max_rel": r.max_rel}
            for r in micro_macro_compare(spec, ctx.args.L_list or [20, 50, 100])]
    ctx.table(f"mft_{spec.family.value.lower()}", rows)
    return EXIT_OK


def cmd_mft(ctx: Context) -> int:
    from .mft import (MacroProfile, ld_functional, macro_correlations, solve_auxiliary_profile,
                      transport_coefficients)

    ctx.check_section("mft", ("profile", "rho_a", "rho_b", "perturb", "points", "grid"))
    table = ctx.model_table()
    try:
        tc = transport_coefficients(table.get("family"), table.get("shape"))
    except (ValueError, ModelError) as exc:
        raise sio.ConfigError(f"model.family: {exc}") from None
    n = int(ctx.opt("mft", "grid", 401))
    path = ctx.opt("mft", "profile", None)
    if path:
        x, rho = sio.read_profile_csv(path)
        prof = MacroProfile(x, rho, float(rho[0]), float(rho[-1]))
    else:
        ra = float(ctx.opt("mft", "rho_a", 0.8))
        rb = float(ctx.opt("mft", "rho_b", 0.3))
        amp = float(ctx.opt("mft", "perturb", 0.0))
        prof = MacroProfile.from_function(lambda s: ra + (rb - ra) * s + amp * np.sin(np.pi * s), ra, rb, n)
    pts = ctx.opt("mft", "points", [0.25, 0.5, 0.75])
    L = int(table.get("L", 100))
    corr = macro_correlations(tc, prof.rho_a, prof.rho_b, L, pts)
    aux = solve_auxiliary_profile(tc, prof)
    F = ld_functional(tc, prof, aux)
    ctx.table("auxiliary_profile", [{"x": a, "rho": b, "F": c, "dF": d}
                                    for a, b, c, d in zip(prof.x, prof.rho, aux.F, aux.dF)])
    ctx.json("mft", {"family": tc.family, "A": tc.A, "B": tc.B, "C": tc.C, "functional": F,
                     "bvp_residual": aux.residual, "bvp_method": aux.method,
                     "correlations": {"L": L, "points": pts, "mean": corr.mean,
                                      "two_point": corr.two_point, "three_point": corr.three_point}})
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "absorption": cmd_absorption,
            "stationary": cmd_stationary, "reproduce": cmd_reproduce, "mft": cmd_mft}


# ---------------------------------------------------------------------------
# driver


def _strip(argv, flags):
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a in flags:
            skip = True
            continue
        if any(a.startswith(f + "=") for f in flags):
            continue
        out.append(a)
    return out


def run(argv=None, *, config: dict | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        if args.replay:
            return _replay(args)
        if not args.command:
            raise UsageError("stochdual: a subcommand is required")
        cfg_path = getattr(args, "config", None)
        cfg = config if config is not None else (sio.load_config(cfg_path) if cfg_path else {})
        ctx = Context(args, cfg, has_config=bool(cfg_path) or config is not None)
        manifest = sio.RunManifest(args.command, _strip(argv, ("--config", "--out-dir")), cfg, ctx.seed,
                                   ctx.threads).start()
        code = COMMANDS[args.command](ctx)
        manifest.resolved = ctx.resolved
        manifest.finish(ctx.outputs).write(ctx.out_dir)
        return code
    except (UsageError, sio.ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _replay(args) -> int:
    man = sio.load_manifest(args.replay)
    argv = list(man["argv"])
    out = getattr(args, "out_dir", None) or str(Path(args.replay).parent / "replay")
    return run(argv + ["--out-dir", out], config=man.get("config", {}))


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
