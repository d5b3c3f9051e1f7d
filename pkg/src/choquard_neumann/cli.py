"""Command-line front end: ``choquard <command> --config <path> [--out <path>] [--seed <int>]``.

CSV schemas (one header line, floats with 17 significant digits):

constants      N, mu, p, S, C, S_H, threshold, energy_bound
bubble-check   epsilon, grad, crit, S_pow, rel_defect
cherrier       eps, C_min
eigen          lambda, residual, positivity_margin
minimize       iteration, Q, gradnorm   (plus ``<out>.function.csv``: the minimizer v)
asymptotics    epsilon, grad_term, l2_term, choquard, D, E, Q, threshold, below_gate
quotient       norm_sq, choquard_sq, Q, J, stderr
"""
from __future__ import annotations

import argparse
import io
import os
import sys
import tempfile
import warnings

import numpy as np

from .asymptotics import AsymptoticsSweep, quotient_curve
from .bubbles import (bubble_integrals, energy_bound, hls_sharp_constant, quotient_threshold,
                      s_h_constant, sobolev_constant)
from .config import COMMANDS, ConfigError, ExperimentConfig, parse_config
from .eigen import admissibility_check, weighted_neumann_eigenvalue
from .exponents import ChoquardExponents, FlatBoundarySpec, critical_exponents
from .grid import GridDomain, GridFunction, parse_domain_spec, read_grid_function
from .minimizer import MinimizerOptions, minimize_quotient
from .quotient import NormCoefficients, cherrier_min_constant, sobolev_quotient
from .riesz import choquard_double_integral


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _csv(header, rows):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_atomic(path, text):
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- config -> objects -------------------------------------------------------------


def _exps(cfg: ExperimentConfig) -> ChoquardExponents:
    if cfg.get("p") is not None:
        return ChoquardExponents(cfg["N"], cfg["mu"], cfg["p"])
    return critical_exponents(cfg["N"], cfg["mu"])


def _domain(cfg: ExperimentConfig) -> GridDomain:
    d = cfg.section("domain")
    lines = [f"{k}={v}" for k, v in d.items() if v is not None and v != ""]
    return parse_domain_spec("\n".join(lines))


def _unit_coordinate(domain: GridDomain):
    """Position in [0, 1] along the first axis (boxes) or the radius (radial domains)."""
    if domain.is_radial:
        return domain.radii / domain.extents[0][1]
    lo, hi = domain.extents[0]
    return (domain.points[:, 0] - lo) / (hi - lo)


def _below_fraction(t, split):
    """Fraction of each node's dual cell (in the unit coordinate) lying below ``split``."""
    u, inv = np.unique(t, return_inverse=True)
    mids = 0.5 * (u[1:] + u[:-1])
    lo = np.concatenate([[u[0]], mids])
    hi = np.concatenate([mids, [u[-1]]])
    width = hi - lo
    frac = np.where(width > 0, np.clip((split - lo) / np.where(width > 0, width, 1.0), 0.0, 1.0),
                    (u < split).astype(float))
    return frac[inv]


def _weight(cfg, domain) -> GridFunction:
    """alpha from ``weight.file`` (a grid-function dump) or the two-level step.

    The step takes ``plus`` below ``split`` and ``-minus`` above it, cell-averaged
    over the dual cell of each node so that the jump does not snap to the grid.
    """
    w = cfg.section("weight")
    if w.get("file"):
        with open(w["file"], encoding="utf-8") as fh:
            return read_grid_function(domain, fh.read())
    f = _below_fraction(_unit_coordinate(domain), w["split"])
    alpha = (w["plus"] * f - w["minus"] * (1.0 - f)) * w["scale"]
    return GridFunction(domain, alpha)


def _coeffs(cfg, domain) -> NormCoefficients:
    if cfg.get("lambda") is not None:
        return NormCoefficients.from_weight(_weight(cfg, domain), cfg["lambda"], cfg["b"])
    return NormCoefficients(cfg["a"], cfg["b"])


def _focus(domain):
    if domain.is_radial:
        return None
    c = np.array([0.5 * (lo + hi) for lo, hi in domain.extents])
    c[-1] = domain.extents[-1][0]
    return c


def _gaussian(domain, scale):
    """exp(-|x - x0|^2/scale^2) centred at the bottom-face centre (the origin on radial grids)."""
    c = _focus(domain)
    if c is None:
        d2 = domain.radii**2
    else:
        d2 = ((domain.points - c) ** 2).sum(axis=1)
    return GridFunction(domain, np.exp(-d2 / scale**2))


# -- commands ------------------------------------------------------------------------


def _run_constants(cfg):
    e = critical_exponents(cfg["N"], cfg["mu"])
    row = (e.N, e.mu, e.two_star_mu, sobolev_constant(e.N), hls_sharp_constant(e),
           s_h_constant(e), quotient_threshold(e), energy_bound(e))
    return {"": _csv(["N", "mu", "p", "S", "C", "S_H", "threshold", "energy_bound"], [row])}


def _run_bubble_check(cfg):
    N = cfg["N"]
    S = sobolev_constant(N)
    rows = []
    for eps in cfg["epsilons"]:
        g, c = bubble_integrals(N, eps)
        rows.append((eps, g, c, S ** (N / 2), abs(g - c) / S ** (N / 2)))
    return {"": _csv(["epsilon", "grad", "crit", "S_pow", "rel_defect"], rows)}


def _run_cherrier(cfg):
    d = _domain(cfg)
    e = _exps(cfg)
    family = [_gaussian(d, s) for s in cfg["family.scales"]]
    rows = [(eps, cherrier_min_constant(family, eps, e)) for eps in cfg["eps"]]
    return {"": _csv(["eps", "C_min"], rows)}


def _run_eigen(cfg):
    d = _domain(cfg)
    res = weighted_neumann_eigenvalue(admissibility_check(_weight(cfg, d)))
    return {"": _csv(["lambda", "residual", "positivity_margin"],
                     [(res.lambda_alpha, res.residual, res.positivity_margin)])}


def _run_minimize(cfg):
    d = _domain(cfg)
    m = cfg.section("minimizer")
    opts = MinimizerOptions(step=m["step"], max_iters=m["max_iters"], grad_tol=m["grad_tol"],
                            restarts=m["restarts"], seed=cfg.seed, metric=m["metric"])
    res = minimize_quotient(d, _coeffs(cfg, d), _exps(cfg), opts)
    rows = [(int(it), Q, g) for it, Q, g in res.history]
    return {"": _csv(["iteration", "Q", "gradnorm"], rows), ".function.csv": res.v.to_csv()}


def _run_asymptotics(cfg):
    e = critical_exponents(cfg["N"], cfg["mu"])
    eps = tuple(np.geomspace(cfg["eps_max"], cfg["eps_min"], cfg["n_eps"]))
    sweep = AsymptoticsSweep(e, cfg["lambda"], cfg["alpha0"],
                             FlatBoundarySpec(cfg["k"], cfg["c"], cfg["R"]), eps)
    curve = quotient_curve(sweep)
    rows = [(p.epsilon, p.grad_term, p.l2_term, p.choquard, p.D, p.E, p.Q, p.threshold, p.below_gate)
            for p in curve]
    header = ["epsilon", "grad_term", "l2_term", "choquard", "D", "E", "Q", "threshold", "below_gate"]
    return {"": _csv(header, rows)}


def _run_quotient(cfg):
    d = _domain(cfg)
    e = _exps(cfg)
    u = _gaussian(d, cfg["function.scale"])

    def kw():
        # identical streams, so the stderr belongs to the estimate in the report
        return {"method": cfg["method"], "n_pairs": cfg["mc.pairs"],
                "rng": np.random.default_rng(np.random.SeedSequence(cfg.seed))}

    rep = sobolev_quotient(u, _coeffs(cfg, d), e, **kw())
    _, se = choquard_double_integral(abs(u), e.power, e, return_stderr=True, **kw())
    return {"": _csv(["norm_sq", "choquard_sq", "Q", "J", "stderr"],
                     [(rep.norm_sq, rep.choquard_sq, rep.Q, rep.J, se)])}


_RUNNERS = {
    "constants": _run_constants,
    "bubble-check": _run_bubble_check,
    "cherrier": _run_cherrier,
    "eigen": _run_eigen,
    "minimize": _run_minimize,
    "asymptotics": _run_asymptotics,
    "quotient": _run_quotient,
}


def run(config: ExperimentConfig, stderr=None) -> int:
    """Execute a validated config; 0 on success, 1 on a downstream failure."""
    stderr = sys.stderr if stderr is None else stderr
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            outputs = _RUNNERS[config.command](config)
        for w in caught:
            print(f"warning ({config.command}): {w.message}", file=stderr)
    except Exception as exc:  # surfaced with command context
        print(f"error in {config.command}: {type(exc).__name__}: {exc}", file=stderr)
        return 1
    for suffix, text in outputs.items():
        write_atomic(config.output_path + suffix, text)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="choquard", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="plain-text key=value config file")
    parser.add_argument("--out", default=None, help="output CSV path")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, command=args.command, output_path=args.out, seed=args.seed)
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
