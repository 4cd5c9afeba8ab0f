"""``qflowctl`` command line: one JSON config in, CSV/JSON artifacts out.

Every run writes ``manifest.json`` (config echo, toolkit version, wall
time) next to its outputs. Exit status 1 signals an invalid config (one
line on stderr, nothing written); exit status 2 a numerical failure, in
which case ``diagnostics.json`` and the manifest are still written.
"""

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .io import (LiteralError, format_matrix, parse_matrix, parse_scalar, parse_vector,
                 write_csv)
from .operators import DimensionError, NotPSDError

KINDS = ("derive", "solve-are", "riccati", "simulate", "probe-optimality", "lemma1",
         "classical-lqr")
SEED_MAX = 2 ** 64 - 1


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    def __init__(self, message, payload):
        super().__init__(message)
        self.payload = payload


# --------------------------------------------------------------------------
# config ingestion
# --------------------------------------------------------------------------

def _need(cfg, key, where="config"):
    if key not in cfg:
        raise ConfigError(f"{where}: missing field '{key}'")
    return cfg[key]


def _mat(cfg, key, where, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"{where}: missing field '{key}'")
        return default
    return parse_matrix(cfg[key], f"{where}.{key}")


def _opt_mat(cfg, key, where):
    return parse_matrix(cfg[key], f"{where}.{key}") if key in cfg else None


def _rect(lit, name):
    """Rectangular matrix literal (rows of equal length)."""
    if not isinstance(lit, list) or not lit or not all(isinstance(r, list) and r for r in lit):
        raise LiteralError(f"{name}: expected a non-empty list of rows")
    n = len(lit[0])
    if any(len(r) != n for r in lit):
        raise LiteralError(f"{name}: rows differ in length")
    return np.array([parse_vector(r, f"{name}[{i}]") for i, r in enumerate(lit)])


def _float(cfg, key, where, default=None, positive=False):
    v = cfg.get(key, default)
    if v is None:
        raise ConfigError(f"{where}: missing field '{key}'")
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key}: expected a finite number")
    if positive and v <= 0:
        raise ConfigError(f"{where}.{key}: must be positive")
    return float(v)


def _int(cfg, key, where, default=None, lo=1, hi=None):
    v = cfg.get(key, default)
    if v is None:
        raise ConfigError(f"{where}: missing field '{key}'")
    if isinstance(v, bool) or not isinstance(v, int) or v < lo or (hi is not None and v > hi):
        raise ConfigError(f"{where}.{key}: expected an integer in [{lo}, {hi if hi else 'inf'}]")
    return v


def parse_model(cfg):
    from .flow import HPModel
    where = "model"
    if not isinstance(cfg, dict):
        raise ConfigError("model: expected an object")
    T = _float(cfg, "T", where, 1.0, positive=True)
    if "H" in cfg or "L" in cfg:
        H = _mat(cfg, "H", where)
        L = _mat(cfg, "L", where)
        extra = {k: _opt_mat(cfg, k, where) for k in ("F", "Psi", "Phi")}
        G = _rect(cfg["G"], "model.G") if "G" in cfg else None
        return HPModel(H, L, T, extra["F"], G, extra["Psi"], extra["Phi"])
    F = _mat(cfg, "F", where)
    d = F.shape[0]
    Phi = _mat(cfg, "Phi", where, np.zeros((d, d)))
    G = _rect(cfg["G"], "model.G") if "G" in cfg else None
    return HPModel.controlled(F, Phi, _opt_mat(cfg, "Psi", where), G, T)


def parse_state(cfg, d):
    from .flow import ExpVectorState
    if cfg is None:
        return ExpVectorState.vacuum(np.eye(d)[0])
    if not isinstance(cfg, dict):
        raise ConfigError("state: expected an object")
    xi = parse_vector(_need(cfg, "xi0", "state"), "state.xi0")
    if xi.size != d:
        raise ConfigError(f"state.xi0: expected {d} entries, got {xi.size}")
    nrm = np.linalg.norm(xi)
    if nrm == 0:
        raise ConfigError("state.xi0: zero vector")
    amp = nrm * parse_scalar(cfg.get("amplitude", 1.0), "state.amplitude")
    pieces = cfg.get("f", [])
    if not isinstance(pieces, list):
        raise ConfigError("state.f: expected a list of [breakpoint, value] pairs")
    bps, vals = [], []
    for i, p in enumerate(pieces):
        if not isinstance(p, list) or len(p) != 2:
            raise ConfigError(f"state.f[{i}]: expected [breakpoint, value]")
        bps.append(_float({"t": p[0]}, "t", f"state.f[{i}]"))
        vals.append(parse_scalar(p[1], f"state.f[{i}].value"))
    try:
        return ExpVectorState(xi / nrm, tuple(bps), tuple(vals), amp,
                              bool(cfg.get("normalized", False)))
    except ValueError as e:
        raise ConfigError(f"state: {e}") from None


def parse_cost(cfg, d, k=None):
    from .riccati import CostSpec
    where = "cost"
    if not isinstance(cfg, dict):
        raise ConfigError("cost: expected an object")
    k = d if k is None else k
    if "X" in cfg:
        X = _mat(cfg, "X", where)
        M = _mat(cfg, "M", where, np.zeros((d, d)))
        return CostSpec.flow(X, M)
    zero = np.zeros((d, d))
    aff = {key: _rect(cfg[key], f"cost.{key}") for key in ("m", "eta", "mT") if key in cfg}
    return CostSpec(_mat(cfg, "Q", where), _mat(cfg, "R", where, np.eye(k)),
                    _mat(cfg, "QT", where, zero), **aff)


def parse_grid(cfg, T):
    from .flow import TimeGrid
    g = cfg.get("grid")
    if g is None:
        return TimeGrid.default(T)
    if isinstance(g, int) and not isinstance(g, bool):
        g = {"steps": g}
    if not isinstance(g, dict):
        raise ConfigError("grid: expected a step count or an object with 'steps'")
    return TimeGrid(T, _int(g, "steps", "grid", lo=1))


def _seed(cfg):
    return _int(cfg, "seed", "config", 0, lo=0, hi=SEED_MAX)


# --------------------------------------------------------------------------
# runners: parse and validate the config, return a zero-argument compute step
# --------------------------------------------------------------------------

def _table(name):
    from . import ito
    tables = {"boson": ito.boson_fock_table, "classical": ito.classical_table,
              "gauge": ito.gauge_table, "poisson": ito.poisson_pair_table,
              "fermion": ito.fermion_levy_table, "levy": ito.symbolic_levy_table}
    if name not in tables:
        raise ConfigError(f"table: unknown table '{name}' (choose from {sorted(tables)})")
    return tables[name]()


def _json_expr(e):
    return e.to_data()


def run_derive(cfg):
    from .ito import derive_flow_generator, verify_theorem1_cancellation
    table = _table(cfg.get("table", "boson"))
    checks = cfg.get("theorem1", [])
    if not isinstance(checks, list) or not all(isinstance(c, str) for c in checks):
        raise ConfigError("theorem1: expected a list of table names")
    extra = [(c, _table(c)) for c in checks]

    def compute():
        out = {"table": cfg.get("table", "boson")}
        if len(table.noise) == 2:
            g = derive_flow_generator(table)
            out["flow_generator"] = {
                "dt": _json_expr(g.theta0), "dA": _json_expr(g.coef_dA),
                "dAdag": _json_expr(g.coef_dAdag),
                "residuals": {k: _json_expr(v) for k, v in g.residuals.items()},
                "unmatched": _json_expr(g.unmatched), "exact": g.ok}
        out["theorem1"] = {}
        for name, t in extra:
            res = verify_theorem1_cancellation(t)
            out["theorem1"][name] = {"residual": _json_expr(res), "zero": res.is_zero()}
        return {"derive.json": out}
    return compute


def run_solve_are(cfg):
    from .riccati import NewtonStagnationError, solve_care, solve_paper_are
    method = cfg.get("method", "care")
    if method == "care":
        m = _need(cfg, "matrices")
        F = _mat(m, "F", "matrices")
        d = F.shape[0]
        G = _rect(m["G"], "matrices.G") if "G" in m else np.eye(d)
        R = _mat(m, "R", "matrices", np.eye(G.shape[1]))
        Q = _mat(m, "Q", "matrices")
        Phi = _opt_mat(m, "Phi", "matrices")

        def compute():
            try:
                r = solve_care(F, G, R, Q, Phi)
            except NewtonStagnationError as e:
                raise NumericalFailure("Newton iteration stagnated",
                                       {"residuals": e.residuals}) from None
            return {"are.json": {"method": "care", "Pi": format_matrix(r.Pi),
                                 "residual": r.residual, "residuals": r.residuals,
                                 "iterations": r.iterations, "init": r.init}}
        return compute
    if method == "flow-cost":
        m = _need(cfg, "matrices")
        H = _mat(m, "H", "matrices")
        X = _mat(m, "X", "matrices")
        form = cfg.get("form", "paper")
        if form not in ("paper", "derived"):
            raise ConfigError("form: expected 'paper' or 'derived'")

        def compute():
            r = solve_paper_are(H, X, form=form)
            tr = float(abs(np.trace(0.5j * (H @ r.Pi - r.Pi @ H))))
            return {"are.json": dict(r.diagnostics(), method="flow-cost",
                                     Pi=format_matrix(r.Pi), trace_identity=tr)}
        return compute
    raise ConfigError("method: expected 'care' or 'flow-cost'")


def run_riccati(cfg):
    from .riccati import (RICCATI_HEADER, RiccatiBlowUpError, picard_iterate,
                          solve_forward_riccati, solve_riccati_ode)
    model = parse_model(_need(cfg, "model"))
    cost = parse_cost(_need(cfg, "cost"), model.dim, model.G.shape[1])
    grid = parse_grid(cfg, model.T)
    picard = cfg.get("picard")
    if picard is not None and not isinstance(picard, dict):
        raise ConfigError("picard: expected an object")
    if picard is not None:
        n_it = _int(picard, "iterations", "picard", 30)
        mode = picard.get("drift", "vacuum")
        if mode not in ("vacuum", "levy"):
            raise ConfigError("picard.drift: expected 'vacuum' or 'levy'")

    def compute():
        try:
            traj = solve_riccati_ode(model, cost, grid)
        except RiccatiBlowUpError as e:
            raise NumericalFailure("Riccati solution blew up",
                                   {"time": e.time, "norm": e.norm, "bound": e.bound}) from None
        out = {"riccati.csv": (RICCATI_HEADER, list(traj.rows())),
               "riccati_diagnostics.json": dict(traj.diagnostics, pi0=format_matrix(traj.Pi0))}
        if picard is not None:
            res = picard_iterate(model, cost, grid, n_iters=n_it, drift_mode=mode)
            rows = []
            for n, (mono, inc) in enumerate(zip(res.monotonicity, res.increments), start=1):
                rows.append((n, float(mono), float(inc)))
            direct = solve_forward_riccati(model, cost, grid, drift_mode=mode)
            dist = float(np.linalg.norm(res.final - direct, axis=(1, 2)).max())
            out["picard.csv"] = (("n", "min_eig_decrement", "increment"), rows)
            out["riccati_diagnostics.json"]["picard_distance_to_ode"] = dist
        return out
    return compute


def run_simulate(cfg):
    from .flow import TRAJECTORY_HEADER, collision_oracle, flow_expectations
    model = parse_model(_need(cfg, "model"))
    d = model.dim
    state = parse_state(cfg.get("state"), d)
    grid = parse_grid(cfg, model.T)
    obs_lit = _need(cfg, "observables")
    if not isinstance(obs_lit, list) or not obs_lit:
        raise ConfigError("observables: expected a non-empty list of matrices")
    obs = [parse_matrix(o, f"observables[{i}]") for i, o in enumerate(obs_lit)]
    if any(o.shape != (d, d) for o in obs):
        raise ConfigError(f"observables: expected {d}x{d} matrices")
    oracle = cfg.get("oracle", False)
    n_max = _int(cfg, "oracle_levels", "config", 4, lo=2)

    def compute():
        tr = flow_expectations(model, state, obs, grid, check=False)
        out = {"trajectory.csv": (TRAJECTORY_HEADER, list(tr.rows()))}
        if oracle:
            orc = collision_oracle(model, state, grid, obs, n_max=n_max)
            out["oracle.csv"] = (TRAJECTORY_HEADER, list(orc.rows()))
            out["simulate.json"] = {"max_deviation": float(np.abs(orc.values - tr.values).max())}
        return out
    return compute


def run_probe(cfg):
    from .control import PROBE_HEADER, optimality_probe
    model = parse_model(_need(cfg, "model"))
    d = model.dim
    c = _need(cfg, "cost")
    X = _mat(c, "X", "cost")
    M = _mat(c, "M", "cost", np.zeros((d, d)))
    state = parse_state(cfg.get("state"), d)
    if not state.is_vacuum:
        raise ConfigError("state: the optimality probe needs a vacuum state")
    grid = parse_grid(cfg, model.T)
    eps = cfg.get("epsilons", [0.1, 0.01])
    if not isinstance(eps, list) or not eps or not all(
            isinstance(e, (int, float)) and not isinstance(e, bool) and e > 0 for e in eps):
        raise ConfigError("epsilons: expected a list of positive numbers")
    trials = _int(cfg, "trials", "config", 100)
    seed = _seed(cfg)

    def compute():
        p = optimality_probe(model, X, M, state, grid, eps, trials, seed)
        rep = p.cost_report().to_dict()
        rep.update(min_gap=p.min_gap, value_gap=p.value_gap)
        return {"probe.csv": (PROBE_HEADER, p.rows), "cost_report.json": rep}
    return compute


def run_lemma1(cfg):
    from .control import lemma1_check
    model = parse_model(_need(cfg, "model"))
    d = model.dim
    X = _mat(cfg, "X", "config")
    state = parse_state(cfg.get("state"), d)
    grid = parse_grid(cfg, model.T)
    if not model.is_unitary_form():
        raise ConfigError("model: lemma1 needs a model given by H and L only")

    def compute():
        r = lemma1_check(model, X, state, grid)
        return {"lemma1.json": r.to_dict()}
    return compute


def run_classical_lqr(cfg):
    from .control import classical_lqr_check
    m = _need(cfg, "matrices")
    F = _mat(m, "F", "matrices")
    d = F.shape[0]
    G = _rect(m["G"], "matrices.G") if "G" in m else np.eye(d)
    ell = parse_vector(m["L_drift"], "matrices.L_drift") if "L_drift" in m else np.zeros(d)
    x0 = parse_vector(_need(cfg, "x0"), "x0")
    if ell.size != d or x0.size != d:
        raise ConfigError(f"x0 and L_drift need {d} entries")
    cost = parse_cost(_need(cfg, "cost"), d, G.shape[1])
    T = _float(cfg, "T", "config", 1.0, positive=True)
    grid = parse_grid(cfg, T)

    def compute():
        r = classical_lqr_check(F, G, ell, cost, x0, grid)
        return {"lqr.json": r.to_dict()}
    return compute


RUNNERS = {"derive": run_derive, "solve-are": run_solve_are, "riccati": run_riccati,
           "simulate": run_simulate, "probe-optimality": run_probe, "lemma1": run_lemma1,
           "classical-lqr": run_classical_lqr}


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _dump_json(path, obj):
    with open(path, "w", newline="") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True))
        fh.write("\n")


def _write_outputs(out_dir, files):
    for name, payload in sorted(files.items()):
        path = os.path.join(out_dir, name)
        if name.endswith(".csv"):
            write_csv(path, *payload)
        else:
            _dump_json(path, payload)


def run(kind, config, out_dir):
    """Validate, compute and write; returns the exit status."""
    t0 = time.perf_counter()
    compute = RUNNERS[kind](config)
    status, files, error = 0, None, None
    try:
        files = compute()
    except NumericalFailure as e:
        status, error = 2, str(e)
        files = {"diagnostics.json": dict(e.payload, error=str(e))}
    except (np.linalg.LinAlgError, ArithmeticError) as e:
        status, error = 2, f"{type(e).__name__}: {e}"
        files = {"diagnostics.json": {"error": error}}
    os.makedirs(out_dir, exist_ok=True)
    _write_outputs(out_dir, files)
    manifest = {"kind": kind, "config": config, "version": __version__,
                "wall_time_s": time.perf_counter() - t0, "status": status,
                "outputs": sorted(files)}
    _dump_json(os.path.join(out_dir, "manifest.json"), manifest)
    if error:
        print(f"error: numerical: {error}".replace("\n", " "), file=sys.stderr)
    return status


def build_parser():
    p = argparse.ArgumentParser(prog="qflowctl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="kind", required=True)
    for k in KINDS:
        s = sub.add_parser(k)
        s.add_argument("--config", required=True)
        s.add_argument("--out", required=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            config = json.load(fh)
        if not isinstance(config, dict):
            raise ConfigError("config: expected a JSON object")
        if config.get("kind", args.kind) != args.kind:
            raise ConfigError(f"config: kind '{config['kind']}' does not match '{args.kind}'")
        config.setdefault("kind", args.kind)
        _seed(config)
        return run(args.kind, config, args.out)
    except (ConfigError, LiteralError, DimensionError, NotPSDError, ValueError, KeyError,
            TypeError, OSError) as e:
        msg = str(e).replace("\n", " ")
        print(f"error: config: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
