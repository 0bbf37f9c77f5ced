"""Command-line interface.

Subcommands: ``generate``, ``fit``, ``evaluate``, ``cv``, ``properties`` and
``audit``. Outputs are deterministic for fixed inputs, config and seed:
JSON is written with sorted keys, floats with ``repr`` and indices 1-based.

Exit codes: 0 success, 1 usage error, 2 data or config error, 3 audit failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import properties as props
from .config import ConfigError, EvalConfig, RunConfig, config_from_dict, config_to_dict, load_config
from .evaluation import CV_COLUMNS, TrainedModel, cross_validate, empirical_log_likelihood, standard_grid
from .gibbs import AuditError, FitResult, run
from .hierarchy import HierarchyState
from .model import DecompositionState, Priors, audit, generate
from .tensor import CountFileError, CountTensor, load_counts, save_counts

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_AUDIT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------- writers


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dump_json(obj, path: Path | None = None) -> str:
    text = json.dumps(_plain(obj), sort_keys=True, indent=1) + "\n"
    if path is not None:
        path.write_text(text)
    return text


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(_plain(v), sort_keys=True)
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def write_matrix(path: Path, mat: np.ndarray) -> None:
    """A factor matrix: one row per topic, one column per feature (both 1-based)."""
    mat = np.asarray(mat)
    write_csv(path, ["topic"] + [str(y + 1) for y in range(mat.shape[1])], [[k + 1, *mat[k]] for k in range(mat.shape[0])])


def read_matrix(path: Path) -> np.ndarray:
    with path.open() as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64)


def state_to_json(st: DecompositionState) -> dict:
    return {
        "dims": list(st.dims),
        "K": list(st.K_dims),
        "sample": (st.tok_x + 1).tolist(),
        "features": (st.tok_y + 1).tolist(),
        "position": (st.z + 1).tolist(),
        "support": (np.asarray(st.support) + 1).tolist(),
        "n": st.n.tolist(),
        "m": [mj.tolist() for mj in st.m],
    }


def state_from_json(obj: dict, hierarchy: HierarchyState | None) -> DecompositionState:
    p = len(obj["dims"]) - 1
    return DecompositionState(
        dims=tuple(obj["dims"]),
        K_dims=tuple(obj["K"]),
        support=np.asarray(obj["support"], dtype=np.int64).reshape(obj["dims"][0], -1, p) - 1,
        tok_x=np.asarray(obj["sample"], dtype=np.int64) - 1,
        tok_y=np.asarray(obj["features"], dtype=np.int64).reshape(-1, p) - 1,
        z=np.asarray(obj["position"], dtype=np.int64) - 1,
        n=np.asarray(obj["n"], dtype=np.int64).reshape(obj["dims"][0], -1),
        m=[np.asarray(mj, dtype=np.int64).reshape(-1, d) for mj, d in zip(obj["m"], obj["dims"][1:])],
        hierarchy=hierarchy,
    )


# ---------------------------------------------------------------- helpers


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _counts_for(cfg: RunConfig, path) -> CountTensor:
    t = load_counts(path)
    dims = cfg.model.dims
    if dims is not None and tuple(dims) != tuple(t.dims):
        raise ConfigError(f"count file {path} has dims {tuple(t.dims)} but the config declares dims {tuple(dims)}")
    if t.p != cfg.model.p:
        raise ConfigError(f"count file {path} has {t.p} feature modes but the config declares p={cfg.model.p}")
    return t


# ---------------------------------------------------------------- subcommands


def cmd_generate(args) -> int:
    cfg = _load_run_config(args)
    m = cfg.model
    if m.dims is None:
        raise ConfigError("generate needs model.dims")
    lam = args.lam if args.lam is not None else m.lam
    if lam is None:
        raise ConfigError("generate needs lam (model.lam, generate.lam or --lam)")
    priors = Priors.from_config(m, m.dims)
    t, st = generate(m, priors, lam, cfg.seed)
    out = _out_dir(args)
    save_counts(t, out / "counts.tsv")
    for j, psi in enumerate(st.psi):
        write_matrix(out / f"psi_mode{j + 1}.csv", psi)
    rows = st.topic_rows() + 1
    with (out / "z.tsv").open("w") as fh:
        p = st.p
        fh.write("#sample\t" + "\t".join(f"y{j + 1}" for j in range(p)) + "\t" + "\t".join(f"z{j + 1}" for j in range(p)) + "\n")
        for x, y, r in zip(st.tok_x + 1, st.tok_y + 1, rows):
            fh.write("\t".join(str(int(v)) for v in (x, *y, *r)) + "\n")
    truth = {
        "seed": cfg.seed,
        "dims": list(st.dims),
        "K": list(st.K_dims),
        "lam": t.lam.tolist(),
        "phi": st.phi,
        "support": (np.asarray(st.support) + 1).tolist(),
        "config": config_to_dict(cfg),
    }
    dump_json(truth, out / "truth.json")
    dump_json(state_to_json(st), out / "state.json")
    if st.hierarchy is not None:
        dump_json(st.hierarchy.to_json(), out / "hierarchy.json")
    return EXIT_OK


def _write_fit(out: Path, cfg: RunConfig, t: CountTensor, fit: FitResult) -> None:
    p = cfg.model.p
    diag_rows, draws = [], []
    for ch in fit.chains:
        for d in ch.diagnostics:
            audit_flag = "" if d.audit_ok is None else int(d.audit_ok)
            diag_rows.append([ch.chain + 1, d.sweep, d.log_joint, *d.K, audit_flag])
        for dr in ch.draws:
            draws.append(
                {"chain": ch.chain + 1, "sweep": dr.sweep, "log_joint": dr.log_joint, "K": list(dr.K),
                 "psi": [ps.tolist() for ps in dr.psi]}
            )
    write_csv(out / "diagnostics.csv", ["chain", "sweep", "log_joint"] + [f"K_{j + 1}" for j in range(p)] + ["audit"], diag_rows)
    with (out / "draws.ndjson").open("w") as fh:
        for d in draws:
            fh.write(json.dumps(_plain(d), sort_keys=True) + "\n")
    for j, psi in enumerate(fit.psi_mean):
        write_matrix(out / f"psi_mode{j + 1}.csv", psi)
    model = {
        "config": config_to_dict(cfg),
        "dims": list(t.dims),
        "K": list(fit.state.K_dims),
        "train_lam_median": float(np.median(t.lam)),
        "chains": len(fit.chains),
        "retained_draws": len(fit.draws),
    }
    dump_json(model, out / "model.json")
    dump_json(state_to_json(fit.state), out / "state.json")
    if fit.state.hierarchy is not None:
        dump_json(fit.state.hierarchy.to_json(), out / "hierarchy.json")


def cmd_fit(args) -> int:
    cfg = _load_run_config(args)
    t = _counts_for(cfg, args.counts)
    if args.chains is not None:
        cfg.sampler.chains = args.chains
    model = cfg.model
    if model.dims is None:
        model.dims = tuple(t.dims)
    fit = run(t, model, cfg.sampler, Priors.from_config(model, t.dims))
    _write_fit(_out_dir(args), cfg, t, fit)
    return EXIT_OK


def load_trained(fit_dir: Path) -> TrainedModel:
    meta = json.loads((fit_dir / "model.json").read_text())
    cfg = config_from_dict(meta["config"])
    dims = tuple(meta["dims"])
    psi = [read_matrix(fit_dir / f"psi_mode{j + 1}.csv") for j in range(cfg.model.p)]
    h = None
    if (fit_dir / "hierarchy.json").exists():
        h = HierarchyState.from_json(json.loads((fit_dir / "hierarchy.json").read_text()))
    return TrainedModel(
        dims=dims,
        psi=psi,
        priors=Priors.from_config(cfg.model, dims),
        hierarchy=h,
        K=None if h is not None else tuple(cfg.model.K),
        train_lam_median=float(meta["train_lam_median"]),
    )


def cmd_evaluate(args) -> int:
    cfg = _load_run_config(args)
    trained = load_trained(Path(args.fit_dir))
    held = load_counts(args.counts)
    per, total = empirical_log_likelihood(trained, held, cfg.eval, seed=cfg.seed)
    out = _out_dir(args)
    write_csv(out / "loglik.csv", ["sample", "log_likelihood"], [[x + 1, v] for x, v in enumerate(per)])
    dump_json({"total": total, "samples": int(held.dims[0]), "G": cfg.eval.G, "seed": cfg.seed,
               "mixture": cfg.eval.mixture, "epsilon": cfg.eval.epsilon}, out / "summary.json")
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg = _load_run_config(args)
    t = _counts_for(cfg, args.counts)
    cfgs = standard_grid(cfg.model) if args.standard_grid else [cfg.model]
    ev = cfg.eval
    res = cross_validate(t, cfgs, cfg.sampler, ev)
    out = _out_dir(args)
    write_csv(out / "cv.csv", list(CV_COLUMNS), [[r[c] for c in CV_COLUMNS] for r in res.rows])
    dump_json(
        {"test": (res.test + 1).tolist(), "folds": [(f + 1).tolist() for f in res.folds],
         "fold_scores": res.fold_scores, "seed": ev.seed},
        out / "cv_folds.json",
    )
    if args.emit_plot_data:
        dump_json(res.plot_data(), out / "plot_data.json")
    return EXIT_OK


def _assignment_model(args) -> props.AssignmentModel:
    g = args.gamma
    if args.model == "crp":
        return props.AssignmentModel.crp(g[0] if g else 1)
    if args.model == "independent-crp":
        g = g or [1, 1]
        return props.AssignmentModel.independent_crp(g[0], g[-1])
    if args.model == "pam-node":
        top = args.gamma_top or [1, 1]
        child = args.gamma_child or [1, 1]
        return props.AssignmentModel.pam_node(top, child)
    g = g or [1, 0, 1, 0]
    if len(g) != 4:
        raise UsageError("generalized-ncrp takes --gamma g01 g02 gi1 gi2")
    return props.AssignmentModel.generalized_ncrp(*g)


def cmd_properties(args) -> int:
    if args.model == "dirichlet-swap":
        report = props.dirichlet_swap_witness(tuple(args.gamma or (1, 2)))
    elif args.model == "nested-impossibility":
        report = props.impossibility_witness(args.n)
    elif args.model == "linearity":
        report = {
            "linear": props.linearity_check(lambda x: x, 1, args.n),
            "quadratic": props.linearity_check(lambda x: x * x, 1, args.n),
        }
    else:
        model = _assignment_model(args)
        checks = [props.check_exchangeability(model, args.n)]
        if model.kind != "crp":
            flavor = "loose" if model.kind in ("independent-crp", "pam-node") else "strict"
            checks.append(props.check_partition_property(model, args.n, flavor))
            rgr = "independent" if model.kind == "independent-crp" else "hierarchical"
            checks.append(props.check_rich_get_richer(model, args.n, rgr))
        report = {"model": model.describe(), "n": args.n, "checks": [c.to_json() for c in checks]}
        for c in checks:
            report[c.prop] = "holds" if c.holds else "fails"
    report = props._jsonable_deep(report)
    text = dump_json(report)
    if args.out_dir:
        (_out_dir(args) / "properties.json").write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_audit(args) -> int:
    d = Path(args.snapshot)
    obj = json.loads((d / "state.json").read_text())
    h = None
    if (d / "hierarchy.json").exists():
        h = HierarchyState.from_json(json.loads((d / "hierarchy.json").read_text()))
    st = state_from_json(obj, h)
    problems = audit(st)
    if problems:
        for msg in problems:
            print(msg, file=sys.stderr)
        return EXIT_AUDIT
    print("audit passed")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hbtucker", description="Hierarchical Bayesian Tucker decomposition of count tensors.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="TOML config file")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out-dir", default=None if not config else ".", help="output directory")

    g = sub.add_parser("generate", help="draw synthetic data from the generative process")
    common(g)
    g.add_argument("--lam", type=int, default=None, help="counts per sample")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="run the Gibbs sampler on a count file")
    common(f)
    f.add_argument("--counts", required=True)
    f.add_argument("--chains", type=int, default=None)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("evaluate", help="held-out empirical log-likelihood of a fit")
    common(e)
    e.add_argument("--fit-dir", required=True)
    e.add_argument("--counts", required=True, help="held-out count file")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("cv", help="held-out split plus k-fold cross-validation")
    common(c)
    c.add_argument("--counts", required=True)
    c.add_argument("--standard-grid", action="store_true", help="sweep the standard L, gamma, tau grid")
    c.add_argument("--emit-plot-data", action="store_true", help="also write plot_data.json")
    c.set_defaults(func=cmd_cv)

    p = sub.add_parser("properties", help="exact partition-property checks")
    p.add_argument(
        "--model", required=True,
        choices=["crp", "independent-crp", "pam-node", "generalized-ncrp", "dirichlet-swap", "nested-impossibility", "linearity"],
    )
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--gamma", type=float, nargs="+", default=None)
    p.add_argument("--gamma-top", type=float, nargs="+", default=None)
    p.add_argument("--gamma-child", type=float, nargs="+", default=None)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_properties)

    a = sub.add_parser("audit", help="recount the statistics of a saved state")
    a.add_argument("--snapshot", required=True, help="directory holding state.json (from fit or generate)")
    a.set_defaults(func=cmd_audit)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AuditError as exc:
        print(f"audit failure: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except (ConfigError, CountFileError, FileNotFoundError, ValueError, KeyError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
