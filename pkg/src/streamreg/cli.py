"""``streamreg fit|bench|synth``.

Exit codes: 0 success, 2 usage, 3 data, 4 numeric (rank deficiency, non-convergence).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import accumulate as acc
from .bench import run_bench
from .errors import (
    ArityMismatch,
    StreamregError,
    UnderIdentified,
    UsageError,
)
from .glm import GlmConfig, glm_fit, require_converged
from .inference import BootstrapConfig, cluster_bootstrap_vcv, crve_vcv, hc1_vcv
from .ingest import BlockStreamConfig, FileSource, Schema
from .linear import iv_fit, ols_fit, ridge_fit, tsls_fit
from .panel import fe_twoway_fit, fe_within_fit
from .regularized import CoordinateDescentConfig, cv_select_lambda, elastic_net_fit, lasso_fit
from .results import FitResult
from .synth import SynthConfig, write_synth

MODELS = ("ols", "wls", "iv", "2sls", "ridge", "lasso", "elastic-net", "logit", "probit")
VCVS = ("iid", "hc1", "cluster", "cluster-bootstrap")
LINEAR = ("ols", "wls")
DEFAULT_BLOCK_SIZE = 65536


@dataclass
class FitRequest:
    data: str | None = None
    y: str | None = None
    x: list[str] = field(default_factory=list)
    weights: str | None = None
    instruments: list[str] | None = None
    cluster: str | None = None
    fe: str | None = None
    fe2: str | None = None
    folds: int | None = None
    fold_seed: int = 0
    model: str = "ols"
    vcv: str = "iid"
    block_size: int = DEFAULT_BLOCK_SIZE
    lam: float | None = None
    lambda1: float | None = None
    lambda2: float | None = None
    lambda_grid: list[float] | None = None
    reps: int = 999
    seed: int = 0
    output_format: str = "json"
    intercept: bool = True
    strict: bool = False
    save_aggregates: str | None = None
    from_aggregates: str | None = None
    threads: int = 1

    @property
    def grouped_by(self) -> str | None:
        """Which per-group statistics the request needs: 'g', 'fold' or none."""
        if self.fe or self.vcv == "cluster-bootstrap":
            return "g"
        if self.lambda_grid is not None:
            return "fold"
        return None


def validate(req: FitRequest) -> None:
    """Reject inconsistent requests before any data is read."""
    if req.model not in MODELS:
        raise UsageError(f"unknown model {req.model!r}")
    if req.vcv not in VCVS:
        raise UsageError(f"unknown vcv {req.vcv!r}")
    if req.block_size < 1:
        raise UsageError("--block-size must be >= 1")
    if req.threads < 1:
        raise UsageError("--threads must be >= 1")
    if (req.data is None) == (req.from_aggregates is None):
        raise UsageError("give exactly one of --data or --from-aggregates")
    if req.data is not None:
        if not req.y or not req.x:
            raise UsageError("--y and --x are required with --data")
    if req.model == "wls" and req.data is not None and not req.weights:
        raise UsageError("wls requires --weights")
    if req.model in ("iv", "2sls"):
        if req.data is not None:
            if not req.instruments:
                raise UsageError(f"{req.model} requires --instruments")
            if req.model == "iv" and len(req.instruments) != len(req.x):
                raise ArityMismatch(f"iv needs {len(req.x)} instruments, got {len(req.instruments)}")
            if req.model == "2sls" and len(req.instruments) < len(req.x):
                raise UnderIdentified(f"2sls needs at least {len(req.x)} instruments, got {len(req.instruments)}")
    elif req.instruments:
        raise UsageError(f"--instruments is not used by {req.model}")
    if req.vcv != "iid" and req.model not in LINEAR:
        raise UsageError(f"--vcv {req.vcv} is only available for ols/wls")
    if req.vcv in ("cluster", "cluster-bootstrap") and not req.cluster and req.data is not None:
        raise UsageError(f"--vcv {req.vcv} requires --cluster")
    if req.cluster and req.vcv not in ("cluster", "cluster-bootstrap"):
        raise UsageError("--cluster requires --vcv cluster or cluster-bootstrap")
    if req.fe2 and not req.fe:
        raise UsageError("--fe2 requires --fe")
    if req.fe:
        if req.model not in LINEAR:
            raise UsageError("fixed effects are only available for ols/wls")
        if req.vcv != "iid":
            raise UsageError("fixed-effects fits report iid standard errors only")
    if req.from_aggregates is not None and req.vcv in ("hc1", "cluster"):
        raise UsageError(f"--vcv {req.vcv} needs residuals and therefore --data")
    if req.vcv == "cluster-bootstrap" and req.reps < 1:
        raise UsageError("--reps must be >= 1")
    for v in (req.lam, req.lambda1, req.lambda2):
        if v is not None and v < 0:
            raise UsageError("penalties must be nonnegative")
    if req.lambda_grid is not None:
        if req.model not in ("ridge", "lasso", "elastic-net"):
            raise UsageError("--lambda-grid applies to ridge, lasso and elastic-net")
        if not req.lambda_grid or any(v < 0 for v in req.lambda_grid):
            raise UsageError("--lambda-grid must be a nonempty list of nonnegative values")
        if req.data is not None and not req.folds:
            raise UsageError("--lambda-grid requires --folds")
        if req.model == "elastic-net" and req.lambda2 is None:
            raise UsageError("elastic-net cross-validation tunes lambda1; give --lambda2")
        if req.fe or req.vcv != "iid":
            raise UsageError("--lambda-grid cannot be combined with fixed effects or robust vcv")
    elif req.model == "ridge" and req.lam is None:
        raise UsageError("ridge requires --lambda or --lambda-grid")
    elif req.model == "lasso" and req.lam is None and req.lambda1 is None:
        raise UsageError("lasso requires --lambda1 (or --lambda) or --lambda-grid")
    elif req.model == "elastic-net" and (req.lambda1 is None or req.lambda2 is None):
        raise UsageError("elastic-net requires --lambda1 and --lambda2")
    if req.folds is not None and req.folds < 2:
        raise UsageError("--folds must be >= 2")


def build_schema(req: FitRequest) -> Schema:
    group = req.fe or req.cluster
    return Schema(
        dependent=req.y,
        covariates=tuple(req.x),
        weights=req.weights,
        instruments=tuple(req.instruments) if req.instruments else None,
        group=group,
        second_group=req.fe2,
        add_intercept=req.intercept,
        folds=req.folds if req.lambda_grid is not None else None,
        fold_seed=req.fold_seed,
    )


def _penalty_l1(req: FitRequest) -> float:
    return req.lambda1 if req.lambda1 is not None else req.lam


def _estimate(cp, req: FitRequest, point=None) -> FitResult:
    """Closed-form or penalized fit of ``req.model`` on accumulated statistics."""
    m = req.model
    if m in LINEAR:
        return ols_fit(cp)
    if m == "iv":
        return iv_fit(cp)
    if m == "2sls":
        return tsls_fit(cp)
    if m == "ridge":
        return ridge_fit(cp, req.lam if point is None else point)
    if m == "lasso":
        l1 = _penalty_l1(req) if point is None else point
        return lasso_fit(cp, CoordinateDescentConfig(lambda1=l1))[0]
    if m == "elastic-net":
        l1 = _penalty_l1(req) if point is None else point
        return elastic_net_fit(cp, CoordinateDescentConfig(lambda1=l1, lambda2=req.lambda2))[0]
    raise UsageError(f"model {m!r} cannot be fit from aggregates")


def run_fit(req: FitRequest) -> FitResult:
    validate(req)
    source = None
    skipped = 0
    if req.from_aggregates is not None:
        stats = acc.load_json(req.from_aggregates)
        if req.model in ("logit", "probit"):
            raise UsageError("logit/probit need the data; aggregates are not sufficient")
        needs_groups = req.grouped_by is not None
        if needs_groups and not isinstance(stats, acc.GroupedAccumulator):
            raise UsageError("this request needs grouped aggregates (saved with --fe, --cluster or --folds)")
    else:
        schema = build_schema(req)
        source = FileSource(BlockStreamConfig(req.data, block_size=req.block_size, strict=req.strict), schema)
        if req.model in ("logit", "probit"):
            result = glm_fit(source, GlmConfig(link=req.model), names=schema.x_names, k=len(schema.x_names))
            require_converged(result)
            result.passes = source.passes
            result.skipped_rows = source.skipped_rows
            return result
        names, z_names = schema.x_names, schema.z_names
        by = req.grouped_by
        if by is None:
            stats = acc.accumulate_source(source, names, z_names, req.intercept, threads=req.threads)
        else:
            stats = acc.accumulate_grouped_source(
                source, by=by, second_by="t" if req.fe2 else None, names=names, z_names=z_names, intercept=req.intercept
            )
        skipped = source.skipped_rows
        if req.save_aggregates:
            acc.save_json(stats, req.save_aggregates)

    grouped = isinstance(stats, acc.GroupedAccumulator)
    total = stats.total if grouped else stats
    meta: dict = {}
    if req.fe:
        result = (fe_twoway_fit(stats) if req.fe2 else fe_within_fit(stats)).fit
    elif req.lambda_grid is not None:
        grid = list(req.lambda_grid)
        points = grid if req.model != "elastic-net" else [(g, req.lambda2) for g in grid]
        cv = cv_select_lambda(stats, points, model=req.model)
        best = cv.best[0] if req.model == "elastic-net" else cv.best
        result = _estimate(total, req, point=best)
        meta["cv"] = {"grid": grid, "mse": cv.mse.tolist(), "best": best, "folds": stats.n_groups}
    else:
        result = _estimate(total, req)

    if req.vcv == "hc1":
        result.vcv = hc1_vcv(source, result.coefficients, total.sigma, total.n, total.k)
        result.vcv_kind = "hc1"
    elif req.vcv == "cluster":
        result.vcv = crve_vcv(source, result.coefficients, total.sigma, total.n, total.k)
        result.vcv_kind = "cluster"
    elif req.vcv == "cluster-bootstrap":
        boot = cluster_bootstrap_vcv(stats, BootstrapConfig(replications=req.reps, seed=req.seed))
        result.vcv = boot.vcv
        result.vcv_kind = "cluster-bootstrap"
        meta["bootstrap"] = {"reps": req.reps, "failures": boot.failures, "clusters": stats.n_groups}
    result.passes = 0 if source is None else source.passes
    result.skipped_rows = skipped
    result.meta.update(meta)
    result.meta["seed"] = req.seed
    return result


def _jsonable(obj):
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def render_json(result: FitResult) -> str:
    return json.dumps(_jsonable(result.to_dict()), sort_keys=True, indent=2)


def render_text(result: FitResult) -> str:
    names = result.names or [f"x{i}" for i in range(result.k)]
    se, t, p = result.std_errors, result.t_stats, result.p_values
    lines = [f"{result.method} ({result.vcv_kind} vcv)  n={result.n}  dof={result.dof_resid}  passes={result.passes}"]
    width = max(12, *(len(n) for n in names))
    lines.append(f"{'':<{width}} {'coef':>14} {'std.err':>12} {'t':>10} {'p':>10}")
    for i, name in enumerate(names):
        row = f"{name:<{width}} {result.coefficients[i]:>14.6g}"
        if se is not None:
            row += f" {se[i]:>12.6g} {t[i]:>10.4g} {p[i]:>10.4g}"
        lines.append(row)
    if not math.isnan(result.r2):
        lines.append(f"R2={result.r2:.6g}  adj.R2={result.adj_r2:.6g}  F={result.f_stat}  sigma2={result.sigma2:.6g}")
    if result.skipped_rows:
        lines.append(f"skipped rows: {result.skipped_rows}")
    return "\n".join(lines)


def _csv_list(s: str) -> list[str]:
    return [p.strip() for p in s.split(",") if p.strip()]


def _float_list(s: str) -> list[float]:
    try:
        return [float(v) for v in _csv_list(s)]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {s!r}") from exc


def _int_list(s: str) -> list[int]:
    try:
        return [int(v) for v in _csv_list(s)]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of integers: {s!r}") from exc


def _default_threads() -> int:
    try:
        return int(os.environ.get("STREAMREG_THREADS", "1"))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="streamreg", description="Regression from streamed sufficient statistics.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model")
    f.add_argument("--data")
    f.add_argument("--y")
    f.add_argument("--x", type=_csv_list, default=[])
    f.add_argument("--weights")
    f.add_argument("--instruments", type=_csv_list)
    f.add_argument("--cluster")
    f.add_argument("--fe")
    f.add_argument("--fe2")
    f.add_argument("--folds", type=int)
    f.add_argument("--fold-seed", type=int, default=0)
    f.add_argument("--model", choices=MODELS, default="ols")
    f.add_argument("--vcv", choices=VCVS, default="iid")
    f.add_argument("--block-size", type=int, default=DEFAULT_BLOCK_SIZE)
    f.add_argument("--lambda", dest="lam", type=float)
    f.add_argument("--lambda1", type=float)
    f.add_argument("--lambda2", type=float)
    f.add_argument("--lambda-grid", type=_float_list)
    f.add_argument("--reps", type=int, default=999)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--format", dest="output_format", choices=("json", "text"), default="json")
    f.add_argument("--no-intercept", dest="intercept", action="store_false")
    f.add_argument("--strict", action="store_true")
    f.add_argument("--save-aggregates")
    f.add_argument("--from-aggregates")
    f.add_argument("--threads", type=int, default=None)

    b = sub.add_parser("bench", help="time OLS across block sizes (CSV on stdout)")
    b.add_argument("--data", required=True)
    b.add_argument("--y", required=True)
    b.add_argument("--x", type=_csv_list, required=True)
    b.add_argument("--block-sizes", type=_int_list, required=True)
    b.add_argument("--repetitions", type=int, default=3)

    s = sub.add_parser("synth", help="write simulated data and a JSON sidecar with beta")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    return p


def _cmd_fit(args) -> str:
    opts = {k: v for k, v in vars(args).items() if k != "command"}
    if opts["threads"] is None:
        opts["threads"] = _default_threads()
    req = FitRequest(**opts)
    result = run_fit(req)
    return render_json(result) if req.output_format == "json" else render_text(result)


def _cmd_bench(args) -> str:
    schema = Schema(dependent=args.y, covariates=tuple(args.x))

    def make_source(block_size):
        return FileSource(BlockStreamConfig(args.data, block_size=block_size), schema)

    report = run_bench(make_source, args.block_sizes, args.repetitions, names=schema.x_names)
    return report.to_csv() + f"# {report.environment}"


def _cmd_synth(args) -> str:
    meta = write_synth(SynthConfig(n=args.n, k=args.k, seed=args.seed), args.out)
    return json.dumps(meta, sort_keys=True)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {"fit": _cmd_fit, "bench": _cmd_bench, "synth": _cmd_synth}
    try:
        out = handlers[args.command](args)
    except StreamregError as exc:
        print(f"streamreg: error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
