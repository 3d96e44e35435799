"""Run orchestration behind the command-line subcommands.

Every run is described by a :class:`RunConfig`, writes its artifacts into
``config.output_dir`` and returns a :class:`RunResult` whose ``failures``
list names each assertion that did not hold.  CSV artifacts depend only on
the configuration, so equal configs give byte-identical CSVs.
"""

import dataclasses
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lintrain import bounds, verify
from lintrain._rng import rng_for
from lintrain.architect import param_count, size_widths
from lintrain.data import corrupt_labels, load_idx, synthesize
from lintrain.losses import LossSpec
from lintrain.net import Params, features, init_params
from lintrain.reports import fmt, read_csv, write_csv, write_kv
from lintrain.trainer import CertificateError, estimate_cz, masked_descent, train, write_trace_csv

OUTPUT_ENV = "LINTRAIN_OUTPUT_DIR"
SUBCOMMANDS = ("build", "train", "verify", "bounds", "experiment", "compare")
SUITES = ("concentration", "moments", "rank", "witness", "lipschitz", "separation")

# Defaults that differ between subcommands; anything else comes from RunConfig.
SUBCOMMAND_DEFAULTS = {
    "build": {"width_factor": 1},
    "train": {"width_factor": 2},
    "verify": {"width_factor": 1},
    "bounds": {"n": 32},
    "experiment": {"n": 256, "m_x": 8, "m_y": 2, "width_factor": 4},
    "compare": {},
}


@dataclass
class RunConfig:
    """Everything a run depends on.  Field names double as CLI flags."""

    subcommand: str = "train"
    # dataset source: synthetic unless IDX paths are given
    synthetic: str = "separable"
    images: str = ""
    labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    n: int = 64
    n_test: int = 2000
    m_x: int = 16
    m_y: int = 4
    corrupt: float = 0.0
    # architecture
    H: int = 2
    delta: float = 0.1
    C: float = 4.0
    alpha: float = 10.0
    c_w: float = 2.0
    c_b: float = 0.01
    width_factor: int = 1
    # training
    loss: str = "squared"
    epsilon: float = 1e-3
    max_steps: int = 0
    steps: int = 40000
    log_every: int = 100
    timing: bool = False
    # generalization bound
    rho: float = 1.0
    varsigma: float = 1.0
    delta_prime: float = 0.05
    # verify / bounds
    suite: str = "all"
    widths: str = "64,256,1024,4096"
    trials: int = 1000
    gamma: float = 1.0
    mc_samples: int = 1_000_000
    seeds: int = 10
    archs: str = "3,5,4,2;4,6,5,3;2,4,4,2"
    radii: str = "1,10"
    # experiment / compare
    paired: bool = False
    natural_dir: str = ""
    corrupted_dir: str = ""
    seed: int = 0
    output_dir: str = ""
    plots: bool = True

    @classmethod
    def field_types(cls):
        return {f.name: f.type for f in dataclasses.fields(cls)}

    @classmethod
    def parse_value(cls, name, text):
        kind = cls.field_types().get(name)
        if kind is None:
            raise ValueError(f"unknown config key {name!r}")
        if kind in (bool, "bool"):
            low = str(text).strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"{name} expects a boolean, got {text!r}")
            return low in ("true", "1", "yes")
        if kind in (int, "int"):
            return int(float(text)) if "e" in str(text).lower() else int(text)
        if kind in (float, "float"):
            return float(text)
        return str(text)

    @classmethod
    def read_file(cls, path):
        """Flat key=value lines; '#' starts a comment."""
        out = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key = key.strip().replace("-", "_")
            out[key] = cls.parse_value(key, value.strip())
        return out

    @classmethod
    def build(cls, subcommand, file_values=None, cli_values=None):
        """Subcommand defaults < config file < command line."""
        values = dict(SUBCOMMAND_DEFAULTS.get(subcommand, {}))
        values.update(file_values or {})
        values.update(cli_values or {})
        values["subcommand"] = subcommand
        if not values.get("output_dir"):
            values["output_dir"] = os.environ.get(OUTPUT_ENV, "") or os.path.join(
                "runs", subcommand)
        return cls(**values)

    def to_text(self):
        return "".join(f"{f.name}={fmt(getattr(self, f.name))}\n"
                       for f in dataclasses.fields(self))

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


@dataclass
class RunResult:
    output_dir: Path
    failures: list = field(default_factory=list)
    files: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.failures

    @property
    def exit_status(self):
        return 0 if self.ok else 1


def _int_list(text):
    return [int(t) for t in str(text).replace(";", ",").split(",") if t.strip()]


def _float_list(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _plot(result, fn, *args):
    # matplotlib is only needed when a figure is requested
    from lintrain import plotting
    path = getattr(plotting, fn)(*args)
    result.files.append(path)


# ---------------------------------------------------------------- datasets

def load_datasets(cfg, need_test=False):
    """(train, test) for the config; ``test`` is None unless requested."""
    if cfg.images:
        train_ds = load_idx(cfg.images, cfg.labels, limit=cfg.n)
        test_ds = None
        if need_test:
            if not cfg.test_images:
                raise ValueError("an IDX run needs --test-images and --test-labels")
            test_ds = load_idx(cfg.test_images, cfg.test_labels, limit=cfg.n_test)
    else:
        train_ds = synthesize(cfg.n, cfg.m_x, cfg.m_y, cfg.synthetic, seed=cfg.seed, stream=0)
        test_ds = None
        if need_test:
            test_ds = synthesize(cfg.n_test, cfg.m_x, cfg.m_y, cfg.synthetic, seed=cfg.seed,
                                 stream=1)
    if cfg.corrupt > 0:
        train_ds = corrupt_labels(train_ds, cfg.corrupt, cfg.seed, stream=0)
        if test_ds is not None:
            test_ds = corrupt_labels(test_ds, cfg.corrupt, cfg.seed, stream=1)
    return train_ds, test_ds


def arch_for(cfg, ds):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return size_widths(ds.n, cfg.H, cfg.delta, ds.m_x, ds.m_y, cfg.C,
                           last_width_factor=cfg.width_factor, alpha=cfg.alpha,
                           c_w=cfg.c_w, c_b=cfg.c_b, seed=cfg.seed)


# ------------------------------------------------------------------- build

def run_build(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = RunResult(out)
    ds, _ = load_datasets(cfg)
    spec = arch_for(cfg, ds)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        d = param_count(spec, ds.n)
    params = init_params(spec, cfg.seed)
    spec.save(out / "arch.txt")
    (out / "params.bin").write_bytes(params.to_bytes())
    ds.to_csv(out / "dataset.csv")
    result.summary = {
        "widths": spec.widths, "d": d, "n": ds.n, "n_m_y": ds.n * ds.m_y,
        "underparameterized": bool(caught), "gamma": ds.gamma,
    }
    write_kv(out / "build_report.txt", result.summary)
    result.files += [out / "arch.txt", out / "params.bin", out / "dataset.csv",
                     out / "build_report.txt"]
    return result


# ------------------------------------------------------------------- train

def run_train(cfg):
    """Certified masked gradient descent on the output layer."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = RunResult(out)
    ds, _ = load_datasets(cfg)
    spec = arch_for(cfg, ds)
    params0 = init_params(spec, cfg.seed)
    spec.save(out / "arch.txt")
    (out / "params0.bin").write_bytes(params0.to_bytes())
    try:
        params, report = train(params0, ds, LossSpec(cfg.loss), cfg.epsilon,
                               cfg.max_steps or None, strict=False)
    except CertificateError as exc:
        result.failures.append(f"rank_check failed at seed {cfg.seed}: {exc}")
        return result
    (out / "params.bin").write_bytes(params.to_bytes())
    write_trace_csv(out / "train_trace.csv", report, timing=cfg.timing)
    result.summary = dict(report.summary(), widths=spec.widths, seed=cfg.seed,
                          final_train_loss=report.achieved)
    write_kv(out / "certificate.txt", result.summary)
    result.files += [out / "arch.txt", out / "params0.bin", out / "params.bin",
                     out / "train_trace.csv", out / "certificate.txt"]
    checks = {
        "monotone_descent": report.all_monotone,
        "rate_bound": report.all_rate_ok,
        "norm_bound": report.norm_ok,
        "epsilon_reached": report.success,
    }
    result.failures += [f"{name} failed at seed {cfg.seed}" for name, ok in checks.items()
                        if not ok]
    if cfg.plots:
        _plot(result, "plot_certificate", out / "convergence.png", report)
    return result


# ------------------------------------------------------------------ verify

def _suite_concentration(cfg, out, result, lines):
    widths = _int_list(cfg.widths)
    rows = []
    reports = {}
    for name, diff in (("norm", False), ("difference", True)):
        rep = verify.concentration_suite(widths, cfg.trials, cfg.c_w, cfg.c_b, cfg.alpha,
                                         seed=cfg.seed, difference=diff)
        reports[name] = rep
        for m in widths:
            q25, q50, q75 = np.percentile(rep.deviations[m], [25, 50, 75])
            rows.append({"statistic": name, "width": m, "q25": q25, "median": q50,
                         "q75": q75, "iqr": rep.iqr[m]})
        lines[f"concentration_{name}_spread_ratio"] = rep.spread_ratio
        if not 1 / 3 <= rep.spread_ratio <= 3:
            result.failures.append(f"concentration_{name} spread ratio {rep.spread_ratio:.4g} "
                                   "outside [1/3, 3]")
    write_csv(out / "concentration.csv", rows)
    result.files.append(out / "concentration.csv")
    if cfg.plots:
        _plot(result, "plot_concentration", out / "concentration.png", reports["norm"])


def _suite_moments(cfg, out, result, lines):
    depth = cfg.H
    table = verify.gaussian_moment_recursion(cfg.c_w, cfg.c_b, cfg.alpha, cfg.gamma, depth)
    mc_p, mc_q, se_p, se_q = verify.monte_carlo_moments(
        cfg.c_w, cfg.c_b, cfg.alpha, cfg.gamma, depth, samples=cfg.mc_samples, seed=cfg.seed)
    rows = []
    worst = 0.0
    for l in range(depth):
        # the table starts at layer 0; Monte Carlo starts at layer 1
        zp = abs(table.p[l + 1] - mc_p[l]) / se_p[l]
        zq = abs(table.p_pair[l + 1] - mc_q[l]) / se_q[l]
        worst = max(worst, zp, zq)
        rows.append({"layer": l + 1, "p_quad": table.p[l + 1], "p_mc": mc_p[l],
                     "p_se": se_p[l], "p_quad_err": table.err_p[l + 1],
                     "pair_quad": table.p_pair[l + 1], "pair_mc": mc_q[l],
                     "pair_se": se_q[l], "pair_quad_err": table.err_pair[l + 1]})
    write_csv(out / "moments.csv", rows)
    result.files.append(out / "moments.csv")
    lines["moments_max_standard_errors"] = worst
    if worst > 3:
        result.failures.append(f"moment_recursion differs from Monte Carlo by {worst:.3g} "
                               "standard errors")


def _rank_runs(cfg):
    """Yield (seed, params, dataset) for the verify seeds at the built architecture."""
    for s in range(cfg.seed, cfg.seed + cfg.seeds):
        ds, _ = load_datasets(cfg.replace(seed=s))
        spec = arch_for(cfg.replace(seed=s), ds)
        yield s, init_params(spec, s), ds


def _suite_rank(cfg, out, result, lines):
    rows = []
    for s, params, ds in _rank_runs(cfg):
        fm = verify.feature_matrix(params, ds.X)
        rows.append({"seed": s, "n": fm.n, "rank": fm.rank, "s_min": fm.singular_values[-1],
                     "threshold": fm.threshold, "full_rank": fm.full_rank})
        if not fm.full_rank:
            result.failures.append(f"rank_check failed at seed {s}")
    write_csv(out / "rank.csv", rows)
    result.files.append(out / "rank.csv")
    lines["rank_full_fraction"] = np.mean([r["full_rank"] for r in rows])


def _suite_witness(cfg, out, result, lines):
    rows = []
    for t in range(cfg.seeds):
        Xt = synthesize(cfg.n, cfg.m_x, cfg.m_y, "random", seed=cfg.seed + t).X
        c_gamma = verify.separation_constant(Xt)
        fm = verify.witness_construction(Xt, c_gamma, 100.0, alpha=cfg.alpha)
        margin = float(np.min(verify.dominance_margins(fm)))
        rows.append({"set": t, "c_gamma": c_gamma, "rank": fm.rank, "full_rank": fm.full_rank,
                     "min_dominance_margin": margin})
        if not fm.full_rank:
            result.failures.append(f"witness_rank failed on feature set {t}")
    write_csv(out / "witness.csv", rows)
    result.files.append(out / "witness.csv")


def _suite_lipschitz(cfg, out, result, lines):
    rows = []
    loss = LossSpec(cfg.loss)
    for s, params, ds in _rank_runs(cfg):
        ratio, bound = verify.lipschitz_probe_params(params, ds.X, ds.Y, loss, seed=s)
        ok = ratio <= bound * (1 + 1e-6)
        rows.append({"seed": s, "max_ratio": ratio, "bound": bound, "ok": ok})
        if not ok:
            result.failures.append(f"lipschitz_bound failed at seed {s}")
    write_csv(out / "lipschitz.csv", rows)
    result.files.append(out / "lipschitz.csv")


def _suite_separation(cfg, out, result, lines):
    rows = []
    for s, params, ds in _rank_runs(cfg):
        margin = verify.hidden_separation(params, ds.X)
        rows.append({"seed": s, "min_margin": margin, "separated": margin > 0})
    write_csv(out / "separation.csv", rows)
    result.files.append(out / "separation.csv")
    lines["hidden_separated_fraction"] = np.mean([r["separated"] for r in rows])


def run_verify(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = RunResult(out)
    suites = SUITES if cfg.suite == "all" else tuple(cfg.suite.split(","))
    unknown = set(suites) - set(SUITES)
    if unknown:
        raise ValueError(f"unknown suite(s) {sorted(unknown)}; choose from {SUITES} or all")
    lines = {"suites": ",".join(suites), "seed": cfg.seed}
    for name in suites:
        globals()[f"_suite_{name}"](cfg, out, result, lines)
    lines["failures"] = len(result.failures)
    write_kv(out / "verify_report.txt", lines)
    result.files.append(out / "verify_report.txt")
    result.summary = lines
    return result


# ------------------------------------------------------------------ bounds

def sample_ball(rng, d, R):
    """Uniform draw from the closed Euclidean ball of radius R in R^d."""
    v = rng.standard_normal(d)
    return R * rng.random() ** (1 / d) * v / np.linalg.norm(v)


def equal_spectrum_case(rows=6, d=4, scale=1.7, seed=0):
    """A tall matrix with all singular values equal, where AM-GM is tight."""
    Q, _ = np.linalg.qr(rng_for(seed, "equal-spectrum").standard_normal((rows, d)))
    return scale * Q


def run_bounds(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = RunResult(out)
    rows = []
    archs = [tuple(_int_list(a)) for a in cfg.archs.split(";") if a.strip()]
    radii = _float_list(cfg.radii)
    samples = cfg.trials
    for a, widths in enumerate(archs):
        ds = synthesize(cfg.n, widths[0], widths[-1], "random", seed=cfg.seed + a)
        d = param_count(widths)
        tall = ds.n * widths[-1] >= d
        for R in radii:
            rng = rng_for(cfg.seed, "bounds-ball", a, int(R * 1000))
            worst_ratio, trace_ok, amgm_ok, worst_gap = 0.0, True, True, -math.inf
            for _ in range(samples):
                theta = sample_ball(rng, d, R)
                params = Params.unflatten(theta, widths, cfg.alpha)
                observed, bound = bounds.jacobian_frobenius_bound(params, ds.X, check=False)
                worst_ratio = max(worst_ratio, observed / bound)
                trace_ok &= bounds.trace_norm_bound_holds(params, ds.X)
                if tall:
                    logvol, amgm = bounds.jacobian_log_volume(params, ds.X, check=False)
                    worst_gap = max(worst_gap, logvol - amgm)
                    amgm_ok &= logvol <= amgm + 1e-9 * max(1.0, abs(amgm))
            key = {"seed": cfg.seed, "R": R, "epsilon": "", "n": ds.n, "d": d,
                   "arch": "x".join(map(str, widths))}
            rows.append(dict(key, check="jacobian_frobenius", observed=worst_ratio, bound=1.0,
                             ok=worst_ratio <= 1.0))
            rows.append(dict(key, check="forward_trace", observed="", bound="", ok=trace_ok))
            if tall:
                rows.append(dict(key, check="amgm_log_volume", observed=worst_gap, bound=0.0,
                                 ok=amgm_ok))
    logvol, amgm = bounds.log_volume(equal_spectrum_case(seed=cfg.seed))
    rows.append({"seed": cfg.seed, "R": "", "epsilon": "", "n": "", "d": 4,
                 "arch": "equal-spectrum", "check": "amgm_equality",
                 "observed": logvol - amgm, "bound": 1e-9,
                 "ok": abs(logvol - amgm) <= 1e-9 * max(1.0, abs(amgm))})

    # capacity inequality: over-parameterized at R=1, then the d = n m_y / 2 sweep
    n, m_y, H = cfg.n, cfg.m_y, cfg.H
    for k in (2, 4, 8, 16):
        eps = 10.0 ** -k
        v = bounds.capacity_feasibility(n, n * m_y, m_y, H, eps, 1.0)
        rows.append({"seed": cfg.seed, "R": 1.0, "epsilon": eps, "n": n, "d": n * m_y,
                     "arch": "", "check": "capacity_overparameterized",
                     "observed": v.log_lhs, "bound": v.log_rhs, "ok": v.feasible})
    prev = 0.0
    for k in (2, 4, 8, 16):
        eps = 10.0 ** -k
        d = n * m_y // 2
        R = bounds.minimal_feasible_radius(n, d, m_y, H, eps)
        rows.append({"seed": cfg.seed, "R": R, "epsilon": eps, "n": n, "d": d, "arch": "",
                     "check": "capacity_min_radius", "observed": R, "bound": prev,
                     "ok": R > prev})
        prev = R

    columns = ["seed", "R", "epsilon", "n", "d", "arch", "check", "observed", "bound", "ok"]
    write_csv(out / "bounds_report.csv", rows, columns)
    result.files.append(out / "bounds_report.csv")
    for r in rows:
        if not r["ok"]:
            result.failures.append(f"{r['check']} failed for arch={r['arch'] or '-'} "
                                   f"R={fmt(r['R'])} epsilon={fmt(r['epsilon'])}")
    result.summary = {"checks": len(rows), "failures": len(result.failures)}
    return result


# -------------------------------------------------------------- experiment

TRACE_COLUMNS = ["step", "train_loss", "train_acc", "test_acc", "gap", "weight_norm",
                 "gen_bound", "margin_risk", "test_error"]


def label_noise_run(cfg):
    """Output-layer training with accuracy, weight-norm and bound tracking.

    Returns (rows, info) where rows follow ``TRACE_COLUMNS`` and accuracies
    are in percent.
    """
    train_ds, test_ds = load_datasets(cfg, need_test=True)
    spec = arch_for(cfg, train_ds)
    params = init_params(spec, cfg.seed)
    Z = features(params, train_ds.X)
    Zt = features(params, test_ds.X)
    loss = LossSpec(cfg.loss)
    fm = verify.FeatureMatrix.from_array(Z)
    info = {"widths": spec.widths, "d": param_count(spec), "n": train_ds.n,
            "n_test": test_ds.n, "rank": fm.rank, "full_rank": fm.full_rank,
            "c_z": estimate_cz(Z), "c_hat": bounds.feature_constant(Z),
            "corrupt": cfg.corrupt, "seed": cfg.seed}
    if not fm.full_rank:
        return [], info
    eta = 1.0 / (info["c_z"] * loss.zeta)
    rows = []
    prev = math.inf
    info["monotone"] = True
    for k, W, J in masked_descent(params.output_layer, Z, train_ds.Y, loss, eta):
        if J > prev * (1 + 1e-12):
            info["monotone"] = False
        prev = J
        if k % cfg.log_every == 0 or k == cfg.steps:
            F, Ft = W @ Z.T, W @ Zt.T
            train_acc = 100 * bounds.accuracy(F, train_ds.labels)
            test_acc = 100 * bounds.accuracy(Ft, test_ds.labels)
            gb = bounds.generalization_bound(W, train_ds.n, train_ds.m_y, cfg.rho,
                                             cfg.varsigma, cfg.delta_prime, info["c_hat"])
            rows.append({
                "step": k, "train_loss": J, "train_acc": train_acc, "test_acc": test_acc,
                "gap": (train_acc - test_acc) / 100, "weight_norm": gb.weight_norm,
                "gen_bound": gb.bound_value,
                "margin_risk": bounds.margin_risk(F, train_ds.labels, cfg.rho),
                "test_error": 1 - test_acc / 100,
            })
        if k >= cfg.steps:
            break
    info["final_params"] = params.with_output_layer(W)
    return rows, info


def bound_holds(row):
    """The bound must dominate test error minus the training margin risk."""
    return row["gen_bound"] >= row["test_error"] - row["margin_risk"]


def _single_experiment(cfg, out):
    out.mkdir(parents=True, exist_ok=True)
    result = RunResult(out)
    rows, info = label_noise_run(cfg)
    write_csv(out / "train_trace.csv", rows, TRACE_COLUMNS)
    result.files.append(out / "train_trace.csv")
    if not info["full_rank"]:
        result.failures.append(f"rank_check failed at seed {cfg.seed}")
    else:
        if not info["monotone"]:
            result.failures.append(f"monotone_descent failed at seed {cfg.seed}")
        final = rows[-1]
        if not bound_holds(final):
            result.failures.append(f"generalization_bound failed at seed {cfg.seed}")
        theta = info.pop("final_params").flatten()
        R = float(np.linalg.norm(theta))
        eps = final["train_loss"] * info["n"]
        v = bounds.capacity_feasibility(info["n"], info["d"], info["widths"][-1], cfg.H,
                                        max(eps, 1e-300), R)
        write_csv(out / "bounds_report.csv", [{
            "seed": cfg.seed, "R": R, "epsilon": eps, "n": info["n"], "d": info["d"],
            "log_lhs": v.log_lhs, "log_rhs": v.log_rhs, "feasible": v.feasible,
            "weight_norm": final["weight_norm"], "c_hat": info["c_hat"],
            "gen_bound": final["gen_bound"], "margin_risk": final["margin_risk"],
            "test_error": final["test_error"], "bound_holds": bound_holds(final),
        }])
        result.files.append(out / "bounds_report.csv")
        info.update(final_train_acc=final["train_acc"], final_test_acc=final["test_acc"],
                    steps=final["step"])
    info.pop("final_params", None)
    info["failures"] = len(result.failures)
    write_kv(out / "verify_report.txt", info)
    (out / "config.txt").write_text(cfg.to_text())
    result.files += [out / "verify_report.txt", out / "config.txt"]
    result.summary = info
    if cfg.plots and rows:
        _plot(result, "plot_training", out / "training.png", rows, f"seed {cfg.seed}")
    return result


def run_experiment(cfg):
    """Dispatch on the subcommand; ``experiment`` runs one label-noise run, or a
    natural/corrupted pair with ``paired``."""
    out = Path(cfg.output_dir)
    if cfg.subcommand == "build":
        return run_build(cfg)
    if cfg.subcommand == "train":
        return run_train(cfg)
    if cfg.subcommand == "verify":
        return run_verify(cfg)
    if cfg.subcommand == "bounds":
        return run_bounds(cfg)
    if cfg.subcommand == "compare":
        return emit_figure2_tables(cfg.natural_dir, cfg.corrupted_dir, out, plots=cfg.plots)
    if not cfg.paired:
        return _single_experiment(cfg, out)
    p = cfg.corrupt or 0.5
    nat = _single_experiment(cfg.replace(corrupt=0.0), out / "natural")
    cor = _single_experiment(cfg.replace(corrupt=p), out / "corrupted")
    cmp_ = emit_figure2_tables(out / "natural", out / "corrupted", out, plots=cfg.plots,
                               m_y=cfg.m_y)
    result = RunResult(out, nat.failures + cor.failures + cmp_.failures,
                       nat.files + cor.files + cmp_.files, cmp_.summary)
    return result


# ----------------------------------------------------------------- compare

def first_at_accuracy(rows, level=99.0):
    for row in rows:
        if row["train_acc"] >= level:
            return row
    return None


def emit_figure2_tables(natural_dir, corrupted_dir, out_dir=None, *, plots=True, m_y=None,
                        level=99.0):
    """Align two experiment traces and check the natural vs corrupted orderings.

    Writes figure2_table.csv (per logged step, both runs) and
    figure2_summary.txt.  Mismatched lengths are aligned on the shorter
    prefix with a warning.
    """
    natural_dir, corrupted_dir = Path(natural_dir), Path(corrupted_dir)
    out = Path(out_dir) if out_dir is not None else corrupted_dir.parent
    out.mkdir(parents=True, exist_ok=True)
    result = RunResult(out)
    nat = read_csv(natural_dir / "train_trace.csv")
    cor = read_csv(corrupted_dir / "train_trace.csv")
    if len(nat) != len(cor):
        warnings.warn(f"runs logged {len(nat)} and {len(cor)} rows; aligning on the first "
                      f"{min(len(nat), len(cor))}", stacklevel=2)
    length = min(len(nat), len(cor))
    table = []
    for a, b in zip(nat[:length], cor[:length]):
        if a["step"] != b["step"]:
            raise ValueError(f"logged steps differ: {a['step']} vs {b['step']}")
        row = {"step": a["step"]}
        for tag, r in (("natural", a), ("corrupted", b)):
            row[f"{tag}_train_acc"] = r["train_acc"]
            row[f"{tag}_test_acc"] = r["test_acc"]
            row[f"{tag}_gap"] = (r["train_acc"] - r["test_acc"]) / 100
            row[f"{tag}_weight_norm"] = r["weight_norm"]
            row[f"{tag}_gen_bound"] = r["gen_bound"]
        row["gap_difference"] = row["corrupted_gap"] - row["natural_gap"]
        table.append(row)
    write_csv(out / "figure2_table.csv", table)
    result.files.append(out / "figure2_table.csv")

    if m_y is None:
        m_y = int(_read_info(natural_dir).get("m_y", 0)) or None
    summary = {"rows": length}
    if length:
        summary["natural_final_test_acc"] = nat[length - 1]["test_acc"]
        summary["corrupted_final_test_acc"] = cor[length - 1]["test_acc"]
    a, b = first_at_accuracy(nat[:length], level), first_at_accuracy(cor[:length], level)
    if a is None or b is None:
        result.failures.append(f"matched_train_accuracy failed: a run never reached {level}%")
    else:
        summary.update(natural_matched_step=a["step"], corrupted_matched_step=b["step"],
                       natural_matched_weight_norm=a["weight_norm"],
                       corrupted_matched_weight_norm=b["weight_norm"],
                       natural_matched_gen_bound=a["gen_bound"],
                       corrupted_matched_gen_bound=b["gen_bound"])
        if not b["weight_norm"] > a["weight_norm"]:
            result.failures.append("weight_norm_ordering failed at matched train accuracy")
        if not b["gen_bound"] > a["gen_bound"]:
            result.failures.append("gen_bound_ordering failed at matched train accuracy")
    if m_y and length:
        chance = 100.0 / m_y
        summary["chance_acc"] = chance
        if summary["natural_final_test_acc"] < 80:
            result.failures.append("natural_test_accuracy below 80%")
        if abs(summary["corrupted_final_test_acc"] - chance) > 15:
            result.failures.append("corrupted_test_accuracy not within 15 points of chance")
    summary["failures"] = len(result.failures)
    write_kv(out / "figure2_summary.txt", summary)
    result.files.append(out / "figure2_summary.txt")
    result.summary = summary
    if plots and length:
        _plot(result, "plot_figure2", out / "figure2.png", table)
    return result


def _read_info(run_dir):
    path = Path(run_dir) / "config.txt"
    if not path.exists():
        return {}
    return RunConfig.read_file(path)
