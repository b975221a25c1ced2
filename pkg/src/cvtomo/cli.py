"""Command-line entry points: simulate | infer | analyze | calibrate.

Every command reads an optional JSON config file; CLI flags override config
values. The fully resolved configuration (including the seed) is echoed into
``run_config.json`` in the output directory and embedded in the outputs'
metadata, so any artifact can be regenerated from its own config. All
randomness flows from a single seed per command; chains get sub-seeds
derived from (seed, chain index).

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .analyze import (
    cat_report,
    expected_coherent_alpha,
    expected_thermal_mu,
    fidelity_curve,
    write_fidelity_csv,
)
from .calibrate import (
    CalibrationRecord,
    fit_shot_noise,
    ingest_trace,
    load_trace,
    noise_ratio,
    shot_noise_stats,
)
from .fock import load_density, make_state, save_density, wigner
from .measurement import MeasurementConfig, QuadratureDataset
from .sampler import (
    PosteriorEnsemble,
    SamplerConfig,
    bayesian_mean,
    convergence_report,
    pool_ensembles,
    run_chain,
    write_diagnostics_csv,
)
from .simulate import SimConfig, simulate_dataset, spec_from_json
from . import plots

__all__ = ["main"]

SCHEMES = {"hom": "homodyne", "het": "heterodyne"}


class ConfigError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvtomo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, sampler=False):
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--eta", type=float)
        p.add_argument("--nc", type=int, help="photon cutoff")
        p.add_argument("--out", type=Path, help="output directory")
        if sampler:
            p.add_argument("--R", type=int, help="retained samples")
            p.add_argument("--T", type=int, help="thinning stride")
            p.add_argument("--beta", type=str, help="pCN step size or 'adaptive'")
            p.add_argument("--burn-in", dest="burn_in", type=int)
            p.add_argument("--chains", type=int)

    p_sim = sub.add_parser("simulate", help="draw a synthetic quadrature dataset")
    common(p_sim)
    p_sim.add_argument("--scheme", choices=sorted(SCHEMES))
    p_sim.add_argument("--K", type=int, help="number of records")

    p_inf = sub.add_parser("infer", help="sample the posterior for a dataset")
    common(p_inf, sampler=True)
    p_inf.add_argument("dataset", type=Path, help="dataset CSV (with JSON sidecar)")
    p_inf.add_argument("--scheme", choices=sorted(SCHEMES), help="expected dataset scheme")

    p_ana = sub.add_parser("analyze", help="reports from ensembles, states, datasets")
    common(p_ana)
    p_ana.add_argument("inputs", nargs="+", type=Path)
    p_ana.add_argument("--wigner", action="store_true")
    p_ana.add_argument("--fidelity-curve", dest="fidelity_curve", action="store_true")
    p_ana.add_argument("--cat", choices=("even", "odd"))
    p_ana.add_argument("--no-figures", dest="figures", action="store_false")

    p_cal = sub.add_parser("calibrate", help="raw traces to calibration + dataset")
    common(p_cal)
    p_cal.add_argument("traces", nargs="*", type=Path, help="extra vacuum trace headers")

    return parser


def _resolve(args: argparse.Namespace, keys: list[str]) -> dict:
    cfg: dict = {}
    if args.config is not None:
        if not args.config.exists():
            raise ConfigError(f"config file {args.config} not found")
        with open(args.config) as fh:
            cfg = json.load(fh)
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if "scheme" in cfg:
        cfg["scheme"] = SCHEMES.get(cfg["scheme"], cfg["scheme"])
    if "out" not in cfg or cfg["out"] is None:
        raise ConfigError("missing output directory (--out or config 'out')")
    cfg["out"] = str(cfg["out"])
    return cfg


def _require(cfg: dict, *keys: str) -> None:
    for key in keys:
        if key not in cfg or cfg[key] is None:
            raise ConfigError(f"missing required config value {key!r}")


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _portable(cfg: dict) -> dict:
    """Config echo for embedding in data artifacts: canonical key order and
    no path-valued keys, so reruns are byte-comparable across directories."""
    return {k: cfg[k] for k in sorted(cfg) if k not in ("config", "out", "command")}


def _write_run_config(out: Path, command: str, cfg: dict) -> None:
    obj = {"command": command}
    obj.update({k: v for k, v in cfg.items() if k != "config"})
    with open(out / "run_config.json", "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _derive_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence([base, index]).generate_state(1, np.uint64)[0])


def cmd_simulate(args) -> int:
    cfg = _resolve(args, ["seed", "eta", "nc", "out", "scheme", "K"])
    _require(cfg, "state", "scheme", "K", "nc", "seed")
    out = _outdir(cfg)
    sim = SimConfig(
        spec=spec_from_json(cfg["state"]),
        scheme=cfg["scheme"],
        records=int(cfg["K"]),
        n_c=int(cfg["nc"]),
        eta=float(cfg.get("eta", 1.0)),
        grid_resolution=float(cfg.get("grid_resolution", 0.07)),
        grid_halfwidth=cfg.get("grid_halfwidth"),
        seed=int(cfg["seed"]),
    )
    data = simulate_dataset(sim)
    data.metadata["run_config"] = _portable(cfg)
    data.save(out / "dataset.csv")
    _write_run_config(out, "simulate", cfg)
    print(f"wrote {out / 'dataset.csv'} ({len(data)} records)")
    return 0


def _run_one_chain(payload):
    data_csv, eta, n_c, s_cfg_kwargs, checkpoint = payload
    data = QuadratureDataset.load(data_csv)
    ens = run_chain(
        data,
        MeasurementConfig(eta=eta, n_c=n_c),
        SamplerConfig(**s_cfg_kwargs),
        checkpoint_path=checkpoint,
    )
    return ens


def cmd_infer(args) -> int:
    cfg = _resolve(
        args, ["seed", "eta", "nc", "out", "scheme", "R", "T", "beta", "burn_in", "chains"]
    )
    _require(cfg, "nc", "R", "T", "seed")
    dataset_path = Path(args.dataset)
    if not dataset_path.exists():
        raise ConfigError(f"dataset {dataset_path} not found")
    data = QuadratureDataset.load(dataset_path)
    if cfg.get("scheme") and data.scheme != cfg["scheme"]:
        raise ConfigError(
            f"dataset scheme {data.scheme!r} disagrees with configured {cfg['scheme']!r}"
        )
    out = _outdir(cfg)
    beta = cfg.get("beta", "adaptive")
    if isinstance(beta, str) and beta != "adaptive":
        beta = float(beta)
    n_chains = int(cfg.get("chains", 1))
    eta = float(cfg.get("eta", 1.0))
    n_c = int(cfg["nc"])

    payloads = []
    for i in range(n_chains):
        s_kwargs = {
            "samples": int(cfg["R"]),
            "thin": int(cfg["T"]),
            "burn_in": cfg.get("burn_in"),
            "beta": beta,
            "seed": _derive_seed(int(cfg["seed"]), i) if n_chains > 1 else int(cfg["seed"]),
            "checkpoint_every": int(cfg.get("checkpoint_every", 2**16)),
        }
        payloads.append(
            (dataset_path, eta, n_c, s_kwargs, out / f"checkpoint_chain{i}.json")
        )
    workers = min(n_chains, os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chains = list(pool.map(_run_one_chain, payloads))
    else:
        chains = [_run_one_chain(p) for p in payloads]

    reference = None
    if cfg.get("reference_state") is not None:
        reference = make_state(spec_from_json(cfg["reference_state"]), n_c)
    for i, ens in enumerate(chains):
        rep = convergence_report(ens, reference=reference)
        write_diagnostics_csv(ens, rep, out / f"diagnostics_chain{i}.csv")
        steps = [int(ens.config["burn_in"]) + (r + 1) * int(ens.config["thin"]) for r in range(len(ens))]
        acc = [ens.accept_counts[r] / ((r + 1) * int(ens.config["thin"])) for r in range(len(ens))]
        plots.render_diagnostics(
            steps, acc, ens.log_likelihoods, rep.running_mean, rep.running_std,
            out / f"diagnostics_chain{i}.png",
        )
    pooled = pool_ensembles(chains)
    pooled.config["run_config"] = _portable(cfg)
    pooled.save_jsonl(out / "ensemble.jsonl")
    rho_b = bayesian_mean(pooled)
    save_density(rho_b, out / "rho_mean.json", extra={"kind": "bayesian-mean"})
    _write_run_config(out, "infer", cfg)
    print(
        f"wrote {out / 'ensemble.jsonl'} ({len(pooled)} samples, "
        f"acceptance {pooled.acceptance_rate:.3f})"
    )
    return 0


def _load_ensemble_inputs(paths) -> list[PosteriorEnsemble]:
    out = []
    for p in paths:
        if str(p).endswith(".jsonl"):
            out.append(PosteriorEnsemble.load_jsonl(p))
    return out


def cmd_analyze(args) -> int:
    cfg = _resolve(args, ["seed", "eta", "nc", "out"])
    out = _outdir(cfg)
    inputs = [Path(p) for p in args.inputs]
    for p in inputs:
        if not p.exists():
            raise ConfigError(f"input {p} not found")
    wrote = []

    ensembles = _load_ensemble_inputs(inputs)
    datasets = [QuadratureDataset.load(p) for p in inputs if p.suffix == ".csv"]
    states = []
    for p in inputs:
        if p.suffix == ".json":
            with open(p) as fh:
                obj = json.load(fh)
            if "dim" in obj and "re" in obj:
                states.append(load_density(p))

    if args.cat:
        if not ensembles:
            raise ConfigError("--cat needs an ensemble JSONL input")
        fit = cat_report(ensembles[0], args.cat, alpha_max=float(cfg.get("alpha_max", 4.0)))
        fit.save(out / "cat_fit.json", extra={"run_config": _portable(cfg)})
        wrote.append(out / "cat_fit.json")
        if args.figures:
            plots.render_cat_fit(np.abs(fit.alphas), fit.fids, out / "cat_fit.png")
            wrote.append(out / "cat_fit.png")

    if args.fidelity_curve:
        if not ensembles:
            raise ConfigError("--fidelity-curve needs ensemble JSONL inputs")
        _require(cfg, "state", "nc")
        truth = make_state(spec_from_json(cfg["state"]), int(cfg["nc"]))
        by_k = {}
        for ens in ensembles:
            k = int(ens.config.get("records", len(ens)))
            by_k[k] = ens
        rows = fidelity_curve(by_k, truth)
        write_fidelity_csv(rows, out / "fidelity_curve.csv")
        wrote.append(out / "fidelity_curve.csv")
        if args.figures:
            plots.render_fidelity_curve(rows, out / "fidelity_curve.png")
            wrote.append(out / "fidelity_curve.png")

    if args.wigner:
        rho = None
        if states:
            rho = states[0]
        elif ensembles:
            rho = bayesian_mean(ensembles[0])
        if rho is None:
            raise ConfigError("--wigner needs a density-matrix JSON or ensemble input")
        half = float(cfg.get("wigner_halfwidth", 5.0))
        res = float(cfg.get("wigner_resolution", 0.05))
        n_pts = int(round(2 * half / res)) + 1
        grid = wigner(rho, -half, half, -half, half, n_pts, n_pts)
        grid.to_csv(out / "wigner.csv")
        wrote.append(out / "wigner.csv")
        if args.figures:
            plots.render_wigner(grid, out / "wigner.png")
            wrote.append(out / "wigner.png")

    het = [d for d in datasets if d.scheme == "heterodyne"]
    if het:
        bench = {
            "alpha0": {
                "re": expected_coherent_alpha(het[0]).real,
                "im": expected_coherent_alpha(het[0]).imag,
            },
            "mu0": expected_thermal_mu(het[0]),
            "records": len(het[0]),
        }
        with open(out / "benchmarks.json", "w") as fh:
            json.dump(bench, fh, indent=1)
            fh.write("\n")
        wrote.append(out / "benchmarks.json")

    if not wrote:
        raise ConfigError("nothing to do: pass --wigner, --fidelity-curve, --cat, or a dataset")
    _write_run_config(out, "analyze", cfg)
    for p in wrote:
        print(f"wrote {p}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _resolve(args, ["seed", "eta", "nc", "out"])
    _require(cfg, "vacuum_traces", "signal_trace", "lo_power_mw")
    out = _outdir(cfg)
    entries = list(cfg["vacuum_traces"])
    for extra in args.traces:
        entries.append({"path": str(extra), "lo_power_mw": None})

    records = []
    for entry in entries:
        trace = load_trace(entry["path"])
        stats = shot_noise_stats(trace)
        if entry.get("lo_power_mw") is None:
            raise ConfigError(f"vacuum trace {entry['path']} has no lo_power_mw")
        records.append(
            CalibrationRecord(
                lo_power_mw=float(entry["lo_power_mw"]),
                sn_mean=(stats[0][0], stats[1][0]),
                sn_var=(stats[0][1], stats[1][1]),
            )
        )
    operating = float(cfg["lo_power_mw"])
    match = [r for r in records if r.lo_power_mw == operating]
    if not match:
        raise ConfigError(f"no vacuum trace at the operating power {operating} mW")
    record = match[0]
    if len(records) >= 2:
        record.fit = fit_shot_noise(records)
    if cfg.get("electronics_trace"):
        etrace = load_trace(cfg["electronics_trace"])
        estats = shot_noise_stats(etrace)
        record.electronics_var = (estats[0][1], estats[1][1])

    signal = load_trace(cfg["signal_trace"])
    if signal.sync_edges.size < 2:
        raise ConfigError("signal trace carries no usable sync markers")
    data = ingest_trace(signal, record)
    data.metadata["run_config"] = _portable(cfg)
    data.save(out / "dataset.csv")

    obj = record.to_json()
    obj["all_powers"] = [r.to_json() for r in records]
    if record.electronics_var is not None:
        obj["noise_ratio"] = list(noise_ratio(record))
    obj["run_config"] = _portable(cfg)
    with open(out / "calibration.json", "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")
    _write_run_config(out, "calibrate", cfg)
    print(f"wrote {out / 'calibration.json'} and {out / 'dataset.csv'} ({len(data)} records)")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "infer": cmd_infer,
    "analyze": cmd_analyze,
    "calibrate": cmd_calibrate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
