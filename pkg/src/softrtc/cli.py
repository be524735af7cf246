"""softrtc command line: gen-data, train, eval, sweep, bench.

Every command reads one YAML config. Outputs land in the config's out_dir (or
--out) and embed the resolved config plus sha256 digests of their inputs.

Exit codes: 0 ok, 2 config error, 3 missing input, 4 numerical divergence.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
import zlib
from pathlib import Path

import numpy as np

from softrtc import bench, config, envs, executor
from softrtc import model as mdl
from softrtc.experiments import aggregate
from softrtc.infer import SolverConfig
from softrtc.training import TrainConfig, train
from softrtc.weights import Schedule

log = logging.getLogger("softrtc")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_DIVERGED = 0, 2, 3, 4


class MissingInput(FileNotFoundError):
    pass


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise MissingInput(f"{what} not found: {path} (run the producing command first)")
    return path


def _provenance(cfg: config.ExperimentConfig, inputs: dict) -> dict:
    return {"config": cfg.to_dict(), "inputs_sha256": inputs}


def write_csv(path, columns, rows, provenance: dict) -> None:
    buf = io.StringIO()
    for key, value in provenance.items():
        buf.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: r[c] for c in columns})
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def dataset_path(out: Path, task: str) -> Path:
    return out / f"dataset_{task}.jsonl"


def task_seed(master: int, task: str) -> int:
    return int(np.random.SeedSequence([master, zlib.crc32(task.encode())]).generate_state(1)[0])


# --- commands --------------------------------------------------------------

def cmd_gen_data(cfg, out: Path, args) -> None:
    for task in cfg.env.tasks:
        spec = config.env_spec(cfg, task)
        ds = envs.generate_demos(spec, cfg.data.episodes, cfg.model.horizon, task_seed(cfg.seed, task),
                                 config.expert_config(cfg, task))
        path = dataset_path(out, task)
        envs.save_dataset(path, ds, extra=_provenance(cfg, {}))
        log.info("wrote %s (%d pairs)", path, len(ds))


def _load_training_data(cfg, out: Path):
    inputs, obs, chunks = {}, [], []
    for task in cfg.env.tasks:
        path = _require_file(dataset_path(out, task), "dataset")
        ds = envs.load_dataset(path)
        if ds.horizon != cfg.model.horizon:
            raise config.ConfigError(f"model.horizon: {cfg.model.horizon} != dataset horizon {ds.horizon} in {path}")
        inputs[path.name] = file_digest(path)
        obs.append(ds.obs)
        chunks.append(ds.chunks)
    ds = envs.Dataset(np.concatenate(obs), np.concatenate(chunks), np.zeros(0), np.zeros(0), {})
    return ds, inputs


def _initial_params(cfg, out: Path, inputs: dict) -> mdl.ModelParams:
    if cfg.train.init:
        path = _require_file(_resolve(out, cfg.train.init), "initial checkpoint")
        params, _ = mdl.load_checkpoint(path)
        inputs["init:" + path.name] = file_digest(path)
        return params
    mc = mdl.ModelConfig(obs_dim=envs.obs_dim(cfg.model.horizon), horizon=cfg.model.horizon,
                         action_dim=cfg.model.action_dim, hidden=tuple(cfg.model.hidden), seed=cfg.seed)
    return mdl.init_model(mc)


def _resolve(out: Path, p: str) -> Path:
    p = Path(p)
    return p if p.is_absolute() or p.exists() else out / p


def _train(cfg, out: Path, window: config.WindowSection):
    ds, inputs = _load_training_data(cfg, out)
    init = _initial_params(cfg, out, inputs)
    t = cfg.train
    tc = TrainConfig(epochs=t.epochs, batch_size=t.batch_size, lr=t.lr, d_max=t.d_max, eps_denom=t.eps_denom,
                     rule=config.window_rule(window), schedule=Schedule(window.schedule), seed=cfg.seed)
    return train(ds, tc, init), inputs


def cmd_train(cfg, out: Path, args) -> None:
    result, inputs = _train(cfg, out, cfg.window)
    mdl.save_checkpoint(out / "checkpoint.json", result.params, meta=_provenance(cfg, inputs))
    write_csv(out / "loss_curve.csv", ("step", "loss"),
              [{"step": s, "loss": loss} for s, loss in result.loss_curve], _provenance(cfg, inputs))
    log.info("trained %d steps, final epoch loss %.5f", len(result.loss_curve),
             result.epoch_losses[-1] if result.epoch_losses else float("nan"))


def _checkpoint(cfg, out: Path):
    path = _require_file(_resolve(out, cfg.eval.checkpoint) if cfg.eval.checkpoint else out / "checkpoint.json",
                         "checkpoint")
    params, _ = mdl.load_checkpoint(path)
    if params.config.horizon != cfg.model.horizon:
        raise config.ConfigError(f"model.horizon: {cfg.model.horizon} != checkpoint horizon {params.config.horizon}")
    return params, {path.name: file_digest(path)}


def _eval_rows(cfg, params, window, workers):
    method = executor.Method(cfg.name, params, cfg.execution.mode, config.window_rule(window),
                             Schedule(window.schedule))
    specs = [config.env_spec(cfg, t) for t in cfg.env.tasks]
    return executor.evaluate(method, specs, cfg.eval.delays, cfg.eval.episodes, cfg.model.horizon,
                             cfg.execution.s, SolverConfig(steps=cfg.solver.steps), cfg.seed, workers)


FRONTIER_COLUMNS = ("label", "task", "delay", "episodes", "solve", "return", "action_delta", "action_jerk",
                    "boundary_jump")


def _write_frontier(path, rows, label_key, prov) -> None:
    cells = aggregate(rows, keys=(label_key, "task", "delay"))
    for c in cells:
        c["label"] = c.pop(label_key)
    write_csv(path, FRONTIER_COLUMNS, cells, prov)


def cmd_eval(cfg, out: Path, args) -> None:
    params, inputs = _checkpoint(cfg, out)
    rows = _eval_rows(cfg, params, cfg.window, args.workers)
    prov = _provenance(cfg, inputs)
    write_csv(out / "results.csv", executor.RESULT_COLUMNS, rows, prov)
    if args.plot:
        _write_frontier(out / "frontier.csv", rows, "method", prov)
    log.info("wrote %d result rows", len(rows))


def cmd_sweep(cfg, out: Path, args) -> None:
    axis = cfg.sweep.axis
    all_rows, inputs = [], {}
    if not cfg.sweep.retrain:
        params, inputs = _checkpoint(cfg, out)
    for value in cfg.sweep.values:
        window = config.sweep_window(cfg.window, axis, value)
        if cfg.sweep.retrain:
            result, inputs = _train(cfg, out, window)
            params = result.params
        for r in _eval_rows(cfg, params, window, args.workers):
            all_rows.append({"axis": f"{axis}={value}", **r})
        log.info("sweep %s=%s done", axis, value)
    prov = _provenance(cfg, inputs)
    write_csv(out / "sweep.csv", ("axis",) + executor.RESULT_COLUMNS, all_rows, prov)
    if args.plot:
        _write_frontier(out / "frontier.csv", all_rows, "axis", prov)


def cmd_bench(cfg, out: Path, args) -> None:
    params, inputs = _checkpoint(cfg, out)
    b = cfg.bench
    results = bench.run_bench(params, batches=tuple(b.batch_sizes), warmup=b.warmup, iters=b.iters,
                              steps=cfg.solver.steps, s=cfg.execution.s, d=b.delay)
    bench.write_report(out / "bench.json", results, extra=_provenance(cfg, inputs))
    for r in results:
        log.info("%-5s batch %3d median %.1f us  ratio %.3f  evals %d", r.method, r.batch, r.median * 1e6,
                 r.ratio_vs_naive, r.model_evals)


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softrtc", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", type=Path, default=None, help="override the output directory")
        p.add_argument("--workers", type=int, default=int(os.environ.get("SOFTRTC_WORKERS", "1")),
                       help="rollout worker processes (default: $SOFTRTC_WORKERS or 1)")
        p.add_argument("--plot", action="store_true", help="also write frontier.csv (solve vs jerk per method)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if not args.config.is_file():
            raise config.ConfigError(f"config file not found: {args.config}")
        cfg = config.load(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out_dir"] = str(args.out)
        if overrides:
            cfg = dataclasses.replace(cfg, **overrides)
        if args.workers < 1:
            raise config.ConfigError("--workers: must be >= 1")
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out, args)
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingInput as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FloatingPointError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
