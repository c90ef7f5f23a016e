"""``softs train | evaluate | forecast | bench``."""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from .bench import run_bench
from .data import ForecastData, SplitSpec, load_csv, write_csv
from .exceptions import ConfigError, DataFormatError, ShapeError, SoftsError
from .model import ModelConfig, SoftsModel
from .star import PoolingKind
from .train import TrainConfig, evaluate, fit

log = logging.getLogger("softs")

EVAL_BATCH = 256


@dataclass
class RunConfig:
    data: str | None = None
    out: str | None = None
    lookback: int = 96
    horizon: int = 96
    channels: int | None = None
    hidden: int = 256
    core: int = 64
    layers: int = 2
    pooling: str = "stochastic"
    use_revin: bool = True
    baseline: bool = False
    seed: int = 0
    learning_rate: float = 3e-4
    epochs: int = 10
    batch_size: int = 32
    patience: int = 3
    split: dict | None = None

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**raw)

    def override(self, ns: argparse.Namespace) -> "RunConfig":
        updates = {}
        for f in dataclasses.fields(self):
            value = getattr(ns, f.name, None)
            if value is not None:
                updates[f.name] = value
        if getattr(ns, "split_counts", None) is not None:
            updates["split"] = {"counts": ns.split_counts}
        if getattr(ns, "split_ratios", None) is not None:
            updates["split"] = {"ratios": ns.split_ratios}
        return dataclasses.replace(self, **updates)

    def split_spec(self) -> SplitSpec:
        if self.split is None:
            return SplitSpec.for_dataset(self.data or "")
        if set(self.split) - {"counts", "ratios"} or len(self.split) != 1:
            raise ConfigError('split must be {"counts": [a, b, c]} or {"ratios": [a, b, c]}')
        values = next(iter(self.split.values()))
        if len(values) != 3:
            raise ConfigError("split needs exactly three values (train, val, test)")
        return SplitSpec.from_dict(self.split)

    def model_config(self, channels: int) -> ModelConfig:
        return ModelConfig(
            lookback=self.lookback,
            horizon=self.horizon,
            channels=channels,
            hidden=self.hidden,
            core=self.core,
            layers=self.layers,
            pooling=self.pooling,
            use_revin=self.use_revin,
            baseline=self.baseline,
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            patience=self.patience,
            seed=self.seed,
        )


def _triple(cast):
    def parse(text: str):
        parts = [p for p in text.replace(",", " ").split() if p]
        if len(parts) != 3:
            raise argparse.ArgumentTypeError("expected three comma-separated values")
        return [cast(p) for p in parts]

    return parse


def _int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of integers: {text!r}") from None


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--data", help="input CSV (date column + one column per channel)")
    p.add_argument("--out", help="output path")
    p.add_argument("--seed", type=int)
    p.add_argument("--lookback", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--core", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--pooling", choices=[k.value for k in PoolingKind])
    p.add_argument("--no-revin", dest="use_revin", action="store_const", const=False)
    p.add_argument("--baseline", action="store_const", const=True)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--patience", type=int)
    _split_flags(p)


def _split_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--split-counts", type=_triple(int), metavar="TRAIN,VAL,TEST")
    g.add_argument("--split-ratios", type=_triple(float), metavar="TRAIN,VAL,TEST")


def cmd_train(args) -> int:
    cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
    cfg = cfg.override(args)
    if not cfg.data:
        raise ConfigError("no dataset given (--data or config key 'data')")
    if not cfg.out:
        raise ConfigError("no output path given (--out or config key 'out')")
    raw = load_csv(cfg.data)
    if cfg.channels is not None and cfg.channels != raw.n_channels:
        raise ShapeError(f"config expects {cfg.channels} channels, {cfg.data} has {raw.n_channels}")
    spec = cfg.split_spec()
    data = ForecastData.from_raw(raw, spec, cfg.lookback, cfg.horizon)
    model = SoftsModel(cfg.model_config(raw.n_channels))
    tcfg = cfg.train_config()
    model, history = fit(model, data, tcfg)
    val_mse, val_mae = evaluate(model, data, "val", EVAL_BATCH)
    extra = {
        "data": {
            "channel_names": data.channel_names,
            "mean": [float(v) for v in data.scaler.mean_],
            "std": [float(v) for v in data.scaler.scale_],
            "split": spec.to_dict(),
        },
        "train": tcfg.to_dict(),
        "best_val_mse": val_mse,
        "best_val_mae": val_mae,
        "epochs_run": len(history),
    }
    out = Path(cfg.out)
    hist_path = out.with_name(out.stem + ".history.jsonl")
    lines = "".join(json.dumps(r, sort_keys=True) + "\n" for r in history.records)
    checkpoint.atomic_write(hist_path, lines)
    checkpoint.save(out, model, extra)
    _emit(
        {
            "checkpoint": str(out),
            "history": str(hist_path),
            "val_mse": val_mse,
            "val_mae": val_mae,
            "epochs_run": len(history),
        }
    )
    return 0


def _load_for_data(args):
    model, manifest = checkpoint.load(args.checkpoint)
    raw = load_csv(args.data)
    cfg = model.config
    if raw.n_channels != cfg.channels:
        raise ShapeError(
            f"checkpoint was trained on {cfg.channels} channels, {args.data} has {raw.n_channels}"
        )
    return model, manifest, raw


def cmd_evaluate(args) -> int:
    model, manifest, raw = _load_for_data(args)
    cfg = model.config
    if args.split_counts is not None:
        spec = SplitSpec(counts=tuple(args.split_counts), ratios=None)
    elif args.split_ratios is not None:
        spec = SplitSpec(ratios=tuple(args.split_ratios))
    else:
        stored = manifest.get("extra", {}).get("data", {}).get("split")
        spec = SplitSpec.from_dict(stored) if stored else SplitSpec.for_dataset(args.data)
    data = ForecastData.from_raw(raw, spec, cfg.lookback, cfg.horizon)
    mse, mae = evaluate(model, data, args.split, args.batch_size)
    _emit({"mse": mse, "mae": mae, "windows": data.n_windows(args.split), "horizon": cfg.horizon, "split": args.split})
    return 0


def cmd_forecast(args) -> int:
    model, manifest, raw = _load_for_data(args)
    cfg = model.config
    if raw.n_steps < cfg.lookback:
        raise DataFormatError(f"{args.data} has {raw.n_steps} rows, forecasting needs at least {cfg.lookback}")
    stats = manifest.get("extra", {}).get("data")
    if stats:
        mean = np.asarray(stats["mean"])
        std = np.asarray(stats["std"])
    else:
        mean = np.zeros(cfg.channels)
        std = np.ones(cfg.channels)
    window = (raw.values[-cfg.lookback :] - mean) / std
    pred = model.forward(window[None], training=False)[0].astype(np.float64)
    if not args.standardized:
        pred = pred * std + mean
    stamps = [f"+{i + 1}" for i in range(cfg.horizon)]
    if args.out:
        buf = io.StringIO()
        write_csv(buf, pred, raw.channel_names, stamps)
        checkpoint.atomic_write(args.out, buf.getvalue())
    else:
        write_csv(sys.stdout, pred, raw.channel_names, stamps)
    return 0


def cmd_bench(args) -> int:
    if args.threads:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(args.threads)
    else:
        limiter = None
    try:
        result = run_bench(
            args.channels,
            repeat=args.repeat,
            batch=args.batch,
            lookback=args.lookback,
            horizon=args.horizon,
            hidden=args.hidden,
            core=args.core,
            layers=args.layers,
            seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    finally:
        if limiter is not None:
            limiter.unregister()
    text = json.dumps(result, sort_keys=True, indent=2) + "\n"
    if args.out:
        checkpoint.atomic_write(args.out, text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softs", description="STAR-based multivariate forecaster")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model and write a checkpoint")
    _model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="MSE/MAE of a checkpoint on a split, in standardised space")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--batch-size", type=int, default=EVAL_BATCH)
    _split_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("forecast", help="predict the next horizon from the last lookback window")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--last-window", action="store_true", help="forecast from the final window (default)")
    units = p.add_mutually_exclusive_group()
    units.add_argument("--raw-units", dest="standardized", action="store_false", help="emit raw units (default)")
    units.add_argument("--standardized", action="store_true", help="emit standardised values instead")
    p.set_defaults(standardized=False)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("bench", help="time forward+backward against channel count")
    p.add_argument("--channels", type=_int_list, default=[64, 128, 256, 512, 1024])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lookback", type=int, default=96)
    p.add_argument("--horizon", type=int, default=720)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--core", type=int, default=128)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=0, help="cap BLAS threads (0 = leave as is)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except SoftsError as exc:
        msg = str(exc).replace("\n", " ")
        sys.stderr.write(f"error {exc.code}: {msg}\n")
        return 2
    except (TypeError, ValueError) as exc:
        sys.stderr.write(f"error E_CONFIG: {str(exc).splitlines()[0]}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"error E_IO: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
