"""Command-line front end.

Every subcommand takes an optional --config JSON file whose keys are the
same knobs as the flags; explicit flags win over the file, the file wins
over built-in defaults, and unknown config keys are an error. Next to each
output the tool drops a ``<out>.run.json`` sidecar recording the subcommand
and the fully resolved config, and a sidecar is itself accepted by
--config, which reruns the recorded settings.

Exit codes: 0 success, 1 usage error, 2 invalid input or config,
3 numerical failure (singular gradient, divergence, failed check).
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from typing import Sequence

from fbsplab.bank import (
    dft_kernel,
    fbsp_kernel,
    frequency_response,
    init_params,
    load_params,
    response_to_csv,
    save_params,
)
from fbsplab.gradients import SingularGradientError, gradient_check_report
from fbsplab.perturb import (
    DEFAULT_SNR_AXIS,
    add_awgn,
    apply_filter,
    design_butterworth_lowpass,
    robustness_sweep,
    sweep_to_csv,
)
from fbsplab.runio import read_json, write_json
from fbsplab.signals import WindowSpec, generate
from fbsplab.training import (
    ClassSpec,
    FeatureSpec,
    TrainConfig,
    TrainingDiverged,
    make_task,
    train,
)
from fbsplab.transform import DEFAULT_EPS, analyze, log_power, spectrogram_to_csv
from fbsplab.wavio import read_wav, write_wav


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the contract here is 1
    def error(self, message: str):
        raise _UsageError(f"{self.prog}: {message}")


def _as_float(value) -> float:
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "+inf", "infinity"):
            return math.inf
        if text == "-inf":
            return -math.inf
        return float(value)
    return float(value)


def _load_config(path: str) -> dict:
    doc = read_json(path)
    if isinstance(doc, dict) and set(doc) == {"command", "config"}:
        doc = doc["config"]  # a run sidecar round-trips as a config
    if not isinstance(doc, dict):
        raise ValueError(f"config {path} must hold a JSON object")
    return doc


def _merge(defaults: dict, config: dict, overrides: dict, where: str) -> dict:
    unknown = sorted(set(config) - set(defaults))
    if unknown:
        raise ValueError(f"unknown {where} config keys: {', '.join(unknown)}")
    merged = dict(defaults)
    merged.update(config)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged

def _write_sidecar(out_path: str, command: str, resolved: dict) -> None:
    write_json(out_path + ".run.json", {"command": command, "config": resolved})


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

_GEN_DEFAULTS = {
    "kind": "sine", "duration": 1.0, "sample_rate": 8000.0, "seed": 0,
    "amplitude": 0.8, "frequency": 440.0, "f_start": 300.0, "f_end": 3000.0,
    "low_hz": 500.0, "high_hz": 2000.0, "phase": 0.0, "encoding": "pcm16",
}

_GEN_PARAM_KEYS = {
    "sine": ("frequency", "amplitude", "phase"),
    "chirp": ("f_start", "f_end", "amplitude"),
    "band_noise": ("low_hz", "high_hz", "amplitude"),
    "silence": (),
}


def _cmd_gen(args) -> int:
    config = _load_config(args.config) if args.config else {}
    overrides = {
        "kind": args.kind, "duration": args.duration,
        "sample_rate": args.sample_rate, "seed": args.seed,
        "amplitude": args.amplitude, "frequency": args.frequency,
        "f_start": args.f_start, "f_end": args.f_end,
        "low_hz": args.low_hz, "high_hz": args.high_hz,
        "phase": args.phase, "encoding": args.encoding,
    }
    cfg = _merge(_GEN_DEFAULTS, config, overrides, "gen")
    kind = cfg["kind"]
    if kind not in _GEN_PARAM_KEYS:
        raise ValueError(f"unknown generator kind {kind!r}")
    params = {key: _as_float(cfg[key]) for key in _GEN_PARAM_KEYS[kind]}
    wf = generate(kind, params, _as_float(cfg["duration"]),
                  _as_float(cfg["sample_rate"]), seed=int(cfg["seed"]))
    write_wav(args.out, wf, encoding=cfg["encoding"])
    _write_sidecar(args.out, "gen", cfg)
    return 0


# ---------------------------------------------------------------------------
# spectrogram
# ---------------------------------------------------------------------------

_SPEC_DEFAULTS = {
    "input": None, "mode": "stft", "params_file": None,
    "n_fft": None, "hop": None, "window": "hann", "eps": DEFAULT_EPS,
}


def _resolve_bank(mode: str, params_file, n_fft_setting):
    """Pick the analysis bank; a params file fixes n_fft and must not clash."""
    if mode not in ("stft", "fbsp"):
        raise ValueError(f"mode must be 'stft' or 'fbsp', got {mode!r}")
    explicit = None if n_fft_setting is None else int(n_fft_setting)
    if mode == "fbsp" and params_file:
        params, n_fft = load_params(params_file)
        if explicit is not None and explicit != n_fft:
            raise ValueError(
                f"n_fft {explicit} conflicts with {params_file} (n_fft {n_fft})")
        return fbsp_kernel(params, n_fft), n_fft
    n_fft = explicit if explicit is not None else 256
    if mode == "fbsp":
        return fbsp_kernel(init_params(n_fft), n_fft), n_fft
    if params_file:
        raise ValueError("a params file only applies to --mode fbsp")
    return dft_kernel(n_fft), n_fft


def _cmd_spectrogram(args) -> int:
    config = _load_config(args.config) if args.config else {}
    overrides = {
        "input": args.input, "mode": args.mode, "params_file": args.params,
        "n_fft": args.n_fft, "hop": args.hop, "window": args.window,
        "eps": args.eps,
    }
    cfg = _merge(_SPEC_DEFAULTS, config, overrides, "spectrogram")
    if not cfg["input"]:
        raise ValueError("spectrogram needs an input wav (--input)")
    bank, n_fft = _resolve_bank(cfg["mode"], cfg["params_file"], cfg["n_fft"])
    cfg["n_fft"] = n_fft
    hop = int(cfg["hop"]) if cfg["hop"] is not None else n_fft // 2
    cfg["hop"] = hop
    wf = read_wav(cfg["input"])
    spec = FeatureSpec(n_fft=n_fft, hop=hop, window=cfg["window"],
                       eps=_as_float(cfg["eps"]))
    grid = spec.grid_for(len(wf))
    coeffs = analyze(wf, bank, grid, WindowSpec(spec.window, n_fft))
    out = log_power(coeffs, spec.eps, grid, bank)
    spectrogram_to_csv(args.out, out)
    _write_sidecar(args.out, "spectrogram", cfg)
    return 0


# ---------------------------------------------------------------------------
# freq-response
# ---------------------------------------------------------------------------

_RESP_DEFAULTS = {
    "mode": "fbsp", "params_file": None, "n_fft": None,
    "window": "rectangular", "num_probes": None,
}


def _cmd_freq_response(args) -> int:
    config = _load_config(args.config) if args.config else {}
    overrides = {
        "mode": args.mode, "params_file": args.params, "n_fft": args.n_fft,
        "window": args.window, "num_probes": args.num_probes,
    }
    cfg = _merge(_RESP_DEFAULTS, config, overrides, "freq-response")
    bank, n_fft = _resolve_bank(cfg["mode"], cfg["params_file"], cfg["n_fft"])
    cfg["n_fft"] = n_fft
    probes = int(cfg["num_probes"]) if cfg["num_probes"] is not None else n_fft // 2 + 1
    cfg["num_probes"] = probes
    response = frequency_response(bank, WindowSpec(cfg["window"], n_fft), probes)
    response_to_csv(args.out, response)
    _write_sidecar(args.out, "freq-response", cfg)
    return 0


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

_GRAD_DEFAULTS = {
    "n_fft": 64, "seed": 0, "draws": 5, "m": 1.7, "f_b": 0.9, "step": 1e-6,
}


def _cmd_gradcheck(args) -> int:
    config = _load_config(args.config) if args.config else {}
    overrides = {
        "n_fft": args.n_fft, "seed": args.seed, "draws": args.draws,
        "m": args.m, "f_b": args.f_b, "step": args.step,
    }
    cfg = _merge(_GRAD_DEFAULTS, config, overrides, "gradcheck")
    report = gradient_check_report(
        n_fft=int(cfg["n_fft"]), seed=int(cfg["seed"]), draws=int(cfg["draws"]),
        point=(_as_float(cfg["m"]), _as_float(cfg["f_b"])),
        step=_as_float(cfg["step"]),
    )
    write_json(args.out, report)
    _write_sidecar(args.out, "gradcheck", cfg)
    print(f"gradcheck: {report['status']} "
          f"({len(report['checks'])} checks, {len(report['failed'])} failed)")
    return 0 if report["status"] == "pass" else 3


# ---------------------------------------------------------------------------
# perturb
# ---------------------------------------------------------------------------

_PERTURB_DEFAULTS = {
    "input": None, "snr_db": None, "cutoff_hz": None, "order": 5,
    "seed": 0, "encoding": "pcm16",
}


def _cmd_perturb(args) -> int:
    config = _load_config(args.config) if args.config else {}
    overrides = {
        "input": args.input, "snr_db": args.snr_db, "cutoff_hz": args.cutoff_hz,
        "order": args.order, "seed": args.seed, "encoding": args.encoding,
    }
    cfg = _merge(_PERTURB_DEFAULTS, config, overrides, "perturb")
    if not cfg["input"]:
        raise ValueError("perturb needs an input wav (--input)")
    has_snr = cfg["snr_db"] is not None
    has_cutoff = cfg["cutoff_hz"] is not None
    if has_snr == has_cutoff:
        raise ValueError("choose exactly one of --snr-db or --cutoff-hz")
    wf = read_wav(cfg["input"])
    if has_snr:
        out = add_awgn(wf, _as_float(cfg["snr_db"]), seed=int(cfg["seed"]))
    else:
        filt = design_butterworth_lowpass(
            int(cfg["order"]), _as_float(cfg["cutoff_hz"]), wf.sample_rate)
        out = apply_filter(filt, wf)
    write_wav(args.out, out, encoding=cfg["encoding"])
    _write_sidecar(args.out, "perturb", cfg)
    return 0


# ---------------------------------------------------------------------------
# train and sweep
# ---------------------------------------------------------------------------

_DEFAULT_TASK = {
    "classes": [
        {"name": "low_tone", "kind": "tone", "low_hz": 350.0, "high_hz": 650.0},
        {"name": "mid_chirp", "kind": "chirp", "low_hz": 900.0, "high_hz": 1800.0},
        {"name": "high_noise", "kind": "band_noise",
         "low_hz": 2200.0, "high_hz": 3200.0},
    ],
    "samples_per_class": 40,
    "duration": 0.75,
    "sample_rate": 8000.0,
    "seed": 0,
    "snr_range": None,
    "train_fraction": 0.8,
}

_DEFAULT_FEATURES = {"n_fft": 256, "hop": 128, "window": "hann", "eps": DEFAULT_EPS}

_DEFAULT_TRAIN = {
    "epochs": 30, "lr": 0.1, "lr_decay": 0.985, "momentum": 0.9,
    "weight_decay": 5e-4, "lambda_fbsp": 1.0, "freeze_epochs": 3, "seed": 0,
}

_CLASS_KEYS = {"name", "kind", "low_hz", "high_hz", "amplitude"}


def _task_from_config(cfg: dict):
    classes = []
    for entry in cfg["classes"]:
        unknown = sorted(set(entry) - _CLASS_KEYS)
        if unknown:
            raise ValueError(f"unknown class config keys: {', '.join(unknown)}")
        kwargs = {
            "name": str(entry["name"]), "kind": str(entry["kind"]),
            "low_hz": _as_float(entry["low_hz"]),
            "high_hz": _as_float(entry["high_hz"]),
        }
        if "amplitude" in entry:
            lo, hi = entry["amplitude"]
            kwargs["amplitude"] = (_as_float(lo), _as_float(hi))
        classes.append(ClassSpec(**kwargs))
    snr = cfg["snr_range"]
    if isinstance(snr, (list, tuple)):
        snr = (_as_float(snr[0]), _as_float(snr[1]))
    elif snr is not None:
        snr = _as_float(snr)
    return make_task(
        classes, int(cfg["samples_per_class"]), duration=_as_float(cfg["duration"]),
        sample_rate=_as_float(cfg["sample_rate"]), seed=int(cfg["seed"]),
        snr_range=snr, train_fraction=_as_float(cfg["train_fraction"]),
    )


def _features_from_config(cfg: dict) -> FeatureSpec:
    return FeatureSpec(n_fft=int(cfg["n_fft"]), hop=int(cfg["hop"]),
                       window=str(cfg["window"]), eps=_as_float(cfg["eps"]))


def _train_config_from_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        epochs=int(cfg["epochs"]), lr=_as_float(cfg["lr"]),
        lr_decay=_as_float(cfg["lr_decay"]), momentum=_as_float(cfg["momentum"]),
        weight_decay=_as_float(cfg["weight_decay"]),
        lambda_fbsp=_as_float(cfg["lambda_fbsp"]),
        freeze_epochs=int(cfg["freeze_epochs"]), seed=int(cfg["seed"]),
    )


def _resolve_run_config(args, config: dict, extra_sections: dict | None = None) -> dict:
    sections = {"task": _DEFAULT_TASK, "features": _DEFAULT_FEATURES,
                "train": _DEFAULT_TRAIN}
    if extra_sections:
        sections.update(extra_sections)
    unknown = sorted(set(config) - set(sections))
    if unknown:
        raise ValueError(f"unknown config sections: {', '.join(unknown)}")
    resolved = {}
    for name, defaults in sections.items():
        resolved[name] = _merge(defaults, config.get(name, {}), {}, name)
    # a top-level --seed regenerates the data; per-section seeds stay in files
    if getattr(args, "seed", None) is not None:
        resolved["task"]["seed"] = int(args.seed)
    for flag in ("epochs", "lr", "lambda_fbsp", "freeze_epochs"):
        value = getattr(args, flag, None)
        if value is not None:
            resolved["train"][flag] = value
    return resolved


def _cmd_train(args) -> int:
    config = _load_config(args.config) if args.config else {}
    resolved = _resolve_run_config(args, config)
    corpus = _task_from_config(resolved["task"])
    features = _features_from_config(resolved["features"])
    train_cfg = _train_config_from_config(resolved["train"])
    result = train(corpus, train_cfg, features)
    save_params(args.out_params, result.params, features.n_fft)
    result.log.to_csv(args.out_log)
    _write_sidecar(args.out_params, "train", resolved)
    _write_sidecar(args.out_log, "train", resolved)
    final = result.log.records[-1]
    print(f"train: {train_cfg.epochs} epochs, final accuracy {final.accuracy:.3f}, "
          f"m {result.params.m:.4f}, f_b {result.params.f_b:.4f}")
    return 0


_SWEEP_DEFAULTS = {"kind": "awgn", "axis": None, "order": 5, "seed": 0}


def _default_axis(kind: str, sample_rate: float) -> list[float]:
    if kind == "awgn":
        return list(DEFAULT_SNR_AXIS)
    fractions = (0.5, 16000.0 / 44100.0, 8000.0 / 44100.0, 4000.0 / 44100.0,
                 2000.0 / 44100.0, 1000.0 / 44100.0)
    return [f * sample_rate for f in fractions]


def _cmd_sweep(args) -> int:
    config = _load_config(args.config) if args.config else {}
    resolved = _resolve_run_config(args, config, {"sweep": _SWEEP_DEFAULTS})
    sweep_cfg = resolved["sweep"]
    for flag in ("kind", "order"):
        value = getattr(args, flag, None)
        if value is not None:
            sweep_cfg[flag] = value
    if args.axis is not None:
        sweep_cfg["axis"] = [part.strip() for part in args.axis.split(",")]
    corpus = _task_from_config(resolved["task"])
    features = _features_from_config(resolved["features"])
    train_cfg = _train_config_from_config(resolved["train"])
    axis = sweep_cfg["axis"]
    axis = (_default_axis(sweep_cfg["kind"], corpus.sample_rate) if axis is None
            else [_as_float(v) for v in axis])
    sweep_cfg["axis"] = axis

    frozen_cfg = replace(train_cfg, freeze_epochs=train_cfg.epochs)
    models = [
        train(corpus, frozen_cfg, features).model("stft"),
        train(corpus, train_cfg, features).model("fbsp"),
    ]
    val_wfs = [corpus.waveforms[i] for i in corpus.val_indices]
    val_labels = [int(v) for v in corpus.labels[corpus.val_indices]]
    stem = args.out[:-4] if args.out.endswith(".csv") else args.out
    written = []
    for model in models:
        result = robustness_sweep(
            sweep_cfg["kind"], axis, model, val_wfs, val_labels,
            seed=int(sweep_cfg["seed"]), order=int(sweep_cfg["order"]),
        )
        path = f"{stem}_{model.bank_label}.csv"
        sweep_to_csv(path, result)
        written.append(path)
    _write_sidecar(args.out, "sweep", resolved)
    print("sweep wrote: " + ", ".join(written))
    return 0


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="fbsplab",
                     description="Learnable spline kernel banks over framed audio.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_common(p: _Parser, out_help: str, out_required: bool = True):
        p.add_argument("--config", help="JSON config (a .run.json sidecar also works)")
        p.add_argument("--out", required=out_required, help=out_help)

    p = sub.add_parser("gen", help="generate a test waveform")
    add_common(p, "output wav path")
    p.add_argument("--kind", choices=sorted(_GEN_PARAM_KEYS))
    p.add_argument("--duration", type=float)
    p.add_argument("--sample-rate", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--frequency", type=float)
    p.add_argument("--f-start", type=float)
    p.add_argument("--f-end", type=float)
    p.add_argument("--low-hz", type=float)
    p.add_argument("--high-hz", type=float)
    p.add_argument("--phase", type=float)
    p.add_argument("--encoding", choices=["pcm16", "float32"])
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("spectrogram", help="log-power spectrogram to CSV")
    add_common(p, "output csv path")
    p.add_argument("--input", help="input wav")
    p.add_argument("--mode", choices=["stft", "fbsp"])
    p.add_argument("--params", help="bank parameter JSON (fbsp mode)")
    p.add_argument("--n-fft", type=int)
    p.add_argument("--hop", type=int)
    p.add_argument("--window", choices=["rectangular", "hann"])
    p.add_argument("--eps", type=float)
    p.set_defaults(func=_cmd_spectrogram)

    p = sub.add_parser("freq-response", help="per-filter gain curves to CSV")
    add_common(p, "output csv path")
    p.add_argument("--mode", choices=["stft", "fbsp"])
    p.add_argument("--params", help="bank parameter JSON (fbsp mode)")
    p.add_argument("--n-fft", type=int)
    p.add_argument("--window", choices=["rectangular", "hann"])
    p.add_argument("--num-probes", type=int)
    p.set_defaults(func=_cmd_freq_response)

    p = sub.add_parser("gradcheck", help="analytic gradients vs central differences")
    add_common(p, "output JSON report path")
    p.add_argument("--n-fft", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--draws", type=int)
    p.add_argument("--m", type=float)
    p.add_argument("--f-b", type=float)
    p.add_argument("--step", type=float)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("perturb", help="add noise at an SNR or low-pass filter")
    add_common(p, "output wav path")
    p.add_argument("--input", help="input wav")
    p.add_argument("--snr-db", help="SNR in dB ('inf' passes through)")
    p.add_argument("--cutoff-hz", type=float)
    p.add_argument("--order", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--encoding", choices=["pcm16", "float32"])
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("train", help="train the head and bank on a synthetic task")
    p.add_argument("--config", help="JSON config with task/features/train sections")
    p.add_argument("--out-params", required=True, help="output bank parameter JSON")
    p.add_argument("--out-log", required=True, help="output per-epoch CSV")
    p.add_argument("--seed", type=int, help="override the task seed")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda-fbsp", type=float)
    p.add_argument("--freeze-epochs", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sweep", help="robustness sweep for stft and fbsp banks")
    add_common(p, "output csv stem; writes <stem>_<bank>.csv")
    p.add_argument("--kind", choices=["awgn", "lowpass"])
    p.add_argument("--axis", help="comma-separated axis values ('inf' allowed)")
    p.add_argument("--order", type=int)
    p.add_argument("--seed", type=int, help="override the task seed")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda-fbsp", type=float)
    p.add_argument("--freeze-epochs", type=int)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (SingularGradientError, TrainingDiverged) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
