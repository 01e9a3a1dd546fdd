from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from banksim.coefficients import CoefficientSet
from banksim.config import load_geometry
from banksim.dataset import (
    CaptiveDataset,
    HarmonicSway,
    HarmonicYaw,
    concat,
    load_csv,
    split,
    synthesize,
    write_csv,
)
from banksim.errors import BanksimError, ConfigError
from banksim.hydro_model import CanalGeometry, PlanarState, VesselGeometry
from banksim.identify import build_matrices, identify, write_predictions_csv
from banksim.shapley import format_table, shapley_values
from banksim.sim import (
    SimConfig,
    run,
    side_flips,
    sweep_grounding,
    write_summary_json,
    write_sweep_csv,
    write_trajectory_csv,
    y0_from_clearance,
)
from banksim.util import RunManifest, atomic_write_text

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2

Command = Callable[[argparse.Namespace], int]


def parse_range(text: str) -> List[float]:
    """Inclusive start:stop:step range, e.g. 0.1:2.5:0.1."""
    try:
        start, stop, stride = (float(part) for part in text.split(":"))
    except ValueError:
        raise ConfigError(f"expected start:stop:step, got {text!r}")
    if stride <= 0 or stop < start:
        raise ConfigError(f"range {text!r} needs step > 0 and stop >= start")
    count = int(math.floor((stop - start) / stride + 1e-9)) + 1
    return [round(start + i * stride, 12) for i in range(count)]


def _load_coeffs(path: Optional[str]) -> CoefficientSet:
    if not path:
        return CoefficientSet.published()
    with open(path, "r") as f:
        return CoefficientSet.from_json(f.read())


def _load_data(
    paths: Sequence[str], vessel: VesselGeometry, canal: CanalGeometry
) -> CaptiveDataset:
    parts = [load_csv(path, vessel, canal) for path in paths]
    return parts[0] if len(parts) == 1 else concat(parts)


def _arguments(args: argparse.Namespace) -> Dict[str, Any]:
    plain = (str, int, float, bool, list, type(None))
    return {k: v for k, v in vars(args).items() if isinstance(v, plain)}


def _finish(
    args: argparse.Namespace,
    started: float,
    inputs: List[str],
    outputs: List[str],
    seed: Optional[int],
) -> None:
    manifest = RunManifest(
        command=args.command,
        config_path=args.config,
        seed=seed,
        inputs=inputs,
        outputs=outputs,
        arguments=_arguments(args),
        duration_s=time.monotonic() - started,
    )
    for output in outputs:
        manifest.write(output)


def cmd_datagen(args: argparse.Namespace) -> int:
    log = structlog.get_logger()
    started = time.monotonic()
    if args.noise > 0 and args.seed is None:
        log.error("Refusing to add noise without --seed")
        return EXIT_USAGE
    vessel, canal = load_geometry(args.config)
    truth = _load_coeffs(args.truth)
    if args.scenario == "harmonic_yaw":
        scenario: Any = HarmonicYaw(args.amplitude, args.period, args.y_offset)
    else:
        scenario = HarmonicSway(args.amplitude, args.period, args.y_offset)

    def make(noise_std: Tuple[float, float, float]) -> CaptiveDataset:
        return synthesize(
            vessel,
            canal,
            truth,
            scenario,
            u0=args.u0,
            duration=args.duration,
            dt=args.dt,
            noise_std=noise_std,
            seed=args.seed,
            label=args.label,
            current=args.current,
        )

    dataset = make((0.0, 0.0, 0.0))
    if args.noise > 0:
        # noise level is a fraction of each channel's RMS
        rms = tuple(
            float(np.sqrt(np.mean(dataset.column(name) ** 2)))
            for name in ("X", "Y", "N")
        )
        dataset = make(tuple(args.noise * value for value in rms))  # type: ignore
    write_csv(dataset, args.out)
    log.info("Wrote captive data", path=args.out, records=len(dataset))
    _finish(args, started, [p for p in (args.truth,) if p], [args.out], args.seed)
    return EXIT_OK


def cmd_identify(args: argparse.Namespace) -> int:
    log = structlog.get_logger()
    started = time.monotonic()
    vessel, canal = load_geometry(args.config)
    dataset = _load_data(args.data, vessel, canal)
    partition = split(
        dataset, fraction=args.fraction, seed=args.split_seed, per_test=args.stratify
    )
    coeffs = identify(dataset, partition, current=args.current)
    meta = {
        "split_seed": args.split_seed,
        "fraction": args.fraction,
        "stratify": args.stratify,
        "config": args.config,
        "data": list(args.data),
    }
    atomic_write_text(args.out, coeffs.to_json(extra_meta=meta) + "\n")
    log.info("Wrote coefficients", path=args.out)
    if args.truth:
        truth = _load_coeffs(args.truth)
        errors = {}
        for name, expected in truth.as_dict().items():
            got = coeffs.value(name)
            errors[name] = abs(got - expected) / abs(expected) if expected else abs(got)
        worst = max(errors, key=lambda k: errors[k])
        print(f"max relative error {errors[worst]:.3e} ({worst})")
    outputs = [args.out]
    if args.predictions:
        write_predictions_csv(dataset, coeffs, args.predictions, current=args.current)
        log.info("Wrote predictions", path=args.predictions)
        outputs.append(args.predictions)
    _finish(args, started, list(args.data), outputs, args.split_seed)
    return EXIT_OK


def cmd_shapley(args: argparse.Namespace) -> int:
    started = time.monotonic()
    vessel, canal = load_geometry(args.config)
    dataset = _load_data(args.data, vessel, canal)
    seed = args.split_seed
    fraction = args.fraction
    inputs = list(args.data)
    if args.coeffs:
        # reuse the partition the coefficients were identified on
        meta = _load_coeffs(args.coeffs).meta
        seed = seed if seed is not None else meta.get("split_seed")
        fraction = meta.get("fraction", fraction)
        inputs.append(args.coeffs)
    seed = 0 if seed is None else int(seed)
    partition = split(dataset, fraction=fraction, seed=seed, per_test=args.stratify)
    blocks = ("X", "Y", "N") if args.block == "all" else (args.block,)
    problem = build_matrices(dataset, current=args.current)
    report = shapley_values(problem, partition, blocks=blocks, jobs=args.jobs)
    print(format_table(report))
    if args.out:
        out_meta = {"split_seed": seed, "fraction": fraction}
        atomic_write_text(args.out, report.to_json(meta=out_meta) + "\n")
        _finish(args, started, inputs, [args.out], seed)
    return EXIT_OK


def _sim_config(args: argparse.Namespace, y0: float) -> SimConfig:
    return SimConfig(
        initial=PlanarState(y=y0, psi=args.psi0, u=args.u0),
        dt=args.dt,
        t_max=args.t_max,
        X_in=args.x_in,
        surge_mass=args.surge_mass,
        clearance_floor=args.clearance_floor,
        current=args.current,
    )


def summary_path(out: str) -> str:
    root, _ = os.path.splitext(out)
    return root + ".summary.json"


def cmd_simulate(args: argparse.Namespace) -> int:
    started = time.monotonic()
    vessel, canal = load_geometry(args.config)
    coeffs = _load_coeffs(args.coeffs)
    config = _sim_config(args, args.y0)
    result = run(config, coeffs, vessel, canal)
    write_trajectory_csv(result, args.out)
    summary = summary_path(args.out)
    meta = {"y0": args.y0, "dt": args.dt, "coeffs": args.coeffs}
    write_summary_json(result, summary, meta=meta)
    print(json.dumps(result.summary()))
    _finish(args, started, [p for p in (args.coeffs,) if p], [args.out, summary], None)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    started = time.monotonic()
    vessel, canal = load_geometry(args.config)
    coeffs = _load_coeffs(args.coeffs)
    if args.ys0_range:
        y0s = [
            y0_from_clearance(y_s0, vessel, canal, args.psi0)
            for y_s0 in parse_range(args.ys0_range)
        ]
    else:
        y0s = parse_range(args.y0_range)
    base = _sim_config(args, y0s[0])
    points = sweep_grounding(y0s, base, coeffs, vessel, canal, jobs=args.jobs)
    write_sweep_csv(points, args.out)
    for low, high in side_flips(points):
        print(f"grounding side flips between y_s0={low:.3f} m and y_s0={high:.3f} m")
    _finish(args, started, [p for p in (args.coeffs,) if p], [args.out], None)
    return EXIT_OK


def get_commands() -> Dict[str, Command]:
    return {
        "datagen": cmd_datagen,
        "identify": cmd_identify,
        "shapley": cmd_shapley,
        "simulate": cmd_simulate,
        "sweep": cmd_sweep,
    }


def run_command(args: argparse.Namespace) -> int:
    """Dispatch to the selected command and map failures onto exit codes."""
    log = structlog.get_logger()
    try:
        return get_commands()[args.command](args)
    except (BanksimError, ValueError, KeyError, OSError) as e:
        log.error(
            f"{args.command} failed: {e}",
            command=args.command,
            error_type=type(e).__name__,
        )
        return EXIT_USAGE
    except Exception:
        log.exception("Unhandled exception", command=args.command)
        sys.stderr.flush()
        return EXIT_INTERNAL
