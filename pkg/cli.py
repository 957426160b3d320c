"""
Command-line entry point for the Fractal-IR toolkit.

Subcommands: train, eval, analyze, gradcheck, rf-probe, grad-experiment.
Reports go to stdout as JSON or CSV; logs go to stderr.
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, replace
from typing import Optional, Sequence

import engine  # noqa: F401  sets BLAS thread caps before numpy loads
from analysis.complexity import METHODS, ComplexityDims, UnknownMethodError, analytic_complexity, measure_fifm_att
from analysis.gradient_suite import run_gradient_suite
from analysis.receptive_field import measured_receptive_field, probe_layer_stack
from fractal.attention import ATTENTION_KINDS, DomainError, gradient_magnitude_experiment, sample_gradient_norms
from fractal.models import ModelConfigError
from harness.checkpoint import CheckpointFormatError, check_checkpoint_matches, load_checkpoint
from harness.config import ConfigError, RunConfig, load_config
from harness.data import synth_dataset
from harness.train import DivergenceError, evaluate, train

logger = logging.getLogger(__name__)

HANDLED_ERRORS = (
    ConfigError,
    CheckpointFormatError,
    DivergenceError,
    ModelConfigError,
    UnknownMethodError,
    DomainError,
    FileNotFoundError,
)


def _dims(cfg: RunConfig) -> ComplexityDims:
    window, group = cfg.model.stage_geometry(0)
    side = cfg.dataset.image_size // (2 if cfg.task == 'sr2x' else 1)
    return ComplexityDims(
        batch=cfg.batch_size,
        height=side,
        width=side,
        channels=cfg.model.channels,
        heads=cfg.model.heads,
        window=window,
        group=group,
        gamma=cfg.model.ffn_ratio,
    )


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    result = train(cfg)
    summary = {
        'final': asdict(result.final_row) if result.final_row else None,
        'metrics': str(result.metrics_path),
        'checkpoint': str(result.checkpoint_path),
    }
    print(json.dumps(summary, indent=2))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    params = load_checkpoint(args.checkpoint)
    check_checkpoint_matches(params, cfg.model)
    spec = cfg.dataset
    inputs, targets = synth_dataset(spec.n_val, spec.image_size, cfg.task, cfg.noise_sigma,
                                    seed=spec.seed, channels=cfg.model.image_channels, split='val')
    result = evaluate(params, cfg.model, inputs, targets)
    print(json.dumps(asdict(result), indent=2))
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    dims = _dims(cfg)
    reports = []
    for method in args.methods or METHODS:
        report = analytic_complexity(method, dims)
        if args.measure and method == 'fractal':
            # wide enough that the two-layer support is not clipped by the image border
            size = 8 * dims.region
            measured = measured_receptive_field(cfg.model.layer_config(0), size, seed=cfg.seed)
            report = replace(report, rf_measured=measured)
        reports.append(report.to_dict())
    if args.measure:
        counter = measure_fifm_att(dims, seed=cfg.seed)
        logger.info(f"Empirical fifm_att counts: {counter.as_dict()}")
    print(json.dumps(reports, indent=2))
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = run_gradient_suite(seed=args.seed)
    for result in results:
        status = 'ok' if result.passed else 'FAIL'
        print(f"{result.name:24s} {result.error:.3e}  tol {result.tolerance:.0e}  {status}")
    failed = [result.name for result in results if not result.passed]
    if failed:
        logger.error(f"Gradient check failed for: {', '.join(failed)}")
        return 1
    return 0


def cmd_rf_probe(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    layer_cfg = cfg.model.layer_config(0)
    region = layer_cfg.region
    size = 8 * region
    centre = (size // 2, size // 2)
    isolated = replace(layer_cfg, l2_enabled=False, conv_kind='linear')

    probes = {'fifm_att': probe_layer_stack(layer_cfg, 1, size, centre, mode='att', seed=cfg.seed)}
    for depth in range(1, args.depth + 1):
        probes[f'l1_only_{depth}_layers'] = probe_layer_stack(isolated, depth, size, centre, seed=cfg.seed)
    probes['two_layers'] = probe_layer_stack(layer_cfg, 2, size, centre, seed=cfg.seed)

    report = {
        'window': layer_cfg.window,
        'region': region,
        'bound': 16 * region,
        'size': size,
        'pixel': list(centre),
        'probes': {
            name: {'height': probe.height, 'width': probe.width, 'support': probe.support_size,
                   'box': [probe.top, probe.left, probe.bottom, probe.right]}
            for name, probe in probes.items()
        },
    }
    print(json.dumps(report, indent=2))
    return 0


def cmd_grad_experiment(args: argparse.Namespace) -> int:
    norm_range = (args.low, args.high)
    samples = sample_gradient_norms(args.samples, norm_range, dim=args.dim, orthogonal=args.orthogonal, seed=args.seed)
    summary = gradient_magnitude_experiment(args.samples, norm_range, samples=samples)
    logger.info(f"Gradient-norm summary: {json.dumps(summary)}")

    handle = open(args.output, 'w', newline='', encoding='utf-8') if args.output else sys.stdout
    try:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['kind', 'q_norm', 'k_norm', 'grad_norm'])
        for kind in ATTENTION_KINDS:
            for q_norm, k_norm, grad in zip(samples['q_norm'], samples['k_norm'], samples[kind]):
                writer.writerow([kind, repr(float(q_norm)), repr(float(k_norm)), repr(float(grad))])
    finally:
        if handle is not sys.stdout:
            handle.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='fractal-ir', description=__doc__.strip().splitlines()[0])
    parser.add_argument('-v', '--verbose', action='store_true', help='Enable debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', help='Train a model from a JSON config')
    p.add_argument('config')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('eval', help='Evaluate a checkpoint on the validation split')
    p.add_argument('checkpoint')
    p.add_argument('config')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('analyze', help='Print complexity reports as JSON')
    p.add_argument('config')
    p.add_argument('--method', dest='methods', action='append', choices=METHODS)
    p.add_argument('--measure', action='store_true', help='Add measured receptive field and FLOP counts')
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser('gradcheck', help='Run the finite-difference suite')
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser('rf-probe', help='Measure gradient-support receptive fields')
    p.add_argument('config')
    p.add_argument('--depth', type=int, default=3, help='Deepest level-1-only stack to probe')
    p.set_defaults(func=cmd_rf_probe)

    p = sub.add_parser('grad-experiment', help='Dot vs cosine gradient-norm distributions as CSV')
    p.add_argument('--samples', type=int, default=1000)
    p.add_argument('--low', type=float, default=1e-3)
    p.add_argument('--high', type=float, default=1.0)
    p.add_argument('--dim', type=int, default=16)
    p.add_argument('--orthogonal', action='store_true')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--output', help='CSV path (stdout when omitted)')
    p.set_defaults(func=cmd_grad_experiment)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except HANDLED_ERRORS as e:
        logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
