"""``splitquant`` command line.

Exit codes: 0 success, 1 domain error (validation, arguments, failed
verification), 2 file-system error. Summaries go to stdout as JSON (or
``key:value`` sections with ``--format text``); diagnostics go to stderr.
"""
import argparse
import json
import logging
import math
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.config import load_config
from core.data_types import DType
from core.exceptions import ArgumentError, ContainerIOError, SplitQuantError
from harness.bench import bench
from harness.experiment import DEFAULT_BITS, run_table1_analog
from harness.synthetic import gen_bench_model, gen_desk_model, random_inputs
from quant.quantizer import check_bits, model_error_stats, model_size_report, quantize_model
from quant.splitter import split_model, unsplit_check
from storage.container import load_model, save_model
from storage.packing import tensor_to_array
from utils.logging import configure_logging

logger = logging.getLogger(__name__)

INPUTS_TENSOR = 'inputs'

Summary = Tuple[Dict[str, Any], bool]


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as ArgumentError so they share the domain exit code"""
    def error(self, message: str):
        raise ArgumentError(f"{self.prog}: {message}")


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def _text_lines(doc: Dict[str, Any], section: str = 'summary') -> List[str]:
    lines = [f"# {section}"]
    nested = []
    for key, value in doc.items():
        if isinstance(value, dict):
            nested.append((f"{section}.{key}", value))
        elif isinstance(value, list) and value and all(isinstance(v, dict) for v in value):
            nested.extend((f"{key}[{i}]", v) for i, v in enumerate(value))
        elif isinstance(value, list):
            lines.append(f"{key}:{','.join(str(v) for v in value)}")
        else:
            lines.append(f"{key}:{value}")
    for name, child in nested:
        lines.append("")
        lines.extend(_text_lines(child, name))
    return lines


def _emit(doc: Dict[str, Any], fmt: str, stream=None) -> None:
    stream = stream or sys.stdout
    doc = _jsonable(doc)
    if fmt == 'text':
        stream.write("\n".join(_text_lines(doc)) + "\n")
    else:
        stream.write(json.dumps(doc, indent=2, allow_nan=False) + "\n")


# -- commands ------------------------------------------------------------------

def command_split(args, config) -> Summary:
    graph, tensors = load_model(args.model)
    result = split_model(graph, tensors, min_elems=config['min_elems'], threads=config['threads'],
                         max_iter=config['max_iter'], tol=config['tol'])
    save_model(result.graph, result.tensors, args.out)
    return {
        'model': args.model,
        'out': args.out,
        'layers_split': len(result.plans),
        'message': f"{len(result.plans)} layers split",
        'layers': [plan.summary() for plan in result.plans],
    }, True


def command_quantize(args, config) -> Summary:
    check_bits(args.bits)
    graph, tensors = load_model(args.model)
    new_graph, new_tensors = quantize_model(graph, tensors, args.bits, threads=config['threads'])
    size = model_size_report(new_tensors, tensors)
    quantized = sum(1 for name in new_graph.tensor_names()
                    if tensors[name].dtype is DType.F32 and new_tensors[name].dtype.is_quantized)
    save_model(new_graph, new_tensors, args.out)
    return {
        'model': args.model,
        'out': args.out,
        'bits': args.bits,
        'tensors_quantized': quantized,
        'fp32_bytes': size.fp32_bytes,
        'stored_bytes': size.stored_bytes,
        'size_ratio': size.ratio,
    }, True


def _read_inputs(path: str) -> np.ndarray:
    _, tensors = load_model(path)
    if INPUTS_TENSOR in tensors:
        tensor = tensors[INPUTS_TENSOR]
    elif len(tensors) == 1:
        tensor = next(iter(tensors.values()))
    else:
        raise ArgumentError(f"'{path}' holds no '{INPUTS_TENSOR}' tensor and more than one candidate")
    if tensor.dtype is not DType.F32:
        raise ArgumentError(f"Input tensor '{tensor.name}' must be F32, got {tensor.dtype.value}")
    return tensor_to_array(tensor)


def command_verify(args, config) -> Summary:
    model_a = load_model(args.a)
    model_b = load_model(args.b)
    if args.inputs:
        inputs = _read_inputs(args.inputs)
    else:
        inputs = random_inputs(*model_a, args.random, seed=config['seed'])
    report = unsplit_check(model_a, model_b, inputs)
    ok = report.max_deviation <= config['verify_tol'] and report.agreement == 1.0
    doc = report.to_dict()
    doc.update({'a': args.a, 'b': args.b, 'inputs': int(inputs.shape[0]),
                'tol': config['verify_tol'], 'passed': ok})
    if not ok:
        logger.error("Verification failed: max deviation %g (tol %g), agreement %.4f",
                     report.max_deviation, config['verify_tol'], report.agreement)
    return doc, ok


def command_eval(args, config) -> Summary:
    desk = gen_desk_model(args.kind, dims=args.dims, seed=config['seed'], samples=args.samples,
                          pool=args.pool, bulk_sigma=config['bulk_sigma'],
                          outlier_frac=config['outlier_frac'], outlier_mag=config['outlier_mag'])
    table = run_table1_analog(desk, bits=args.bits, min_elems=config['min_elems'],
                              threads=config['threads'])
    doc = table.to_dict()
    doc['seed'] = config['seed']
    doc['dims'] = list(desk.dims)
    return doc, True


def command_stats(args, config) -> Summary:
    graph, tensors = load_model(args.model)
    reference = load_model(args.reference)[1] if args.reference else None
    reports = model_error_stats(graph, tensors, reference=reference, bits=args.bits)
    size = model_size_report(tensors, reference)
    return {
        'model': args.model,
        'layers': len(graph.layers),
        'tensors': len(tensors),
        'fp32_bytes': size.fp32_bytes,
        'stored_bytes': size.stored_bytes,
        'size_ratio': size.ratio,
        'tensor_stats': [r.to_dict() for r in reports],
    }, True


def command_bench(args, config) -> Summary:
    check_bits(args.bits)
    if args.model:
        graph, tensors = load_model(args.model)
    else:
        graph, tensors = gen_bench_model(args.params, seed=config['seed'])
    report = bench(graph, tensors, bits=args.bits, threads=config['threads'],
                   min_elems=config['min_elems'])
    return report.to_dict(), True


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument('--format', choices=['json', 'text'], default='json', help='Summary format')
    common.add_argument('--threads', type=int, help='Worker threads (default: $SPLITQUANT_THREADS or 1)')
    common.add_argument('-v', '--verbose', action='count', default=0, help='-v info, -vv debug')

    parser = _Parser(prog='splitquant',
                     description='Split layers by k-means clusters and quantize them to 2/4/8 bits')
    commands = parser.add_subparsers(dest='command', required=True)

    split = commands.add_parser('split', parents=[common], help='Split linear/conv2d layers')
    split.add_argument('--model', required=True)
    split.add_argument('--out', required=True)
    split.add_argument('--min-elems', type=int, help='Skip layers with fewer weight+bias elements')
    split.set_defaults(handler=command_split)

    quantize = commands.add_parser('quantize', parents=[common], help='Per-tensor affine quantization')
    quantize.add_argument('--model', required=True)
    quantize.add_argument('--bits', type=int, required=True)
    quantize.add_argument('--out', required=True)
    quantize.set_defaults(handler=command_quantize)

    verify = commands.add_parser('verify', parents=[common], help='Check a split model against its original')
    verify.add_argument('--a', required=True, help='Original model')
    verify.add_argument('--b', required=True, help='Split model')
    source = verify.add_mutually_exclusive_group(required=True)
    source.add_argument('--inputs', help="Container holding an F32 '%s' tensor" % INPUTS_TENSOR)
    source.add_argument('--random', type=int, help='Number of seeded random inputs')
    verify.add_argument('--seed', type=int)
    verify.add_argument('--tol', type=float, help='Max absolute output deviation (default 1e-4)')
    verify.set_defaults(handler=command_verify)

    evaluate = commands.add_parser('eval', parents=[common], help='Accuracy table on a synthetic desk model')
    evaluate.add_argument('--kind', choices=['mlp', 'attn'], default='mlp')
    evaluate.add_argument('--dims', type=int, nargs='+',
                          help='mlp: in hidden... classes; attn: vocab d_model classes seq')
    evaluate.add_argument('--bits', type=int, nargs='+', default=list(DEFAULT_BITS))
    evaluate.add_argument('--samples', type=int, default=512)
    evaluate.add_argument('--pool', type=int, default=16, help='Candidates drawn per kept sample')
    evaluate.add_argument('--seed', type=int)
    evaluate.add_argument('--bulk-sigma', type=float)
    evaluate.add_argument('--outlier-frac', type=float)
    evaluate.add_argument('--outlier-mag', type=float)
    evaluate.add_argument('--min-elems', type=int)
    evaluate.set_defaults(handler=command_eval)

    stats = commands.add_parser('stats', parents=[common], help='Per-tensor quantization statistics')
    stats.add_argument('--model', required=True)
    stats.add_argument('--reference', help='FP32 model to measure quantization error against')
    stats.add_argument('--bits', type=int, default=4, help='Simulated width for F32 tensors')
    stats.set_defaults(handler=command_stats)

    bench_cmd = commands.add_parser('bench', parents=[common], help='Time split + quantize')
    target = bench_cmd.add_mutually_exclusive_group(required=True)
    target.add_argument('--model')
    target.add_argument('--params', type=int, help='Synthetic model with about this many parameters')
    bench_cmd.add_argument('--bits', type=int, default=4)
    bench_cmd.add_argument('--seed', type=int)
    bench_cmd.set_defaults(handler=command_bench)
    return parser


def _config_for(args) -> Dict[str, Any]:
    overrides = {
        'threads': args.threads,
        'min_elems': getattr(args, 'min_elems', None),
        'seed': getattr(args, 'seed', None),
        'verify_tol': getattr(args, 'tol', None),
        'bulk_sigma': getattr(args, 'bulk_sigma', None),
        'outlier_frac': getattr(args, 'outlier_frac', None),
        'outlier_mag': getattr(args, 'outlier_mag', None),
    }
    config = load_config(overrides)
    if args.verbose:
        config['log_level'] = 'DEBUG' if args.verbose > 1 else 'INFO'
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        config = _config_for(args)
        configure_logging(config['log_level'])
        doc, ok = args.handler(args, config)
        _emit(doc, args.format)
        return 0 if ok else 1
    except (ContainerIOError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    except SplitQuantError as e:
        sys.stderr.write(f"error: {e}\n")
        return 1


if __name__ == '__main__':
    sys.exit(main())
