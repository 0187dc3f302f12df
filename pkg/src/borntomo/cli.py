"""Command-line pipelines: phantom, simulate, noise, magnitude, reconstruct,
retrieve, metrics, and lcurve.

Arrays travel between stages as .odtb files; complex files are read as
total-field stacks and real files as magnitude stacks.  Every run with the
same configuration and seed is bitwise reproducible in its .odtb outputs.
Exit codes: 0 success, 1 runtime failure, 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import analysis, inversion, phase_retrieval, storage
from .forward import MeasurementStack, born_convolution_forward, dtot_apply
from .geometry import build_node_set


def _load_run_config(path):
    if path is None:
        return storage.RunConfig()
    return storage.load_config(path)


def _stack_from_file(path, config):
    values = storage.read_array(path)
    kind = "total" if np.iscomplexobj(values) else "magnitude"
    stack = MeasurementStack(values, kind)
    stack.check_config(config)
    return stack


def _phantom_spec(arg, experiment):
    if arg.startswith("named:"):
        return analysis.named_phantom(arg[len("named:"):], experiment)
    with open(arg, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    prims = tuple(
        analysis.Primitive(
            kind=p["kind"],
            center=tuple(p["center"]),
            size=tuple(p["size"]) if isinstance(p["size"], (list, tuple)) else (p["size"],),
            amplitude=float(p["amplitude"]),
        )
        for p in data["primitives"]
    )
    return analysis.PhantomSpec(prims, cap=float(data.get("cap", 0.5)))


def _cmd_phantom(args):
    run = _load_run_config(args.config)
    experiment = run.experiment()
    spec = _phantom_spec(args.spec, experiment)
    f = analysis.render_phantom(spec, experiment)
    storage.write_array(args.out, f)
    return 0


def _cmd_simulate(args):
    run = _load_run_config(args.config)
    experiment = run.experiment()
    f = storage.read_array(args.potential)
    if np.iscomplexobj(f):
        raise ValueError("potential file must be real")
    if args.model == "dtot":
        stack = dtot_apply(f, experiment)
    else:
        stack = born_convolution_forward(f, experiment)
    storage.write_array(args.out, stack.values)
    return 0


def _cmd_noise(args):
    run = _load_run_config(args.config)
    level = run.noise_level if args.level is None else args.level
    seed = run.seed if args.seed is None else args.seed
    values = storage.read_array(args.infile)
    kind = "total" if np.iscomplexobj(values) else "magnitude"
    noisy = analysis.add_noise(MeasurementStack(values, kind), level, seed)
    storage.write_array(args.out, noisy.values)
    return 0


def _cmd_magnitude(args):
    values = storage.read_array(args.infile)
    storage.write_array(args.out, np.abs(values))
    return 0


def _cmd_reconstruct(args):
    run = _load_run_config(args.config)
    experiment = run.experiment()
    stack = _stack_from_file(args.infile, experiment)
    if stack.kind != "total":
        raise ValueError("reconstruct needs complex (known-phase) data; "
                         "use `retrieve` for magnitude data")
    method = args.method or run.method
    if method is None:
        raise ValueError("no method given (flag --method or config key)")
    report = inversion.reconstruct(
        stack, experiment, method,
        lam=args.lam if args.lam is not None else run.lam,
        J_CG=run.J_CG, J_PD=run.J_PD,
        tvd_lambda=args.tvd,
    )
    storage.write_array(args.out, report.potential)
    if args.report:
        storage.write_report(args.report, report)
    return 0


def _cmd_retrieve(args):
    run = _load_run_config(args.config)
    experiment = run.experiment()
    stack = _stack_from_file(args.infile, experiment)
    if stack.kind != "magnitude":
        stack = stack.magnitude()
    lam = args.lam if args.lam is not None else run.lam
    if args.variant == "md":
        report = phase_retrieval.md_retrieve(
            stack, experiment, r_s=run.resolved_r_s(), J_IO=run.J_IO,
            method="pdtv" if args.inner == "pdtv" else "cg",
            lam=lam, J_PD=run.J_PD, J_CG=run.J_CG,
        )
    else:
        nodes = build_node_set(experiment)
        support = phase_retrieval.SupportConstraint.from_config(
            experiment, run.resolved_r_s()
        )
        report = phase_retrieval.io_retrieve(
            stack, experiment, nodes, support,
            variant=args.variant, inner=args.inner, J_IO=run.J_IO,
            beta=run.beta, lam=lam, J_CG=run.J_CG, J_PD=run.J_PD,
        )
    storage.write_array(args.out, report.potential)
    if args.report:
        storage.write_report(args.report, report)
    return 0


def _cmd_metrics(args):
    ref = storage.read_array(args.ref)
    test = storage.read_array(args.test)
    p = analysis.psnr(ref, test)
    s = analysis.ssim(ref, test)
    print(f"psnr={p:.4f} ssim={s:.6f}")
    return 0


def _parse_lambda_spec(spec):
    parts = spec.split(":")
    if len(parts) != 4:
        raise ValueError("lambda sweep must be start:stop:{log|lin}:count")
    start, stop = float(parts[0]), float(parts[1])
    spacing = parts[2]
    count = int(parts[3])
    return analysis.lambda_grid(start, stop, count, spacing)


def _cmd_lcurve(args):
    run = _load_run_config(args.config)
    experiment = run.experiment()
    stack = _stack_from_file(args.infile, experiment)
    lambdas = _parse_lambda_spec(args.lambdas)
    nodes = build_node_set(experiment)

    if stack.kind == "total":
        from .transforms import NdftOperator

        operator = NdftOperator(nodes)
        g = inversion.measurements_to_fourier(stack, experiment, nodes)

        def run_one(lam):
            report, _ = inversion.pd_tv_solve(g, nodes, lam, run.J_PD,
                                              operator=operator)
            return report
    else:
        support = phase_retrieval.SupportConstraint.from_config(
            experiment, run.resolved_r_s()
        )

        def run_one(lam):
            return phase_retrieval.io_retrieve(
                stack, experiment, nodes, support, variant="hio",
                inner="pdtv", J_IO=run.J_IO, beta=run.beta, lam=lam,
                J_CG=run.J_CG, J_PD=run.J_PD,
            )

    analysis.lcurve_sweep(run_one, lambdas, table_path=args.out,
                          plot_path=args.plot)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="borntomo",
        description="Born-approximation diffraction tomography pipelines",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="render a phantom to an .odtb file")
    p.add_argument("--spec", required=True,
                   help="JSON primitive file or named:mini-shapes")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("simulate", help="forward-simulate a measurement stack")
    p.add_argument("--config", default=None)
    p.add_argument("--potential", required=True)
    p.add_argument("--model", choices=("conv", "dtot"), default="conv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("noise", help="add noise at an exact relative level")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--level", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_noise)

    p = sub.add_parser("magnitude", help="drop the phase of a complex stack")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_magnitude)

    p = sub.add_parser("reconstruct", help="known-phase inversion")
    p.add_argument("--config", default=None)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--method", choices=("bp", "cg", "pdtv"), default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--tvd", type=float, default=None,
                   help="TV-denoise bp/cg output with this lambda")
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("retrieve", help="intensity-only reconstruction")
    p.add_argument("--config", default=None)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--variant", choices=("er", "hio", "md"), default="hio")
    p.add_argument("--inner", choices=("cg", "pdtv"), default="pdtv")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("metrics", help="print psnr/ssim of a reconstruction")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("lcurve", help="regularization sweep with table + plot")
    p.add_argument("--config", default=None)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--lambdas", default="1e-3:10:log:20",
                   help="start:stop:{log|lin}:count")
    p.add_argument("--out", required=True, help="TSV table path")
    p.add_argument("--plot", default=None, help="PNG path for the curve")
    p.set_defaults(func=_cmd_lcurve)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, storage.OdtbError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
