"""Command-line interface.

Subcommands: header, simulate, ica, analyze, export.  Exit codes: 0 ok,
2 I/O or parse failure, 3 numerical/degenerate failure, 64 usage or
configuration error.  Reports go to stdout, diagnostics to stderr.
All outputs are deterministic for fixed flags, seed and input bytes.
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK = 0
EXIT_IO = 2
EXIT_NUMERICAL = 3
EXIT_USAGE = 64

_THREAD_ENV = "TSICA_THREADS"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors exit with the usage code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(EXIT_USAGE, message)


def _apply_thread_env():
    threads = os.environ.get(_THREAD_ENV)
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def _read_config_file(path) -> dict:
    values = {}
    try:
        with open(path, "r", encoding="ascii") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#") or "=" not in line:
                    continue
                key, _, val = line.partition("=")
                values[key.strip().replace("-", "_")] = val.strip()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config file: {exc}") from exc
    return values


def _build_parser() -> _Parser:
    parser = _Parser(prog="tsica",
                     description="Spatial/temporal ICA on 4D volumes")
    sub = parser.add_subparsers(dest="command", required=True)

    p_header = sub.add_parser("header", help="dump every header field")
    p_header.add_argument("path")

    p_sim = sub.add_parser("simulate", help="generate a phantom data set")
    p_sim.add_argument("variant", choices=["multisignal", "event", "wave"])
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--format", choices=["nii", "pair", "analyze"], default="nii")

    p_ica = sub.add_parser("ica", help="run ICA on a volume")
    p_ica.add_argument("input")
    p_ica.add_argument("--config", help="key=value file mirroring the flags; flags win")
    p_ica.add_argument("--orientation", choices=["spatial", "temporal"],
                       default=None)
    p_ica.add_argument("--components", default=None,
                       help="'auto' or a fixed count (default auto)")
    p_ica.add_argument("--seed", type=int, default=None)
    p_ica.add_argument("--mask", default=None, help="mask volume path")
    p_ica.add_argument("--fwhm", default=None,
                       help="smoothing FWHM in mm per axis, e.g. 6,6,6")
    p_ica.add_argument("--scheme", choices=["deflation", "symmetric"], default=None)
    p_ica.add_argument("--tol", type=float, default=None)
    p_ica.add_argument("--max-iter", type=int, default=None)
    p_ica.add_argument("--standardize", action="store_true", default=None)
    p_ica.add_argument("--out", required=True, help="output directory")
    p_ica.add_argument("--format", choices=["nii", "pair", "analyze"], default=None)

    p_an = sub.add_parser("analyze", help="characterize a saved decomposition")
    p_an.add_argument("decomposition", help="directory written by 'ica'")
    p_an.add_argument("--references", default=None,
                      help="tabular file of reference time courses")
    p_an.add_argument("--thresholds", default=None,
                      help="comma list of binarization quantiles, one per "
                           "reference; enables binary-correlation assignment")
    p_an.add_argument("--q-hi", type=float, default=0.9)
    p_an.add_argument("--q-lo", type=float, default=0.1)
    p_an.add_argument("--out", default=None,
                      help="directory for the report and thresholded masks "
                           "(default: the decomposition directory)")

    p_ex = sub.add_parser("export", help="export a slice image or time course")
    p_ex.add_argument("input", help="volume file")
    p_ex.add_argument("--slice-axis", choices=["x", "y", "z"], default="z")
    p_ex.add_argument("--slice-index", type=int, default=0)
    p_ex.add_argument("--time", type=int, default=0, help="time frame to slice")
    p_ex.add_argument("--signed", action="store_true",
                      help="two-color diverging palette around zero")
    p_ex.add_argument("--overlay", default=None,
                      help="mask volume; overlay pixels only where true")
    p_ex.add_argument("--timecourse", default=None, metavar="X,Y,Z",
                      help="also export this voxel's time course (tsv + plot)")
    p_ex.add_argument("--out", required=True, help="output image path (.png)")

    return parser


# --- commands -------------------------------------------------------------


def cmd_header(args) -> int:
    from . import volio
    from .errors import TsicaError

    try:
        fields = volio.header_field_dump(args.path)
    except (OSError, TsicaError) as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    for name, value in fields:
        print(f"{name}: {value}")
    return EXIT_OK


def _write_volume(vol, path_stem, container, datatype_code=64):
    from . import volio

    header = volio.default_header(
        vol, datatype_code=datatype_code,
        format_kind={"nii": "nifti_single", "pair": "nifti_pair",
                     "analyze": "analyze75"}[container])
    if container == "nii":
        out = path_stem + ".nii"
        volio.write_nifti(vol, header, out, mode="single")
    elif container == "pair":
        out = path_stem + ".hdr"
        volio.write_nifti(vol, header, path_stem, mode="pair")
    else:
        out = path_stem + ".hdr"
        volio.write_analyze(vol, header, path_stem)
    return out


def cmd_simulate(args) -> int:
    import numpy as np

    from . import simulate, volio
    from .analysis import write_timecourse_table

    sim = simulate.SIMULATORS[args.variant]
    vol, truth = sim(seed=args.seed)
    try:
        os.makedirs(args.out, exist_ok=True)
        _write_volume(vol, os.path.join(args.out, "volume"), args.format)
        labels = volio.Volume4D(truth.region_labels.astype(np.float64),
                                vol.voxel_size, vol.time_step)
        _write_volume(labels, os.path.join(args.out, "region_labels"),
                      args.format, datatype_code=4)
        names = [f"source_{j + 1}" for j in range(truth.n_tubes)]
        write_timecourse_table(os.path.join(args.out, "references.tsv"), names,
                               [truth.references[:, j] for j in range(truth.n_tubes)])
        with open(os.path.join(args.out, "info.txt"), "w", encoding="ascii") as fh:
            fh.write(f"variant={truth.kind}\n")
            fh.write(f"seed={truth.seed}\n")
            fh.write(f"frames={truth.references.shape[0]}\n")
            if truth.event_counts:
                fh.write("event_counts=" +
                         " ".join(str(c) for c in truth.event_counts) + "\n")
    except OSError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc

    print(f"variant: {truth.kind}")
    print(f"frames: {truth.references.shape[0]}")
    for j in range(truth.n_tubes):
        pure = int(np.sum(truth.pure_masks[j]))
        full = int(np.sum(truth.tube_mask(j)))
        print(f"tube {j + 1}: pure voxels {pure}, full region {full}")
    print(f"background voxels: {int(np.sum(truth.background_mask))}")
    return EXIT_OK


def _parse_fwhm(text):
    parts = [p for p in str(text).split(",") if p != ""]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise CliError(EXIT_USAGE, f"--fwhm needs 1 or 3 values, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, f"bad --fwhm value {text!r}") from exc


def _merge_config(args):
    """Config-file values fill in flags the user left at their defaults."""
    defaults = {
        "orientation": "temporal", "components": "auto", "seed": 0,
        "mask": None, "fwhm": "0", "scheme": "deflation",
        "tol": None, "max_iter": None, "standardize": False, "format": "nii",
    }
    conf = _read_config_file(args.config) if args.config else {}
    merged = {}
    for key, default in defaults.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = flag_value
        elif key in conf:
            merged[key] = conf[key]
        else:
            merged[key] = default
    return merged


def cmd_ica(args) -> int:
    import numpy as np

    from . import pipeline, volio
    from .errors import TsicaError

    opt = _merge_config(args)
    components = opt["components"]
    if components != "auto":
        try:
            components = int(components)
        except ValueError:
            raise CliError(EXIT_USAGE,
                           f"--components must be 'auto' or an integer, got {components!r}")
    try:
        config = pipeline.IcaRunConfig(
            orientation=opt["orientation"],
            components=components,
            seed=int(opt["seed"]),
            fwhm=_parse_fwhm(opt["fwhm"]),
            scheme=opt["scheme"],
            tol=float(opt["tol"]) if opt["tol"] is not None else pipeline.fastica.DEFAULT_TOL,
            max_iter=int(opt["max_iter"]) if opt["max_iter"] is not None
            else pipeline.fastica.DEFAULT_MAX_ITER,
            standardize=bool(opt["standardize"]),
        )
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from exc

    try:
        volume, _ = volio.read_volume(args.input)
    except OSError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    except TsicaError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc

    mask = None
    if opt["mask"]:
        try:
            mask_vol, _ = volio.read_volume(opt["mask"])
        except OSError as exc:
            raise CliError(EXIT_IO, str(exc)) from exc
        except TsicaError as exc:
            raise CliError(EXIT_IO, str(exc)) from exc
        if mask_vol.extents[:3] != volume.extents[:3]:
            raise CliError(EXIT_USAGE,
                           f"mask extents {mask_vol.extents[:3]} do not match "
                           f"volume {volume.extents[:3]}")
        mask = pipeline.MaskVolume(mask_vol.data[..., 0] != 0.0)

    try:
        decomposition = pipeline.run_ica(volume, mask, config)
        pipeline.save_decomposition(decomposition, args.out,
                                    voxel_size=volume.voxel_size,
                                    time_step=volume.time_step,
                                    container=opt["format"])
    except OSError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    except TsicaError as exc:
        raise CliError(EXIT_NUMERICAL, str(exc)) from exc

    unmix = decomposition.unmixing
    print(f"components: {decomposition.n_components}")
    print(f"orientation: {decomposition.orientation}")
    print(f"seed: {decomposition.seed}")
    n_conv = int(np.sum(unmix.converged))
    print(f"converged: {n_conv}/{decomposition.n_components} "
          f"(max {int(np.max(unmix.iterations))} iterations)")
    return EXIT_OK


def cmd_analyze(args) -> int:
    import numpy as np

    from . import analysis, pipeline, volio
    from .errors import NoDominantBin, TsicaError

    try:
        stored = pipeline.load_decomposition(args.decomposition)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_IO, str(exc)) from exc

    outdir = args.out or args.decomposition
    os.makedirs(outdir, exist_ok=True)
    m = stored.timecourses.shape[1]
    lines = []
    degenerate = 0
    freqs = {}
    for k in range(m):
        try:
            f, ph, mag = analysis.dominant_frequency_phase(
                stored.timecourses[:, k], dt=stored.time_step)
            freqs[k] = (f, ph)
            lines.append(f"component_{k + 1}: frequency={f:.6g} Hz "
                         f"phase={ph:.4f} rad magnitude={mag:.6g}")
        except NoDominantBin:
            degenerate += 1
            lines.append(f"component_{k + 1}: degenerate (no dominant bin)")

    if args.references:
        try:
            _, refs = analysis.read_timecourse_table(args.references)
        except (OSError, ValueError) as exc:
            raise CliError(EXIT_IO, str(exc)) from exc
        comps = [stored.timecourses[:, k] for k in range(m)]
        ref_cols = [refs[:, j] for j in range(refs.shape[1])]
        try:
            if args.thresholds:
                quantiles = [float(q) for q in args.thresholds.split(",")]
                if len(quantiles) != len(ref_cols):
                    raise CliError(EXIT_USAGE,
                                   "need one threshold per reference column")
                assign = analysis.binary_assign(comps, ref_cols, quantiles)
                kind = "binary"
            else:
                assign = analysis.pearson_assign(comps, ref_cols)
                kind = "pearson"
            resolved = analysis.resolve_conflicts(assign, comps)
        except TsicaError as exc:
            raise CliError(EXIT_NUMERICAL, str(exc)) from exc
        lines.append(f"assignment={kind}")
        for k in sorted(assign.pairs):
            j, score = assign.pairs[k]
            final = "kept" if k in resolved.pairs else "unassigned"
            lines.append(f"component_{k + 1}: reference={j + 1} "
                         f"score={score:+.4f} status={final}")

        for k in sorted(resolved.pairs):
            j, score = resolved.pairs[k]
            if k < len(stored.maps):
                sign = 1 if score >= 0 else -1
                kept = analysis.threshold_two_sided(stored.maps[k],
                                                    args.q_hi, args.q_lo, sign)
                vol = volio.Volume4D(kept.astype(np.float64))
                header = volio.default_header(vol, datatype_code=2)
                volio.write_nifti(vol, header,
                                  os.path.join(outdir, f"mask_component_{k + 1:02d}.nii"))

    report = "\n".join(lines) + "\n"
    with open(os.path.join(outdir, "report.txt"), "w", encoding="ascii") as fh:
        fh.write(report)
    sys.stdout.write(report)
    return EXIT_NUMERICAL if degenerate else EXIT_OK


def cmd_export(args) -> int:
    import numpy as np

    from . import volio
    from .analysis import write_timecourse_table
    from .errors import TsicaError
    from .export import render_slice, render_timecourse

    try:
        volume, _ = volio.read_volume(args.input)
    except OSError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    except TsicaError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc

    axis = "xyz".index(args.slice_axis)
    if not 0 <= args.slice_index < volume.extents[axis]:
        raise CliError(EXIT_USAGE,
                       f"slice index {args.slice_index} outside 0.."
                       f"{volume.extents[axis] - 1}")
    if not 0 <= args.time < volume.extents[3]:
        raise CliError(EXIT_USAGE, f"time {args.time} outside volume")

    frame = volume.data[..., args.time]
    plane = np.take(frame, args.slice_index, axis=axis)

    overlay = None
    if args.overlay:
        try:
            mask_vol, _ = volio.read_volume(args.overlay)
        except (OSError, TsicaError) as exc:
            raise CliError(EXIT_IO, str(exc)) from exc
        if mask_vol.extents[:3] != volume.extents[:3]:
            raise CliError(EXIT_USAGE, "overlay extents do not match volume")
        overlay = np.take(mask_vol.data[..., 0] != 0.0, args.slice_index, axis=axis)

    try:
        render_slice(plane, args.out, signed=args.signed, overlay=overlay)
    except OSError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    print(f"wrote {args.out}")

    if args.timecourse:
        try:
            x, y, z = (int(v) for v in args.timecourse.split(","))
        except ValueError as exc:
            raise CliError(EXIT_USAGE, f"bad --timecourse {args.timecourse!r}") from exc
        nx, ny, nz, _ = volume.extents
        if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
            raise CliError(EXIT_USAGE, f"voxel ({x},{y},{z}) outside volume")
        series = volume.data[x, y, z, :]
        stem = os.path.splitext(args.out)[0] + f"_tc_{x}_{y}_{z}"
        write_timecourse_table(stem + ".tsv", [f"voxel_{x}_{y}_{z}"], [series])
        render_timecourse(series, stem + ".png")
        print(f"wrote {stem}.tsv")
        print(f"wrote {stem}.png")
    return EXIT_OK


_COMMANDS = {
    "header": cmd_header,
    "simulate": cmd_simulate,
    "ica": cmd_ica,
    "analyze": cmd_analyze,
    "export": cmd_export,
}


def main(argv=None) -> int:
    _apply_thread_env()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"tsica: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"tsica: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
