"""
Command-line interface.

One subcommand per analysis stage plus ``simulate`` and ``run``. Library code
raises MkidError subclasses; this module is the only place that turns them into
exit codes and the JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from mkidlab import __version__, pipeline
from mkidlab.config import PipelineConfig, load_config
from mkidlab.errors import MkidError

logger = logging.getLogger(__name__)

INTERNAL_ERROR_EXIT = 1

EPILOG = """
Examples:
  # Synthetic data with the default truths, then the whole analysis
  mkidlab simulate --output data/
  mkidlab run --output results/ --seed 7

  # Stage by stage
  mkidlab resonance-fit --input data/sweep.csv --output out/
  mkidlab resonance-fit --input data/temperature_sweeps --output out/
  mkidlab gap-fit --input data/qi_series.csv --input other/qi_series.csv --output out/
  mkidlab iq-calibrate --input data/calibration --records data/iq_records.json \\
    --noise data/iq_noise.json --output out/
  mkidlab trigger-align --input out/phase_records.json --output out/
  mkidlab offilter --input out/aligned_records.json --noise out/phase_noise.json --output out/
  mkidlab spectrum-fit --input out/off_values.csv --output out/

Exit codes: 0 ok, 2 config error, 3 I/O error, 4 numerical failure.
"""


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="YAML or JSON pipeline config (default: configs/default.yaml)")
    p.add_argument("--output", type=Path, required=True, help="Existing output directory")
    p.add_argument("--seed", type=int, default=None, help="Override the config seed")
    p.add_argument("--verbose", action="store_true", help="Debug logging on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mkidlab",
        description="MKID photon analysis - resonance and gap fits, IQ calibration, optimum filter, photon spectra",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _common(p)
        return p

    add("simulate", "Write seeded synthetic sweeps, Qi(T), calibration scans and IQ records")

    p = add("resonance-fit", "Fit the S21 resonance model to a sweep CSV or a directory of temperature sweeps")
    p.add_argument("--input", type=Path, required=True, help="Sweep CSV, or directory of sweep CSVs with sidecars")

    p = add("gap-fit", "Fit the gap to one or more 1/Qi(T) series and combine them")
    p.add_argument("--input", type=Path, action="append", required=True,
                   help="QiSeries CSV with JSON sidecar (repeat for several resonators)")

    p = add("iq-calibrate", "Fit the IQ calibration chain and convert raw IQ records to phase")
    p.add_argument("--input", type=Path, required=True, help="Calibration directory")
    p.add_argument("--records", type=Path, default=None, help="Raw IQ photon records to convert")
    p.add_argument("--noise", type=Path, default=None, help="Raw IQ noise records to convert")

    p = add("trigger-align", "Detect pulse onsets, classify records and align them")
    p.add_argument("--input", type=Path, required=True, help="Phase-channel records")

    p = add("offilter", "Build the optimum filter and estimate per-event amplitudes")
    p.add_argument("--input", type=Path, required=True, help="Aligned phase records")
    p.add_argument("--noise", type=Path, required=True, help="Pulse-free phase records")

    p = add("spectrum-fit", "Fit the photon-number spectrum to OFF values")
    p.add_argument("--input", type=Path, required=True, help="OFF values CSV")
    p.add_argument("--sigma", type=float, default=None,
                   help="Gaussian width held fixed (default: resolution from offilter.json beside the input)")

    add("run", "simulate, every analysis stage and the tolerance report in one directory")
    return parser


def _stage(args: argparse.Namespace, config: PipelineConfig) -> dict:
    out = args.output
    stages: Dict[str, Callable[[], dict]] = {
        "simulate": lambda: pipeline.simulate(config, out),
        "resonance-fit": lambda: pipeline.resonance_fit(config, args.input, out),
        "gap-fit": lambda: pipeline.gap_fit(config, args.input, out),
        "iq-calibrate": lambda: pipeline.iq_calibrate(config, args.input, out, args.records, args.noise),
        "trigger-align": lambda: pipeline.trigger_align(config, args.input, out),
        "offilter": lambda: pipeline.offilter(config, args.input, args.noise, out),
        "spectrum-fit": lambda: pipeline.spectrum_fit(config, args.input, out, args.sigma),
        "run": lambda: pipeline.run(config, out),
    }
    return stages[args.command]()


def _fail(err: BaseException, code: int) -> int:
    print(f"✗ Error: {err}", file=sys.stderr)
    print(json.dumps({"error": type(err).__name__, "message": str(err), "exit_code": code}), file=sys.stderr)
    return code


def _print_summary(command: str, summary: dict, output: Path) -> None:
    if command == "run":
        status = "REJECTED" if summary["rejected"] else "all checks passed"
        print(f"✓ Pipeline complete ({status})")
        for name, c in sorted(summary["checks"].items()):
            flag = "✗" if c["triggered"] else "✓"
            print(f"  {flag} {name}: recovered {c['value']:.6g}, truth {c['truth']:.6g}")
        print(f"  Report: {output / 'pipeline_report.md'}")
        return
    print(f"✓ {command} complete")
    for k, v in summary.items():
        if isinstance(v, float):
            print(f"  {k}: {v:.6g}")
        elif not isinstance(v, (dict, list)):
            print(f"  {k}: {v}")
    print(f"  Output: {output}")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else config.level,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        logger.debug("running %s with seed %d", args.command, config.seed)
        summary = _stage(args, config)
    except MkidError as e:
        return _fail(e, e.exit_code)
    except Exception as e:  # noqa: BLE001
        logger.debug("unhandled error", exc_info=True)
        return _fail(e, INTERNAL_ERROR_EXIT)

    _print_summary(args.command, summary, args.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
