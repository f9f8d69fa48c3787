import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from audit import RunLedger

from .commands import COMMANDS
from .runconfig import config_hash, load_run_config

logger = logging.getLogger("deepspike")

LOG_FORMAT = "[deepspike] %(levelname)s %(name)s: %(message)s"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="Run configuration (YAML or JSON); defaults built in")
    common.add_argument("--seed", type=int, help="Seed for every seeded stage (overrides the config)")
    common.add_argument("--out", type=str, help="Output directory (overrides the config)")
    common.add_argument(
        "--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level"
    )

    parser = argparse.ArgumentParser(
        prog="deepspike",
        description="Compress, simulate and evaluate a tiny 1-D CNN for artefact-free spike sorting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="Synthesize a recording or a labelled corpus")
    p.add_argument(
        "--kind", choices=["recording", "artefact", "channel", "both"], default="both",
        help="recording container, spike/artefact/noise corpus, channel-selection corpus, or both corpora",
    )

    p = sub.add_parser("train", parents=[common], help="Train the original CNN on a corpus")
    p.add_argument("--data", type=str, help="Corpus .npz from `generate`")
    p.add_argument("--name", default="model", help="Output model name")

    p = sub.add_parser("compress", parents=[common], help="Prune, project, quantize and select")
    p.add_argument("--model", type=str, help="Trained float model JSON")
    p.add_argument("--data", type=str, help="Corpus .npz the model was trained on")
    p.add_argument("--bits", type=int, help="Force this parameter width instead of the selected one")
    p.add_argument("--name", default="optimized", help="Output model name")

    p = sub.add_parser("simulate", parents=[common], help="Run a quantized model on the block pipeline")
    p.add_argument("--model", type=str, help="Quantized model JSON")
    p.add_argument("--input", type=str, help="Corpus .npz or (N, 66) .npy segments")
    p.add_argument("--limit", type=int, help="Classify only the first N segments")
    p.add_argument("--calibrate", type=int, nargs="?", const=42, help="Solve the handshake cost for this delay")
    p.add_argument("--reference-mappers", action="store_true", help="Use the published fused mapper counts")

    p = sub.add_parser("classify", parents=[common], help="Pure forward pass on segments")
    p.add_argument("--model", type=str, help="Model JSON")
    p.add_argument("--input", type=str, help="Corpus .npz or (N, 66) .npy segments")

    p = sub.add_parser("sort", parents=[common], help="Detect, clean, cluster and score a recording")
    p.add_argument("--recording", type=str, help="Recording container directory")
    p.add_argument("--cnn1", type=str, help="Channel-selection model JSON (all channels active when omitted)")
    p.add_argument("--cnn2", type=str, help="Artefact-removal model JSON (every detection kept when omitted)")

    p = sub.add_parser("convert-dataset", parents=[common], help="Convert Wave_Clus .mat files")
    p.add_argument("--mat", nargs="+", required=True, help="Simulator .mat files")

    p = sub.add_parser("report", parents=[common], help="Aggregate sort, compression and trace results")
    p.add_argument("--inputs", nargs="+", required=True, help="Result JSON files")
    return parser


def configure_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level), format=LOG_FORMAT, force=True)


def _field_error(ex: ValidationError) -> str:
    error = ex.errors()[0]
    field_path = ".".join(str(part) for part in error["loc"]) or "<root>"
    return f"config {field_path}: {error['msg']}"


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return EXIT_USAGE if ex.code else EXIT_OK
    configure_logging(args.log_level)

    try:
        cfg = load_run_config(args.config).with_seed(args.seed)
        if args.out:
            cfg = cfg.model_copy(update={"out": args.out})
    except ValidationError as ex:
        logger.error(_field_error(ex))
        return EXIT_USAGE
    except (OSError, ValueError) as ex:
        logger.error("config: %s", ex)
        return EXIT_USAGE

    digest = config_hash(cfg)
    ledger = RunLedger(args.command)
    ledger.log_event("config", config_hash=digest, config=cfg.model_dump(mode="json"))
    code = EXIT_OK
    try:
        result = COMMANDS[args.command](args, cfg, digest, ledger)
        ledger.log_event("result", **result)
        print(json.dumps(result, indent=2, default=str))
    except ValidationError as ex:
        logger.error(_field_error(ex))
        code = EXIT_USAGE
    except ValueError as ex:
        logger.error("%s: %s", args.command, ex)
        code = EXIT_USAGE
    except Exception as ex:
        logger.exception("%s failed: %s", args.command, ex)
        code = EXIT_RUNTIME
    finally:
        ledger.log_event("exit", code=code)
        try:
            ledger.write(f"{cfg.out}/ledger.json")
        except OSError as ex:
            logger.warning("ledger not written: %s", ex)
    return code


if __name__ == "__main__":
    sys.exit(main())
