import argparse
import logging
import sys
from typing import Optional, Sequence

from .. import __version__
from ..config import VALID_LOG_LEVELS
from ..exceptions import ConfigError, MidiVaeError
from ..logs import get_logger
from .commands import COMMANDS
from .run_config import load_run_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _checkpoint(parser: argparse.ArgumentParser):
    parser.add_argument('--checkpoint', default=None, help="model checkpoint (default: <out>/model.mvae)")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog='midivae', description="Train and use a multi-track MIDI style-transfer VAE.")
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    parser.add_argument('--config', default=None, help="flat 'key = value' run configuration")
    parser.add_argument('--seed', type=int, default=None, help="overrides 'seed' from the config")
    parser.add_argument('--out', default=None, help="overrides 'output_dir' from the config")
    parser.add_argument('--log-level', default='INFO', choices=VALID_LOG_LEVELS)
    parser.add_argument('--log-file', default=None)
    sub = parser.add_subparsers(dest='command', metavar='command', parser_class=_ArgumentParser)
    sub.required = True

    p = sub.add_parser('make-toy', help="write the synthetic two-style corpus")
    p.add_argument('--root', default=None, help="target directory (default: dataset_root)")
    p.add_argument('--songs-per-style', type=int, default=40)
    p.add_argument('--bars-per-song', type=int, default=16)

    sub.add_parser('prepare', help="encode <dataset_root>/<style>/*.mid into the dataset cache")

    p = sub.add_parser('train', help="train the model on the prepared dataset")
    p.add_argument('--progress', action='store_true', help="show a progress bar")

    p = sub.add_parser('eval', help="reconstruction, transfer and instrument-switch reports")
    _checkpoint(p)

    p = sub.add_parser('transfer', help="move a MIDI file from one style to another")
    _checkpoint(p)
    p.add_argument('input')
    p.add_argument('output')
    p.add_argument('--source', required=True, help="style name or index")
    p.add_argument('--target', required=True, help="style name or index")

    p = sub.add_parser('interpolate', help="latent walk from the first bar of A to the first bar of B")
    _checkpoint(p)
    p.add_argument('input_a')
    p.add_argument('input_b')
    p.add_argument('output')
    p.add_argument('--steps', type=int, default=8)

    p = sub.add_parser('medley', help="A, interpolated bridge bars, then B")
    _checkpoint(p)
    p.add_argument('input_a')
    p.add_argument('input_b')
    p.add_argument('output')
    p.add_argument('--bridge-bars', type=int, default=4)

    p = sub.add_parser('mix', help="bar-wise mixture (1 - alpha) A + alpha B")
    _checkpoint(p)
    p.add_argument('input_a')
    p.add_argument('input_b')
    p.add_argument('output')
    p.add_argument('--alpha', type=float, default=0.5)

    p = sub.add_parser('sample', help="decode a song sampled from the latent prior")
    _checkpoint(p)
    p.add_argument('output')
    p.add_argument('--bars', type=int, default=8)
    p.add_argument('--style', default=None, help="style name or index")

    p = sub.add_parser('sweep', help="correlate every latent dimension with the bar metrics")
    _checkpoint(p)
    p.add_argument('--samples', type=int, default=20)
    p.add_argument('--output', default=None, help="csv path (default: <out>/sweep.csv)")

    p = sub.add_parser('export-latents', help="write mu_z of every bar as csv")
    _checkpoint(p)
    p.add_argument('--output', default=None, help="csv path (default: <out>/latents.csv)")
    return parser


def _fail(exc: BaseException) -> None:
    message = ' '.join(str(exc).split())
    print(f"midivae: error={type(exc).__name__} message={message}", file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        rc = load_run_config(args.config, seed=args.seed, output_dir=args.out)
        get_logger(log_level=args.log_level, log_file=args.log_file, command=args.command)
    except ConfigError as exc:
        _fail(exc)
        return EXIT_USAGE
    except OSError as exc:
        _fail(exc)
        return EXIT_USAGE

    try:
        return COMMANDS[args.command](rc, args)
    except ConfigError as exc:
        _fail(exc)
        return EXIT_USAGE
    except (MidiVaeError, OSError) as exc:
        _fail(exc)
        return EXIT_FAILURE
    except Exception as exc:
        logger.debug("Unexpected failure", exc_info=True)
        _fail(exc)
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
