# main.py
import argparse
import sys

from src.application import Application


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Mamba-CLIP training, evaluation and loss-landscape tools')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--profile', help='Named preset from profiles/ (default: desk)')
    common.add_argument('--config', help='INI file with one [section] per config group, e.g. [train] or [ood]')
    common.add_argument('--checkpoint', help='Checkpoint file (comma-separated list for hessian)')
    common.add_argument('--manifest', help='JSON-lines manifest')
    common.add_argument('--out', help='Output directory')
    common.add_argument('--seed', type=int, help='Root seed for training, perturbations and Lanczos')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help='Override any config key; repeatable')

    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('train', parents=[common], help='Train a CLIP model on a caption-pairs manifest')
    commands.add_parser('eval-zeroshot', parents=[common], help='Zero-shot top-1 on a labeled manifest')
    commands.add_parser('eval-ood', parents=[common], help='Accuracy curves over the perturbation ladders')
    commands.add_parser('eval-stimulus', parents=[common], help='Accuracy on a pre-rendered stimulus set')
    commands.add_parser('shape-bias', parents=[common], help='Shape bias on a cue-conflict manifest')
    perturb = commands.add_parser('perturb', parents=[common], help='Write perturbed copies of a PNG tree')
    perturb.add_argument('--input', dest='input_dir', help='Directory of PNGs to perturb')
    perturb.add_argument('--kind', help='Perturbation kind, e.g. rotation or low-pass')
    perturb.add_argument('--level', type=float, help='Severity level from the kind\'s ladder')
    commands.add_parser('hessian', parents=[common], help='Per-batch top-k Hessian eigenvalues')
    summarize = commands.add_parser('summarize', parents=[common], help='Best model per dataset of a grid')
    summarize.add_argument('--grid', dest='grid_path', help='zeroshot.csv to summarize (default: reference table)')
    synthetic = commands.add_parser('make-synthetic', parents=[common], help='Write the colored-shapes dataset')
    synthetic.add_argument('--per-class', dest='per_class', type=int, help='Images per class (default 4)')
    return parser


def flags_from_args(args: argparse.Namespace) -> dict:
    """Named flags mapped onto config sections; unset flags are None and left alone."""
    return {
        'paths': {'checkpoint': args.checkpoint, 'manifest': args.manifest, 'out': args.out,
                  'grid': getattr(args, 'grid_path', None)},
        'perturb': {'input': getattr(args, 'input_dir', None), 'kind': getattr(args, 'kind', None),
                    'level': getattr(args, 'level', None)},
        'synthetic': {'per_class': getattr(args, 'per_class', None)},
        'train': {'seed': args.seed},
        'ood': {'seed': args.seed},
        'hessian': {'seed': args.seed},
    }


def main(argv=None) -> int:
    """Main entry point; returns 0 only when the command processed every record."""
    args = build_parser().parse_args(argv)
    app = Application()
    return app.run(args.command, profile=args.profile, ini_path=args.config,
                   flags=flags_from_args(args), overrides=tuple(args.overrides))


if __name__ == "__main__":
    sys.exit(main())
