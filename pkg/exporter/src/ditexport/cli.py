"""Export CLI: pull conditioning tensors out of a checkpoint into NPY files."""

from __future__ import annotations

import argparse
import sys

from .errors import ExportError
from .export import export_all


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="ditexport", description=__doc__)
    p.add_argument("command", choices=["export"])
    p.add_argument("--checkpoint", required=True, help=".pt/.pth/.ckpt/.safetensors file")
    p.add_argument("--model-family", default="dit",
                   help="state-dict naming convention (dit covers the DiT lineage; generic tries fuzzy patterns)")
    p.add_argument("--model-name", default=None, help="recorded in sidecars; defaults to the family")
    p.add_argument("--timesteps", default="999",
                   help="comma-separated diffusion times, first entry is the condition timestep")
    p.add_argument("--class-key", default=None, help="explicit class-table key override")
    p.add_argument("--out", required=True, help="output directory")
    args = p.parse_args(argv)

    try:
        timesteps = [float(t) for t in args.timesteps.split(",") if t]
        manifest = export_all(
            checkpoint=args.checkpoint,
            out_dir=args.out,
            model_name=args.model_name or args.model_family,
            timesteps=timesteps,
            family=args.model_family,
            class_key=args.class_key,
        )
    except (ExportError, ValueError) as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 1
    shapes = {e["name"]: e["shape"] for e in manifest["tensors"]}
    print(f"exported {len(manifest['tensors'])} tensors to {args.out}: {shapes}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
