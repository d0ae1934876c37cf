#!/usr/bin/env python3
"""Export seeded random-init torchvision backbones with reference features.

usage: export_parity.py <exporter script> <out dir>
"""

import subprocess
import sys

ARCHS = ["resnet50", "resnet101", "effnet_b0", "effnet_b1", "effnet_b3"]


def main():
    exporter, out = sys.argv[1], sys.argv[2]
    for seed, arch in enumerate(ARCHS):
        cmd = [sys.executable, exporter, "--arch", arch, "--out", out, "--random-init", "--reference",
               "--seed", str(seed + 1)]
        if subprocess.call(cmd) != 0:
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
