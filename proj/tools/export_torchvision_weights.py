#!/usr/bin/env python3
"""Convert torchvision ImageNet backbones into leukopipe weight archives.

Writes <out>/<arch>.lkpw and <out>/<arch>.lkpw.sha256. With --reference,
also writes <out>/<arch>.reference.lkpw holding a fixed input batch and
the backbone's pooled features for it (eval mode), used to cross-check the
C++ forward pass.
"""

import argparse
import hashlib
import struct
import sys
from pathlib import Path

import torch
import torchvision

ARCHS = {
    "resnet50": ("resnet50", "ResNet50_Weights"),
    "resnet101": ("resnet101", "ResNet101_Weights"),
    "effnet_b0": ("efficientnet_b0", "EfficientNet_B0_Weights"),
    "effnet_b1": ("efficientnet_b1", "EfficientNet_B1_Weights"),
    "effnet_b3": ("efficientnet_b3", "EfficientNet_B3_Weights"),
}


def write_archive(path, tensors):
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(b"LKPW")
        f.write(struct.pack("<II", 1, len(tensors)))
        for name, t in tensors:
            data = t.detach().to(torch.float32).contiguous().cpu()
            raw = name.encode()
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", data.dim()))
            f.write(struct.pack("<%dq" % data.dim(), *data.shape))
            f.write(data.numpy().astype("<f4").tobytes())
    tmp.replace(path)


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build(arch, pretrained, seed):
    fn_name, weights_name = ARCHS[arch]
    if pretrained:
        weights = getattr(torchvision.models, weights_name).IMAGENET1K_V1
        return getattr(torchvision.models, fn_name)(weights=weights)
    torch.manual_seed(seed)
    model = getattr(torchvision.models, fn_name)(weights=None)
    # Non-trivial running statistics so the comparison exercises them.
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, torch.nn.BatchNorm2d):
                m.running_mean.uniform_(-0.1, 0.1)
                m.running_var.uniform_(0.5, 1.5)
                m.weight.uniform_(0.5, 1.5)
                m.bias.uniform_(-0.1, 0.1)
    return model


def pooled_features(model, arch, x):
    if arch.startswith("resnet"):
        m = model
        h = m.maxpool(m.relu(m.bn1(m.conv1(x))))
        h = m.layer4(m.layer3(m.layer2(m.layer1(h))))
        return torch.flatten(m.avgpool(h), 1)
    return torch.flatten(model.avgpool(model.features(x)), 1)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--arch", required=True, choices=sorted(ARCHS))
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--random-init", action="store_true", help="seeded random weights instead of ImageNet")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--reference", action="store_true")
    ap.add_argument("--batch", type=int, default=2)
    args = ap.parse_args()

    try:
        model = build(args.arch, not args.random_init, args.seed)
    except Exception as e:  # download failures surface here
        print(f"cannot obtain weights for {args.arch}: {e}", file=sys.stderr)
        return 1
    model.eval()
    args.out.mkdir(parents=True, exist_ok=True)

    tensors = [(k, v) for k, v in model.state_dict().items() if not k.endswith("num_batches_tracked")]
    blob = args.out / f"{args.arch}.lkpw"
    write_archive(blob, tensors)
    (args.out / f"{args.arch}.lkpw.sha256").write_text(sha256(blob) + "\n")

    if args.reference:
        g = torch.Generator().manual_seed(args.seed + 1)
        x = torch.randn(args.batch, 3, 224, 224, generator=g)
        with torch.no_grad():
            feats = pooled_features(model, args.arch, x)
        write_archive(args.out / f"{args.arch}.reference.lkpw", [("input", x), ("features", feats)])
    print(f"wrote {blob} ({len(tensors)} tensors)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
