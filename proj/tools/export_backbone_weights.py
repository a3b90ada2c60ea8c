#!/usr/bin/env python3
"""Export ImageNet backbone weights into the pipeline's weights cache.

The training CLI builds its transfer models from `<cache>/<backbone>.weights.bin`,
a little-endian tensor archive (magic ``BUSIPRM1``). This script fills that
cache from the reference Keras implementations:

    python tools/export_backbone_weights.py --backbone resnet50 --out weights_cache
    python tools/export_backbone_weights.py --all --out weights_cache

TensorFlow is only needed to *run* this script; the pipeline itself never
imports it. Install with `pip install tensorflow` (any 2.x release works).

Name mapping
------------
Keras layer names map onto the pipeline's parameter names as follows:

    resnet50   conv1_conv              -> conv1/conv/kernel
               conv1_bn                -> conv1/bn/{gamma,beta,moving_mean,moving_variance}
               convS_blockB_N_conv     -> convS_blockB/convN/kernel       (N in 1..3)
               convS_blockB_N_bn       -> convS_blockB/bnN/...
               convS_blockB_0_conv/bn  -> convS_blockB/{conv_proj,bn_proj}/...
    mobilenet  conv1, conv1_bn         -> conv1/kernel, conv1/bn/...
               conv_dw_I, conv_dw_I_bn -> conv_dw_I/kernel, conv_dw_I/bn/...
               conv_pw_I, conv_pw_I_bn -> conv_pw_I/kernel, conv_pw_I/bn/...
    vgg16      blockB_convN            -> blockB_convN/{kernel,bias}

Kernel layouts already agree (HWIO for convolutions); the Keras depthwise
kernel (k, k, c, 1) is squeezed to the pipeline's (k, k, c).

The pipeline's batch norm uses a fixed epsilon of 1e-3, while Keras models
ship per-layer epsilons (1.001e-5 for ResNet50). The difference is folded
into the exported moving variance so that
sqrt(var_exported + 1e-3) == sqrt(var_keras + eps_keras) exactly.
"""

import argparse
import struct
import sys
from pathlib import Path

import numpy as np

PIPELINE_BN_EPSILON = 1e-3
MAGIC = b"BUSIPRM1"


def write_tensor_file(path, tensors):
    """tensors: list of (name, float64 ndarray), written in list order."""
    with open(path, "wb") as out:
        out.write(MAGIC)
        out.write(struct.pack("<Q", len(tensors)))
        for name, array in tensors:
            array = np.ascontiguousarray(array, dtype="<f8")
            encoded = name.encode("utf-8")
            out.write(struct.pack("<I", len(encoded)))
            out.write(encoded)
            out.write(struct.pack("<I", array.ndim))
            for dim in array.shape:
                out.write(struct.pack("<I", dim))
            out.write(array.tobytes())


def bn_tensors(layer, prefix):
    """gamma/beta/moving stats, with the epsilon difference folded in."""
    gamma, beta, mean, variance = (w.astype(np.float64) for w in layer.get_weights())
    variance = variance + (layer.epsilon - PIPELINE_BN_EPSILON)
    return [
        (prefix + "/gamma", gamma),
        (prefix + "/beta", beta),
        (prefix + "/moving_mean", mean),
        (prefix + "/moving_variance", variance),
    ]


def conv_kernel(layer):
    return layer.get_weights()[0].astype(np.float64)


def export_resnet50(model):
    tensors = [("conv1/conv/kernel", conv_kernel(model.get_layer("conv1_conv")))]
    tensors += bn_tensors(model.get_layer("conv1_bn"), "conv1/bn")
    blocks = [("conv2", 3), ("conv3", 4), ("conv4", 6), ("conv5", 3)]
    for stage, count in blocks:
        for b in range(1, count + 1):
            keras_base = f"{stage}_block{b}"
            ours = f"{stage}_block{b}"
            if b == 1:  # projection shortcut
                tensors.append(
                    (f"{ours}/conv_proj/kernel",
                     conv_kernel(model.get_layer(f"{keras_base}_0_conv")))
                )
                tensors += bn_tensors(
                    model.get_layer(f"{keras_base}_0_bn"), f"{ours}/bn_proj"
                )
            for n in (1, 2, 3):
                tensors.append(
                    (f"{ours}/conv{n}/kernel",
                     conv_kernel(model.get_layer(f"{keras_base}_{n}_conv")))
                )
                tensors += bn_tensors(
                    model.get_layer(f"{keras_base}_{n}_bn"), f"{ours}/bn{n}"
                )
    return tensors


def export_mobilenet(model):
    tensors = [("conv1/kernel", conv_kernel(model.get_layer("conv1")))]
    tensors += bn_tensors(model.get_layer("conv1_bn"), "conv1/bn")
    for i in range(1, 14):
        depthwise = model.get_layer(f"conv_dw_{i}").get_weights()[0]
        tensors.append(
            (f"conv_dw_{i}/kernel", depthwise[:, :, :, 0].astype(np.float64))
        )
        tensors += bn_tensors(model.get_layer(f"conv_dw_{i}_bn"), f"conv_dw_{i}/bn")
        tensors.append(
            (f"conv_pw_{i}/kernel", conv_kernel(model.get_layer(f"conv_pw_{i}")))
        )
        tensors += bn_tensors(model.get_layer(f"conv_pw_{i}_bn"), f"conv_pw_{i}/bn")
    return tensors


def export_vgg16(model):
    tensors = []
    depths = [2, 2, 3, 3, 3]
    for block, depth in enumerate(depths, start=1):
        for conv in range(1, depth + 1):
            name = f"block{block}_conv{conv}"
            kernel, bias = model.get_layer(name).get_weights()
            tensors.append((f"{name}/kernel", kernel.astype(np.float64)))
            tensors.append((f"{name}/bias", bias.astype(np.float64)))
    return tensors


def load_keras_model(backbone):
    # Imported lazily: tensorflow is large and only this tool needs it.
    from tensorflow.keras import applications

    builders = {
        "resnet50": (applications.ResNet50, export_resnet50),
        "mobilenet": (applications.MobileNet, export_mobilenet),
        "vgg16": (applications.VGG16, export_vgg16),
    }
    build, export = builders[backbone]
    model = build(include_top=False, weights="imagenet")
    return export(model)


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="Export Keras ImageNet weights to the busi weights cache."
    )
    parser.add_argument(
        "--backbone",
        choices=["resnet50", "mobilenet", "vgg16"],
        action="append",
        default=[],
        help="backbone to export (repeatable)",
    )
    parser.add_argument("--all", action="store_true", help="export all backbones")
    parser.add_argument(
        "--out", type=Path, required=True, help="weights cache directory"
    )
    args = parser.parse_args(argv)

    backbones = ["resnet50", "mobilenet", "vgg16"] if args.all else args.backbone
    if not backbones:
        parser.error("pass --backbone NAME (repeatable) or --all")

    args.out.mkdir(parents=True, exist_ok=True)
    for backbone in backbones:
        print(f"exporting {backbone}...", flush=True)
        tensors = load_keras_model(backbone)
        target = args.out / f"{backbone}.weights.bin"
        write_tensor_file(target, tensors)
        total = sum(int(np.prod(a.shape)) for _, a in tensors)
        print(f"  wrote {target} ({len(tensors)} tensors, {total:,} values)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
