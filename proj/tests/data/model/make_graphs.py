"""Writes the tiny encoder/decoder pair used by the neural backend tests.

Run from this directory: python3 make_graphs.py
"""
import json

import numpy as np
import onnx
from onnx.reference import ReferenceEvaluator
from onnx import TensorProto, helper

S, C, E, G, D, K = 32, 2, 8, 8, 4, 3


def encoder():
    image = helper.make_tensor_value_info("image", TensorProto.FLOAT, [1, 3, S, S])
    out = helper.make_tensor_value_info("image_embeddings", TensorProto.FLOAT, [1, C, E, E])
    nodes = [
        helper.make_node("AveragePool", ["image"], ["pooled"], kernel_shape=[S // E, S // E], strides=[S // E, S // E]),
        helper.make_node("Constant", [], ["starts"], value=helper.make_tensor("s", TensorProto.INT64, [1], [0])),
        helper.make_node("Constant", [], ["ends"], value=helper.make_tensor("e", TensorProto.INT64, [1], [C])),
        helper.make_node("Constant", [], ["axes"], value=helper.make_tensor("a", TensorProto.INT64, [1], [1])),
        helper.make_node("Slice", ["pooled", "starts", "ends", "axes"], ["image_embeddings"]),
    ]
    graph = helper.make_graph(nodes, "encoder", [image], [out])
    return helper.make_model(graph, opset_imports=[helper.make_opsetid("", 17)])


def decoder():
    inputs = [
        helper.make_tensor_value_info("image_embeddings", TensorProto.FLOAT, [1, C, E, E]),
        helper.make_tensor_value_info("point_coords", TensorProto.FLOAT, [1, "num_points", 2]),
        helper.make_tensor_value_info("point_labels", TensorProto.FLOAT, [1, "num_points"]),
        helper.make_tensor_value_info("mask_input", TensorProto.FLOAT, [1, 1, G, G]),
        helper.make_tensor_value_info("has_mask_input", TensorProto.FLOAT, [1]),
    ]
    outputs = [
        helper.make_tensor_value_info("low_res_masks", TensorProto.FLOAT, [1, K, G, G]),
        helper.make_tensor_value_info("iou_predictions", TensorProto.FLOAT, [1, K]),
        helper.make_tensor_value_info("iou_hidden", TensorProto.FLOAT, [1, K, D]),
    ]
    nodes = [
        helper.make_node("ReduceMean", ["image_embeddings"], ["plane"], axes=[1], keepdims=1),
        helper.make_node("Mul", ["mask_input", "has_mask_input"], ["prior"]),
        helper.make_node("Add", ["plane", "prior"], ["logit"]),
        helper.make_node("Concat", ["logit"] * K, ["low_res_masks"], axis=1),
        helper.make_node("ReduceMean", ["low_res_masks"], ["iou4"], axes=[2, 3], keepdims=0),
        helper.make_node("Sigmoid", ["iou4"], ["iou_predictions"]),
        helper.make_node("Unsqueeze", ["iou_predictions", "last"], ["iou3"]),
        helper.make_node("Concat", ["iou3"] * D, ["iou_hidden"], axis=2),
    ]
    last = helper.make_tensor("last", TensorProto.INT64, [1], [2])
    graph = helper.make_graph(nodes, "decoder", inputs, outputs, initializer=[last])
    return helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])


def main():
    for name, model in (("encoder.onnx", encoder()), ("decoder.onnx", decoder())):
        model.ir_version = 8
        onnx.checker.check_model(model, full_check=True)
        onnx.save(model, name)
    manifest = {
        "format_version": 1,
        "input_size": S,
        "padding": "bottom_right",
        "pixel_mean": [123.675, 116.28, 103.53],
        "pixel_std": [58.395, 57.12, 57.375],
        "embedding": {"height": E, "width": E, "channels": C},
        "prompt_grid": {"height": G, "width": G},
        "logit_grid": {"height": G, "width": G},
        "hidden_dim": D,
        "num_candidates": K,
        "encoder": {"file": "encoder.onnx", "input": "image", "output": "image_embeddings"},
        "decoder": {
            "file": "decoder.onnx",
            "inputs": {
                "embeddings": "image_embeddings",
                "point_coords": "point_coords",
                "point_labels": "point_labels",
                "mask_input": "mask_input",
                "has_mask_input": "has_mask_input",
            },
            "outputs": {"logits": "low_res_masks", "iou": "iou_predictions", "hidden": "iou_hidden"},
        },
    }
    with open("manifest.json", "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    write_reference()


def write_reference():
    """Reference outputs for fixed inputs, used to check the test runner."""
    image = (np.arange(3 * S * S, dtype=np.float32) % 7 - 3).reshape(1, 3, S, S)
    (emb,) = ReferenceEvaluator("encoder.onnx").run(None, {"image": image})
    mask = (np.arange(G * G, dtype=np.float32) % 5 - 2).reshape(1, 1, G, G)
    feeds = {
        "image_embeddings": emb,
        "point_coords": np.array([[[3.0, 4.0], [0.0, 0.0]]], dtype=np.float32),
        "point_labels": np.array([[1.0, -1.0]], dtype=np.float32),
        "mask_input": mask,
        "has_mask_input": np.array([1.0], dtype=np.float32),
    }
    logits, iou, hidden = ReferenceEvaluator("decoder.onnx").run(None, feeds)
    ref = {
        "image": {"shape": list(image.shape), "rule": "(i % 7) - 3"},
        "mask_input": {"shape": list(mask.shape), "rule": "(i % 5) - 2"},
        "embeddings": emb.ravel().tolist(),
        "logits": logits.ravel().tolist(),
        "iou": iou.ravel().tolist(),
        "hidden": hidden.ravel().tolist(),
    }
    with open("reference.json", "w") as f:
        json.dump(ref, f)
        f.write("\n")


if __name__ == "__main__":
    main()
