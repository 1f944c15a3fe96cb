#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace maskforge {

/// Name and static shape of one graph input or output. Symbolic or unknown
/// dimensions are reported as -1.
struct TensorSignature {
    std::string name;
    std::int32_t elem_type = 0;
    std::vector<std::int64_t> dims;
};

/// I/O signature of a serialized ONNX model, read straight from the protobuf
/// wire format (ModelProto.graph -> GraphProto.input / output).
struct GraphSignature {
    std::int64_t ir_version = 0;
    std::vector<TensorSignature> inputs;
    std::vector<TensorSignature> outputs;

    const TensorSignature* input(const std::string& name) const;
    const TensorSignature* output(const std::string& name) const;
};

/// Throws FormatError on malformed or truncated data.
GraphSignature parse_onnx_signature(std::span<const std::uint8_t> bytes);

/// Throws ModelLoadError naming `path` when the file is missing or malformed.
GraphSignature read_onnx_signature(const std::string& path);

} // namespace maskforge
