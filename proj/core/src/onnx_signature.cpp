#include "maskforge/onnx_signature.hpp"

#include "maskforge/error.hpp"

#include <fstream>
#include <iterator>

namespace maskforge {

namespace {

class WireReader {
public:
    explicit WireReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    bool done() const noexcept { return pos_ >= bytes_.size(); }

    std::uint64_t varint() {
        std::uint64_t value = 0;
        for (int shift = 0; shift < 64; shift += 7) {
            if (pos_ >= bytes_.size()) {
                throw FormatError("onnx: truncated varint");
            }
            const std::uint8_t byte = bytes_[pos_++];
            value |= std::uint64_t(byte & 0x7f) << shift;
            if ((byte & 0x80) == 0) {
                return value;
            }
        }
        throw FormatError("onnx: varint too long");
    }

    std::span<const std::uint8_t> bytes(std::uint64_t n) {
        if (n > bytes_.size() - pos_) {
            throw FormatError("onnx: truncated field (need " + std::to_string(n) + " bytes, have " +
                              std::to_string(bytes_.size() - pos_) + ")");
        }
        auto out = bytes_.subspan(pos_, static_cast<std::size_t>(n));
        pos_ += static_cast<std::size_t>(n);
        return out;
    }

    void skip(std::uint32_t wire_type) {
        switch (wire_type) {
        case 0:
            varint();
            break;
        case 1:
            bytes(8);
            break;
        case 2:
            bytes(varint());
            break;
        case 5:
            bytes(4);
            break;
        default:
            throw FormatError("onnx: unsupported wire type " + std::to_string(wire_type));
        }
    }

    // Calls fn(field, wire_type) for each field; fn must consume the payload.
    template <typename Fn>
    void for_each_field(Fn&& fn) {
        while (!done()) {
            const std::uint64_t key = varint();
            fn(static_cast<std::uint32_t>(key >> 3), static_cast<std::uint32_t>(key & 7));
        }
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

void expect_len(std::uint32_t wire_type) {
    if (wire_type != 2) {
        throw FormatError("onnx: expected length-delimited field");
    }
}

std::vector<std::int64_t> parse_shape(std::span<const std::uint8_t> bytes) {
    std::vector<std::int64_t> dims;
    WireReader shape(bytes);
    shape.for_each_field([&](std::uint32_t field, std::uint32_t wt) {
        if (field != 1) {
            shape.skip(wt);
            return;
        }
        expect_len(wt);
        WireReader dim(shape.bytes(shape.varint()));
        std::int64_t value = -1;
        dim.for_each_field([&](std::uint32_t f, std::uint32_t w) {
            if (f == 1 && w == 0) {
                value = static_cast<std::int64_t>(dim.varint());
            } else {
                dim.skip(w);
            }
        });
        dims.push_back(value);
    });
    return dims;
}

TensorSignature parse_value_info(std::span<const std::uint8_t> bytes) {
    TensorSignature sig;
    WireReader vi(bytes);
    vi.for_each_field([&](std::uint32_t field, std::uint32_t wt) {
        if (field == 1) {
            expect_len(wt);
            const auto s = vi.bytes(vi.varint());
            sig.name.assign(s.begin(), s.end());
        } else if (field == 2) {
            expect_len(wt);
            WireReader type(vi.bytes(vi.varint()));
            type.for_each_field([&](std::uint32_t tf, std::uint32_t tw) {
                if (tf != 1) {
                    type.skip(tw);
                    return;
                }
                expect_len(tw);
                WireReader tensor(type.bytes(type.varint()));
                tensor.for_each_field([&](std::uint32_t f, std::uint32_t w) {
                    if (f == 1 && w == 0) {
                        sig.elem_type = static_cast<std::int32_t>(tensor.varint());
                    } else if (f == 2) {
                        expect_len(w);
                        sig.dims = parse_shape(tensor.bytes(tensor.varint()));
                    } else {
                        tensor.skip(w);
                    }
                });
            });
        } else {
            vi.skip(wt);
        }
    });
    return sig;
}

} // namespace

const TensorSignature* GraphSignature::input(const std::string& name) const {
    for (const auto& t : inputs) {
        if (t.name == name) {
            return &t;
        }
    }
    return nullptr;
}

const TensorSignature* GraphSignature::output(const std::string& name) const {
    for (const auto& t : outputs) {
        if (t.name == name) {
            return &t;
        }
    }
    return nullptr;
}

GraphSignature parse_onnx_signature(std::span<const std::uint8_t> bytes) {
    GraphSignature sig;
    bool has_graph = false;
    WireReader model(bytes);
    model.for_each_field([&](std::uint32_t field, std::uint32_t wt) {
        if (field == 1 && wt == 0) {
            sig.ir_version = static_cast<std::int64_t>(model.varint());
        } else if (field == 7) {
            expect_len(wt);
            has_graph = true;
            WireReader graph(model.bytes(model.varint()));
            graph.for_each_field([&](std::uint32_t f, std::uint32_t w) {
                if (f == 11 || f == 12) {
                    expect_len(w);
                    auto vi = parse_value_info(graph.bytes(graph.varint()));
                    (f == 11 ? sig.inputs : sig.outputs).push_back(std::move(vi));
                } else {
                    graph.skip(w);
                }
            });
        } else {
            model.skip(wt);
        }
    });
    if (!has_graph) {
        throw FormatError("onnx: model has no graph");
    }
    if (sig.ir_version <= 0) {
        throw FormatError("onnx: missing ir_version");
    }
    return sig;
}

GraphSignature read_onnx_signature(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ModelLoadError(path, "file not found or unreadable");
    }
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse_onnx_signature(bytes);
    } catch (const FormatError& e) {
        throw ModelLoadError(path, e.what());
    }
}

} // namespace maskforge
