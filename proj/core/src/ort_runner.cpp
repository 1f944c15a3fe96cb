#include "maskforge/error.hpp"
#include "maskforge/neural_segmenter.hpp"

#include <mutex>
#include <onnxruntime_cxx_api.h>

namespace maskforge {

namespace {

Ort::Env& ort_env() {
    static Ort::Env env(ORT_LOGGING_LEVEL_WARNING, "maskforge");
    return env;
}

class OrtRunner final : public GraphRunner {
public:
    explicit OrtRunner(const std::string& path) : path_(path) {
        try {
            Ort::SessionOptions options;
            options.SetIntraOpNumThreads(1);
            session_ = std::make_unique<Ort::Session>(ort_env(), path.c_str(), options);
        } catch (const Ort::Exception& e) {
            throw ModelLoadError(path, e.what());
        }
    }

    std::vector<Tensor> run(const std::vector<NamedTensor>& inputs,
                            const std::vector<std::string>& output_names) const override {
        std::lock_guard lock(mutex_);
        try {
            const auto memory = Ort::MemoryInfo::CreateCpu(OrtArenaAllocator, OrtMemTypeDefault);
            std::vector<std::vector<float>> buffers;
            std::vector<Ort::Value> values;
            std::vector<const char*> in_names;
            buffers.reserve(inputs.size());
            for (const auto& in : inputs) {
                buffers.push_back(in.tensor.data);
                values.push_back(Ort::Value::CreateTensor<float>(memory, buffers.back().data(), buffers.back().size(),
                                                                 in.tensor.shape.data(), in.tensor.shape.size()));
                in_names.push_back(in.name.c_str());
            }
            std::vector<const char*> out_names;
            for (const auto& name : output_names) {
                out_names.push_back(name.c_str());
            }
            auto results = session_->Run(Ort::RunOptions{nullptr}, in_names.data(), values.data(), values.size(),
                                         out_names.data(), out_names.size());
            std::vector<Tensor> out;
            for (auto& value : results) {
                Tensor t;
                t.shape = value.GetTensorTypeAndShapeInfo().GetShape();
                const float* data = value.GetTensorData<float>();
                t.data.assign(data, data + t.element_count());
                out.push_back(std::move(t));
            }
            return out;
        } catch (const Ort::Exception& e) {
            throw BackendError(path_ + ": " + e.what());
        }
    }

private:
    std::string path_;
    std::unique_ptr<Ort::Session> session_;
    mutable std::mutex mutex_;
};

} // namespace

std::unique_ptr<GraphRunner> make_ort_runner(const std::string& path) {
    return std::make_unique<OrtRunner>(path);
}

} // namespace maskforge
