#include "maskforge/harness/image_io.hpp"

#include "maskforge/error.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <png.h>
#include <vector>

namespace maskforge {

namespace {

struct PngReader {
    png_image image{};

    explicit PngReader(const std::string& path) {
        image.version = PNG_IMAGE_VERSION;
        if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
            throw IoError(path, image.message);
        }
    }
    ~PngReader() { png_image_free(&image); }
    PngReader(const PngReader&) = delete;
    PngReader& operator=(const PngReader&) = delete;

    template <typename T>
    std::vector<T> finish(const std::string& path, png_uint_32 format) {
        image.format = format;
        std::vector<T> buffer(PNG_IMAGE_SIZE(image) / sizeof(T));
        if (png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr) == 0) {
            throw IoError(path, image.message);
        }
        return buffer;
    }
};

void write_png(const std::string& path, int width, int height, png_uint_32 format, const void* data) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = format;
    if (png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr) == 0) {
        const std::string message = image.message;
        png_image_free(&image);
        throw IoError(path, message);
    }
}

void require_nonempty(const std::string& path, int width, int height) {
    if (width <= 0 || height <= 0) {
        throw IoError(path, "cannot write an empty image");
    }
}

} // namespace

RgbImage read_rgb_png(const std::string& path) {
    PngReader reader(path);
    RgbImage out;
    out.id = std::filesystem::path(path).stem().string();
    out.width = static_cast<int>(reader.image.width);
    out.height = static_cast<int>(reader.image.height);
    out.data = reader.finish<std::uint8_t>(path, PNG_FORMAT_RGB);
    return out;
}

void write_rgb_png(const std::string& path, const RgbImage& image) {
    require_nonempty(path, image.width, image.height);
    if (image.data.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
        throw DimensionError("write_rgb_png: buffer size does not match " + std::to_string(image.width) + "x" +
                             std::to_string(image.height));
    }
    write_png(path, image.width, image.height, PNG_FORMAT_RGB, image.data.data());
}

BinaryMask read_mask_png(const std::string& path) {
    PngReader reader(path);
    const int w = static_cast<int>(reader.image.width);
    const int h = static_cast<int>(reader.image.height);
    const auto grey = reader.finish<std::uint8_t>(path, PNG_FORMAT_GRAY);
    BinaryMask mask(w, h);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = grey[i] != 0 ? 1 : 0;
    }
    return mask;
}

void write_mask_png(const std::string& path, const BinaryMask& mask) {
    require_nonempty(path, mask.width(), mask.height());
    std::vector<std::uint8_t> grey(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        grey[i] = mask[i] != 0 ? 255 : 0;
    }
    write_png(path, mask.width(), mask.height(), PNG_FORMAT_GRAY, grey.data());
}

LabelMask read_label_png(const std::string& path) {
    PngReader reader(path);
    const png_uint_32 source = reader.image.format;
    if ((source & PNG_FORMAT_FLAG_COLORMAP) != 0 || (source & PNG_FORMAT_FLAG_COLOR) != 0) {
        throw FormatError(path + ": label PNG must be greyscale");
    }
    const int w = static_cast<int>(reader.image.width);
    const int h = static_cast<int>(reader.image.height);
    LabelMask labels(w, h);
    if ((source & PNG_FORMAT_FLAG_LINEAR) != 0) {
        const auto values = reader.finish<std::uint16_t>(path, PNG_FORMAT_LINEAR_Y);
        std::copy(values.begin(), values.end(), labels.pixels().begin());
    } else {
        const auto values = reader.finish<std::uint8_t>(path, PNG_FORMAT_GRAY);
        std::copy(values.begin(), values.end(), labels.pixels().begin());
    }
    return labels;
}

void write_label_png(const std::string& path, const LabelMask& labels) {
    require_nonempty(path, labels.width(), labels.height());
    const auto [lo, hi] = std::minmax_element(labels.pixels().begin(), labels.pixels().end());
    if (*lo < 0 || *hi > 65535) {
        throw FormatError(path + ": labels must lie in [0, 65535]");
    }
    if (*hi <= 255) {
        std::vector<std::uint8_t> grey(labels.pixels().begin(), labels.pixels().end());
        write_png(path, labels.width(), labels.height(), PNG_FORMAT_GRAY, grey.data());
    } else {
        std::vector<std::uint16_t> grey(labels.pixels().begin(), labels.pixels().end());
        write_png(path, labels.width(), labels.height(), PNG_FORMAT_LINEAR_Y, grey.data());
    }
}

} // namespace maskforge
