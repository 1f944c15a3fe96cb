#pragma once

#include "maskforge/error.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace maskforge {

/// Row-major raster of `T` with value semantics.
template <typename T>
class Raster {
public:
    using value_type = T;

    Raster() = default;

    Raster(int width, int height, T fill = T{})
        : width_(width), height_(height) {
        if (width < 0 || height < 0) {
            throw DimensionError("negative raster dimensions");
        }
        data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
    }

    Raster(int width, int height, std::vector<T> data)
        : width_(width), height_(height), data_(std::move(data)) {
        if (width < 0 || height < 0 ||
            data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
            throw DimensionError("raster data length does not match " + std::to_string(width) +
                                 "x" + std::to_string(height));
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(int x, int y) { return data_[index(x, y)]; }
    const T& operator()(int x, int y) const { return data_[index(x, y)]; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    bool in_bounds(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    std::span<T> pixels() noexcept { return data_; }
    std::span<const T> pixels() const noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    template <typename U>
    bool same_dims(const Raster<U>& other) const noexcept {
        return width_ == other.width() && height_ == other.height();
    }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

/// Foreground is any non-zero byte; producers in this library only write 0/1.
using BinaryMask = Raster<std::uint8_t>;
/// Per-pixel region or class label, 0 = background.
using LabelMask = Raster<std::int32_t>;
using RealRaster = Raster<double>;
/// Euclidean distance in pixels.
using DistanceMap = Raster<double>;

inline std::size_t foreground_area(const BinaryMask& mask) {
    return static_cast<std::size_t>(
        std::count_if(mask.pixels().begin(), mask.pixels().end(), [](std::uint8_t v) { return v != 0; }));
}

inline bool is_empty(const BinaryMask& mask) {
    return std::none_of(mask.pixels().begin(), mask.pixels().end(), [](std::uint8_t v) { return v != 0; });
}

/// Half-open box: x0 <= x < x1, y0 <= y < y1.
struct Box {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const noexcept { return x1 - x0; }
    int height() const noexcept { return y1 - y0; }
    long long area() const noexcept {
        return static_cast<long long>(width()) * static_cast<long long>(height());
    }
    bool contains(int x, int y) const noexcept { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    bool contains(const Box& o) const noexcept {
        return o.x0 >= x0 && o.y0 >= y0 && o.x1 <= x1 && o.y1 <= y1;
    }
    bool valid_in(int w, int h) const noexcept {
        return 0 <= x0 && x0 < x1 && x1 <= w && 0 <= y0 && y0 < y1 && y1 <= h;
    }

    friend bool operator==(const Box&, const Box&) = default;
};

inline Box union_box(const Box& a, const Box& b) {
    return {std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1), std::max(a.y1, b.y1)};
}

enum class Polarity : std::uint8_t { negative = 0, positive = 1 };

struct Point {
    int x = 0;
    int y = 0;
    Polarity polarity = Polarity::positive;

    friend bool operator==(const Point&, const Point&) = default;
};

BinaryMask complement(const BinaryMask& mask);
BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_and_not(const BinaryMask& a, const BinaryMask& b);
/// Filled rectangle of `box` on a width x height canvas.
BinaryMask box_mask(const Box& box, int width, int height);
void require_same_dims(const BinaryMask& a, const BinaryMask& b, const char* what);

} // namespace maskforge
