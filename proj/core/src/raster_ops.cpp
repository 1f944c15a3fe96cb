#include "maskforge/raster_ops.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace maskforge {

namespace {

// Large finite stand-in for "no background"; keeps the envelope arithmetic NaN-free.
constexpr double kFar = 1e20;

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher). f and d may alias.
void squared_edt_1d(const double* f, int n, std::ptrdiff_t stride, double* d,
                    std::vector<int>& v, std::vector<double>& z, std::vector<double>& tmp) {
    tmp.resize(static_cast<std::size_t>(n));
    for (int q = 0; q < n; ++q) {
        tmp[static_cast<std::size_t>(q)] = f[q * stride];
    }
    v.resize(static_cast<std::size_t>(n));
    z.resize(static_cast<std::size_t>(n) + 1);

    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        auto intersect = [&](int p) {
            return ((tmp[static_cast<std::size_t>(q)] + double(q) * q) -
                    (tmp[static_cast<std::size_t>(p)] + double(p) * p)) /
                   (2.0 * (q - p));
        };
        double s = intersect(v[static_cast<std::size_t>(k)]);
        // z[0] is -inf, so k never drops below zero.
        while (s <= z[static_cast<std::size_t>(k)]) {
            --k;
            s = intersect(v[static_cast<std::size_t>(k)]);
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = s;
        z[static_cast<std::size_t>(k) + 1] = std::numeric_limits<double>::infinity();
    }

    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(k) + 1] < q) {
            ++k;
        }
        const int p = v[static_cast<std::size_t>(k)];
        d[q * stride] = double(q - p) * double(q - p) + tmp[static_cast<std::size_t>(p)];
    }
}

// Squared EDT over a w x h grid where zero entries of `f` are sources.
void squared_edt_2d(std::vector<double>& f, int w, int h) {
    std::vector<int> v;
    std::vector<double> z;
    std::vector<double> tmp;
    for (int x = 0; x < w; ++x) {
        squared_edt_1d(f.data() + x, h, w, f.data() + x, v, z, tmp);
    }
    for (int y = 0; y < h; ++y) {
        double* row = f.data() + static_cast<std::ptrdiff_t>(y) * w;
        squared_edt_1d(row, w, 1, row, v, z, tmp);
    }
}

int find_root(std::vector<int>& parent, int i) {
    while (parent[static_cast<std::size_t>(i)] != i) {
        parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
        i = parent[static_cast<std::size_t>(i)];
    }
    return i;
}

void unite(std::vector<int>& parent, int a, int b) {
    a = find_root(parent, a);
    b = find_root(parent, b);
    if (a == b) {
        return;
    }
    // Smaller provisional label wins so roots stay in scan order.
    if (a < b) {
        parent[static_cast<std::size_t>(b)] = a;
    } else {
        parent[static_cast<std::size_t>(a)] = b;
    }
}

} // namespace

RealRaster squared_distance_transform(const BinaryMask& mask, BorderMode border) {
    const int w = mask.width();
    const int h = mask.height();
    if (w <= 0 || h <= 0) {
        throw DimensionError("distance_transform: zero-sized mask");
    }

    if (border == BorderMode::background) {
        const int pw = w + 2;
        const int ph = h + 2;
        std::vector<double> f(static_cast<std::size_t>(pw) * static_cast<std::size_t>(ph), 0.0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                f[static_cast<std::size_t>(y + 1) * pw + static_cast<std::size_t>(x + 1)] =
                    mask(x, y) != 0 ? kFar : 0.0;
            }
        }
        squared_edt_2d(f, pw, ph);
        RealRaster out(w, h);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                out(x, y) = f[static_cast<std::size_t>(y + 1) * pw + static_cast<std::size_t>(x + 1)];
            }
        }
        return out;
    }

    std::vector<double> f(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        f[i] = mask[i] != 0 ? kFar : 0.0;
    }
    squared_edt_2d(f, w, h);
    for (double& value : f) {
        if (value >= kFar * 0.5) {
            value = std::numeric_limits<double>::infinity();
        }
    }
    return RealRaster(w, h, std::move(f));
}

DistanceMap distance_transform(const BinaryMask& mask, BorderMode border) {
    RealRaster sq = squared_distance_transform(mask, border);
    for (double& value : sq.pixels()) {
        value = std::sqrt(value);
    }
    return sq;
}

Components connected_components(const BinaryMask& mask, Connectivity connectivity) {
    const int w = mask.width();
    const int h = mask.height();
    LabelMask provisional(w, h, 0);
    std::vector<int> parent{0};

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (mask(x, y) == 0) {
                continue;
            }
            int neighbours[4];
            int n = 0;
            if (x > 0 && provisional(x - 1, y) != 0) {
                neighbours[n++] = provisional(x - 1, y);
            }
            if (y > 0 && provisional(x, y - 1) != 0) {
                neighbours[n++] = provisional(x, y - 1);
            }
            if (connectivity == Connectivity::eight && y > 0) {
                if (x > 0 && provisional(x - 1, y - 1) != 0) {
                    neighbours[n++] = provisional(x - 1, y - 1);
                }
                if (x + 1 < w && provisional(x + 1, y - 1) != 0) {
                    neighbours[n++] = provisional(x + 1, y - 1);
                }
            }
            if (n == 0) {
                const int label = static_cast<int>(parent.size());
                parent.push_back(label);
                provisional(x, y) = label;
                continue;
            }
            int best = neighbours[0];
            for (int i = 1; i < n; ++i) {
                best = std::min(best, neighbours[i]);
            }
            provisional(x, y) = best;
            for (int i = 0; i < n; ++i) {
                unite(parent, best, neighbours[i]);
            }
        }
    }

    std::vector<int> final_label(parent.size(), 0);
    Components out{LabelMask(w, h, 0), 0};
    for (std::size_t i = 0; i < provisional.size(); ++i) {
        const int p = provisional[i];
        if (p == 0) {
            continue;
        }
        const int root = find_root(parent, p);
        int& label = final_label[static_cast<std::size_t>(root)];
        if (label == 0) {
            label = ++out.count;
        }
        out.labels[i] = label;
    }
    return out;
}

Box tight_box(const BinaryMask& mask) {
    int x0 = mask.width();
    int y0 = mask.height();
    int x1 = -1;
    int y1 = -1;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask(x, y) != 0) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
        }
    }
    if (x1 < 0) {
        throw EmptyMaskError("tight_box: mask has no foreground");
    }
    return {x0, y0, x1 + 1, y1 + 1};
}

BinaryMask morphology(const BinaryMask& mask, MorphOp op, double radius) {
    if (radius < 0.0) {
        throw ConfigError("morphology: negative radius");
    }
    if (mask.empty()) {
        return mask;
    }
    const double r2 = radius * radius;
    BinaryMask out(mask.width(), mask.height());
    if (op == MorphOp::erode) {
        const RealRaster sq = squared_distance_transform(mask, BorderMode::background);
        for (std::size_t i = 0; i < sq.size(); ++i) {
            out[i] = sq[i] > r2 ? 1 : 0;
        }
    } else {
        // Distance from each pixel to the nearest in-image foreground pixel.
        const RealRaster sq = squared_distance_transform(complement(mask), BorderMode::ignore);
        for (std::size_t i = 0; i < sq.size(); ++i) {
            out[i] = sq[i] <= r2 ? 1 : 0;
        }
    }
    return out;
}

RealRaster resize(const RealRaster& src, int out_width, int out_height, ResizeMode mode) {
    if (out_width <= 0 || out_height <= 0) {
        throw DimensionError("resize: target dimensions must be positive");
    }
    if (src.empty()) {
        throw DimensionError("resize: empty source");
    }
    const int in_w = src.width();
    const int in_h = src.height();
    if (in_w == out_width && in_h == out_height) {
        return src;
    }
    RealRaster out(out_width, out_height);

    if (mode == ResizeMode::nearest) {
        for (int y = 0; y < out_height; ++y) {
            const int sy = static_cast<int>(static_cast<long long>(y) * in_h / out_height);
            for (int x = 0; x < out_width; ++x) {
                const int sx = static_cast<int>(static_cast<long long>(x) * in_w / out_width);
                out(x, y) = src(sx, sy);
            }
        }
        return out;
    }

    struct Tap {
        int lo;
        int hi;
        double t;
    };
    auto taps = [](int out_n, int in_n) {
        std::vector<Tap> result(static_cast<std::size_t>(out_n));
        const double scale = double(in_n) / double(out_n);
        for (int i = 0; i < out_n; ++i) {
            double s = (i + 0.5) * scale - 0.5;
            s = std::clamp(s, 0.0, double(in_n - 1));
            const int lo = static_cast<int>(std::floor(s));
            const int hi = std::min(lo + 1, in_n - 1);
            result[static_cast<std::size_t>(i)] = {lo, hi, s - lo};
        }
        return result;
    };
    const std::vector<Tap> tx = taps(out_width, in_w);
    const std::vector<Tap> ty = taps(out_height, in_h);
    for (int y = 0; y < out_height; ++y) {
        const Tap& a = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < out_width; ++x) {
            const Tap& b = tx[static_cast<std::size_t>(x)];
            const double top = src(b.lo, a.lo) * (1.0 - b.t) + src(b.hi, a.lo) * b.t;
            const double bottom = src(b.lo, a.hi) * (1.0 - b.t) + src(b.hi, a.hi) * b.t;
            out(x, y) = top * (1.0 - a.t) + bottom * a.t;
        }
    }
    return out;
}

BinaryMask resize_nearest(const BinaryMask& src, int out_width, int out_height) {
    if (out_width <= 0 || out_height <= 0) {
        throw DimensionError("resize: target dimensions must be positive");
    }
    BinaryMask out(out_width, out_height);
    for (int y = 0; y < out_height; ++y) {
        const int sy = static_cast<int>(static_cast<long long>(y) * src.height() / out_height);
        for (int x = 0; x < out_width; ++x) {
            const int sx = static_cast<int>(static_cast<long long>(x) * src.width() / out_width);
            out(x, y) = src(sx, sy) != 0 ? 1 : 0;
        }
    }
    return out;
}

RealRaster to_real(const BinaryMask& mask) {
    RealRaster out(mask.width(), mask.height());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        out[i] = mask[i] != 0 ? 1.0 : 0.0;
    }
    return out;
}

BinaryMask threshold_above(const RealRaster& raster, double threshold) {
    BinaryMask out(raster.width(), raster.height());
    for (std::size_t i = 0; i < raster.size(); ++i) {
        out[i] = raster[i] > threshold ? 1 : 0;
    }
    return out;
}

} // namespace maskforge
