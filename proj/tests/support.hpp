#pragma once

#include "maskforge/random.hpp"
#include "maskforge/raster.hpp"

#include <filesystem>
#include <string>

namespace maskforge::testing {

/// Random blobs of foreground with density roughly `fill`.
inline BinaryMask random_mask(Rng& rng, int w, int h, double fill = 0.5) {
    BinaryMask m(w, h);
    for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = rng.bernoulli(fill) ? 1 : 0;
    }
    return m;
}

/// A union of a few random discs.
inline BinaryMask random_discs(Rng& rng, int w, int h, int count, int rmin, int rmax) {
    BinaryMask m(w, h);
    for (int k = 0; k < count; ++k) {
        const int r = rng.uniform_int(rmin, rmax);
        const int cx = rng.uniform_int(0, w - 1);
        const int cy = rng.uniform_int(0, h - 1);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) {
                    m(x, y) = 1;
                }
            }
        }
    }
    return m;
}

inline BinaryMask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
    BinaryMask m(w, h);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            m(x, y) = 1;
        }
    }
    return m;
}

inline BinaryMask disc_mask(int w, int h, int cx, int cy, int r) {
    BinaryMask m(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) {
                m(x, y) = 1;
            }
        }
    }
    return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("maskforge_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace maskforge::testing
