#include "deltarad/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace deltarad {

Volume window(const Volume& v, const WindowSpec& w) {
    if (!(w.width > 0.0)) throw std::invalid_argument("window: width must be > 0");
    const double lo = w.level - w.width / 2.0;
    std::vector<double> out(v.values.size());
    for (std::size_t i = 0; i < v.values.size(); ++i)
        out[i] = std::clamp((v.values[i] - lo) / w.width, 0.0, 1.0);
    return Volume(v.geom, std::move(out), Unit::Normalized);
}

namespace {

struct TileGrid {
    int nx, ny, tx, ty;

    int x_begin(int t) const { return t * nx / tx; }
    int x_end(int t) const { return (t + 1) * nx / tx; }
    int y_begin(int t) const { return t * ny / ty; }
    int y_end(int t) const { return (t + 1) * ny / ty; }
    double x_center(int t) const { return (x_begin(t) + x_end(t) - 1) / 2.0; }
    double y_center(int t) const { return (y_begin(t) + y_end(t) - 1) / 2.0; }
};

// Zuiderveld-style clipping: cap bins, spread the excess evenly, then hand
// out the remainder one count at a time.
void clip_histogram(std::vector<long long>& hist, long long clip) {
    long long excess = 0;
    for (auto& h : hist)
        if (h > clip) {
            excess += h - clip;
            h = clip;
        }
    const long long per_bin = excess / static_cast<long long>(hist.size());
    long long leftover = excess % static_cast<long long>(hist.size());
    for (auto& h : hist) h += per_bin;
    for (std::size_t b = 0; b < hist.size() && leftover > 0; ++b, --leftover) ++hist[b];
}

}  // namespace

Volume clahe(const Volume& v, const ClaheSpec& spec) {
    if (spec.tiles_x < 1 || spec.tiles_y < 1)
        throw std::invalid_argument("clahe: tile grid must be >= 1x1");
    if (!(spec.clip_limit > 1.0)) throw std::invalid_argument("clahe: clip limit must be > 1");
    if (spec.bins < 2) throw std::invalid_argument("clahe: needs at least 2 bins");

    const int nx = v.geom.dims[0], ny = v.geom.dims[1], nz = v.geom.dims[2];
    // a tile grid wider than the slice would leave empty tiles
    const TileGrid grid{nx, ny, std::min(spec.tiles_x, nx), std::min(spec.tiles_y, ny)};
    const int bins = spec.bins;
    std::vector<double> out(v.values.size());

    for (int k = 0; k < nz; ++k) {
        const std::size_t slice_off = v.geom.index(0, 0, k);
        double lo = v.values[slice_off], hi = lo;
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double x = v.values[slice_off + v.geom.index(i, j, 0)];
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
        if (!(hi > lo)) {
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) out[slice_off + v.geom.index(i, j, 0)] = 0.5;
            continue;
        }

        auto bin_of = [&](double x) {
            const int b = static_cast<int>((x - lo) / (hi - lo) * bins);
            return std::clamp(b, 0, bins - 1);
        };

        // per-tile clipped-CDF mappings, map[b] = cdf[b] / tile_count
        std::vector<std::vector<double>> mapping(static_cast<std::size_t>(grid.tx) * grid.ty);
        for (int tj = 0; tj < grid.ty; ++tj) {
            for (int ti = 0; ti < grid.tx; ++ti) {
                std::vector<long long> hist(bins, 0);
                long long count = 0;
                for (int j = grid.y_begin(tj); j < grid.y_end(tj); ++j)
                    for (int i = grid.x_begin(ti); i < grid.x_end(ti); ++i) {
                        ++hist[bin_of(v.values[slice_off + v.geom.index(i, j, 0)])];
                        ++count;
                    }
                if (count == 0) continue;
                const long long clip =
                    std::max<long long>(1, static_cast<long long>(spec.clip_limit * count / bins));
                clip_histogram(hist, clip);
                auto& map = mapping[static_cast<std::size_t>(tj) * grid.tx + ti];
                map.resize(bins);
                long long cdf = 0;
                for (int b = 0; b < bins; ++b) {
                    cdf += hist[b];
                    map[b] = static_cast<double>(cdf) / static_cast<double>(count);
                }
            }
        }

        for (int j = 0; j < ny; ++j) {
            int tj0 = 0;
            while (tj0 + 1 < grid.ty && grid.y_center(tj0 + 1) <= j) ++tj0;
            const int tj1 = std::min(tj0 + 1, grid.ty - 1);
            double wy = 0.0;
            if (tj1 != tj0 && j >= grid.y_center(tj0)) {
                wy = (j - grid.y_center(tj0)) / (grid.y_center(tj1) - grid.y_center(tj0));
                wy = std::clamp(wy, 0.0, 1.0);
            }
            for (int i = 0; i < nx; ++i) {
                int ti0 = 0;
                while (ti0 + 1 < grid.tx && grid.x_center(ti0 + 1) <= i) ++ti0;
                const int ti1 = std::min(ti0 + 1, grid.tx - 1);
                double wx = 0.0;
                if (ti1 != ti0 && i >= grid.x_center(ti0)) {
                    wx = (i - grid.x_center(ti0)) / (grid.x_center(ti1) - grid.x_center(ti0));
                    wx = std::clamp(wx, 0.0, 1.0);
                }
                const int b = bin_of(v.values[slice_off + v.geom.index(i, j, 0)]);
                const double m00 = mapping[static_cast<std::size_t>(tj0) * grid.tx + ti0][b];
                const double m10 = mapping[static_cast<std::size_t>(tj0) * grid.tx + ti1][b];
                const double m01 = mapping[static_cast<std::size_t>(tj1) * grid.tx + ti0][b];
                const double m11 = mapping[static_cast<std::size_t>(tj1) * grid.tx + ti1][b];
                out[slice_off + v.geom.index(i, j, 0)] =
                    (1 - wy) * ((1 - wx) * m00 + wx * m10) + wy * ((1 - wx) * m01 + wx * m11);
            }
        }
    }
    return Volume(v.geom, std::move(out), Unit::Normalized);
}

Volume denoise_median(const Volume& v, int radius) {
    if (radius < 1) throw std::invalid_argument("denoise_median: radius must be >= 1");
    const int nx = v.geom.dims[0], ny = v.geom.dims[1], nz = v.geom.dims[2];
    std::vector<double> out(v.values.size());
    std::vector<double> window;
    window.reserve(static_cast<std::size_t>(2 * radius + 1) * (2 * radius + 1) * (2 * radius + 1));
    for (int k = 0; k < nz; ++k) {
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                window.clear();
                for (int dk = -radius; dk <= radius; ++dk) {
                    const int kk = std::clamp(k + dk, 0, nz - 1);
                    for (int dj = -radius; dj <= radius; ++dj) {
                        const int jj = std::clamp(j + dj, 0, ny - 1);
                        for (int di = -radius; di <= radius; ++di) {
                            const int ii = std::clamp(i + di, 0, nx - 1);
                            window.push_back(v.at(ii, jj, kk));
                        }
                    }
                }
                auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
                std::nth_element(window.begin(), mid, window.end());
                out[v.geom.index(i, j, k)] = *mid;
            }
        }
    }
    return Volume(v.geom, std::move(out), v.unit);
}

}  // namespace deltarad
