#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "attncodec/error.hpp"
#include "attncodec/image.hpp"

namespace attncodec {

struct RDPoint {
    double bpp = 0.0;
    double quality = 0.0;  // PSNR in dB or any score increasing with quality
};

/// PSNR over all channels; +infinity when the images are identical.
inline double psnr(const Image& a, const Image& b) {
    require(a.width == b.width && a.height == b.height && a.pixels.size() == b.pixels.size(),
            "psnr: image dimensions differ");
    require(!a.pixels.empty(), "psnr: empty image");
    double se = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
        se += d * d;
    }
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = se / static_cast<double>(a.pixels.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

inline double bpp(std::size_t stream_bytes, std::size_t width, std::size_t height) {
    require(width > 0 && height > 0, "bpp: dimensions must be positive");
    return 8.0 * static_cast<double>(stream_bytes) / (static_cast<double>(width) * static_cast<double>(height));
}

namespace detail {

/// Least-squares cubic log10(bpp) = p(quality), fitted in a centred/scaled
/// variable. Returns the antiderivative evaluated between lo and hi.
inline double integrate_cubic_fit(const std::vector<RDPoint>& pts, double lo, double hi) {
    double qmin = pts[0].quality, qmax = pts[0].quality;
    for (const auto& p : pts) {
        qmin = std::min(qmin, p.quality);
        qmax = std::max(qmax, p.quality);
    }
    const double centre = 0.5 * (qmin + qmax);
    const double half = std::max(0.5 * (qmax - qmin), 1e-12);
    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::MatrixXd a(n, 4);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = (pts[static_cast<std::size_t>(i)].quality - centre) / half;
        a(i, 0) = 1.0;
        a(i, 1) = x;
        a(i, 2) = x * x;
        a(i, 3) = x * x * x;
        y(i) = std::log10(pts[static_cast<std::size_t>(i)].bpp);
    }
    const Eigen::Vector4d c = a.colPivHouseholderQr().solve(y);
    auto antideriv = [&](double q) {
        const double x = (q - centre) / half;
        return half * (c(0) * x + c(1) * x * x / 2.0 + c(2) * x * x * x / 3.0 + c(3) * x * x * x * x / 4.0);
    };
    return antideriv(hi) - antideriv(lo);
}

}  // namespace detail

/// Bjontegaard delta rate in percent (negative = test saves rate).
inline double bd_rate(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test) {
    require(anchor.size() >= 4 && test.size() >= 4, "bd_rate: need at least 4 points per curve");
    for (const auto* curve : {&anchor, &test})
        for (const auto& p : *curve)
            require(p.bpp > 0.0 && std::isfinite(p.quality), "bd_rate: points need bpp > 0 and finite quality");
    auto range = [](const std::vector<RDPoint>& c) {
        auto [lo, hi] = std::minmax_element(c.begin(), c.end(),
                                            [](const RDPoint& a, const RDPoint& b) { return a.quality < b.quality; });
        return std::pair{lo->quality, hi->quality};
    };
    const auto [alo, ahi] = range(anchor);
    const auto [tlo, thi] = range(test);
    const double lo = std::max(alo, tlo), hi = std::min(ahi, thi);
    require(hi > lo, "bd_rate: quality ranges do not overlap");
    const double ia = detail::integrate_cubic_fit(anchor, lo, hi);
    const double it = detail::integrate_cubic_fit(test, lo, hi);
    const double delta = (it - ia) / (hi - lo);
    return 100.0 * (std::pow(10.0, delta) - 1.0);
}

}  // namespace attncodec
