#pragma once

#include "widenet/activation.hpp"
#include "widenet/errors.hpp"
#include "widenet/numkernel.hpp"

namespace widenet {

struct ActiveFraction {
    Vector per_point; // fraction of neurons in the interval, one entry per data point
    double min_over_points = 0.0;
};

/// Column-wise fraction of entries of H (m x n) strictly inside `interval`,
/// or inside its middle third when `shrink` is set.
inline ActiveFraction active_fraction(const Matrix& h, Interval interval, bool shrink) {
    if (!(interval.lo < interval.hi)) throw invalid_config("active interval needs lo < hi");
    if (!interval.finite()) throw invalid_config("active interval must be finite; use the surrogate region");
    if (h.rows() == 0 || h.cols() == 0) throw structural_error("active_fraction on empty feature matrix");
    const Interval j = shrink ? interval.middle_third() : interval;
    ActiveFraction out;
    out.per_point = Vector::Zero(h.cols());
    for (Eigen::Index i = 0; i < h.rows(); ++i)
        for (Eigen::Index a = 0; a < h.cols(); ++a)
            if (j.contains(h(i, a))) out.per_point[a] += 1.0;
    out.per_point /= static_cast<double>(h.rows());
    out.min_over_points = out.per_point.minCoeff();
    return out;
}

} // namespace widenet
