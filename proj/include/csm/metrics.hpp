#pragma once

// Per-epoch training metrics and their CSV schema:
//   epoch,train_err,val_err,free_iters_mean,nonconv,sparsity_l1..lP,seconds

#include "csm/common.hpp"

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace csm {

struct EpochMetrics {
    int epoch = 0;
    double train_err = 0.0;  // percent
    double val_err = 0.0;    // percent
    double free_iters_mean = 0.0;
    long nonconv = 0;
    std::vector<double> sparsity;  // fraction active per layer 1..P
    double seconds = 0.0;

    void validate() const {
        if (train_err < 0.0 || train_err > 100.0 || val_err < 0.0 || val_err > 100.0)
            throw DomainError("epoch metrics: errors must be in [0,100]");
    }
};

namespace detail {

// Shortest round-trip decimal; keeps reruns byte-identical.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline void write_metrics_csv(std::ostream& os, const std::vector<EpochMetrics>& rows) {
    const std::size_t layers = rows.empty() ? 0 : rows.front().sparsity.size();
    os << "epoch,train_err,val_err,free_iters_mean,nonconv";
    for (std::size_t p = 1; p <= layers; ++p) os << ",sparsity_l" << p;
    os << ",seconds\n";
    for (const EpochMetrics& m : rows) {
        os << m.epoch << ',' << detail::format_double(m.train_err) << ','
           << detail::format_double(m.val_err) << ',' << detail::format_double(m.free_iters_mean)
           << ',' << m.nonconv;
        for (double s : m.sparsity) os << ',' << detail::format_double(s);
        os << ',' << detail::format_double(m.seconds) << '\n';
    }
}

}  // namespace csm
