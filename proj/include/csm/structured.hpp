#pragma once

// Grid-structured connectivity: each hidden layer lives on a 2-d grid of
// sites (several units per site), feedforward synapses exist only within a
// circular radius measured in input-channel units, and lateral synapses only
// between units sharing a site.

#include "csm/learning.hpp"

#include <cmath>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace csm {

/// One hidden layer of the grid scheme. Stride is relative to the input
/// channel (input sites have stride 1); a layer with stride s on a side-S
/// input has d = S/s sites per edge and d*d*nps units.
struct GridLayerSpec {
    int stride = 1;
    int nps = 1;        // units per site
    double radius = 1;  // receptive-field radius, input-channel units

    void validate() const {
        if (stride < 1) throw TopologyError("grid stride must be >= 1");
        if (nps < 1) throw TopologyError("grid nps must be >= 1");
        if (!(radius > 0.0)) throw TopologyError("grid radius must be positive");
    }
};

namespace detail {

// Units are plane-major: index = plane*d*d + gy*d + gx, matching the input
// layouts (row-major image, channel planes first for RGB).
inline std::vector<std::pair<int, int>> grid_coordinates(int d, int stride, int nps) {
    std::vector<std::pair<int, int>> xy;
    xy.reserve(static_cast<std::size_t>(d) * d * nps);
    for (int k = 0; k < nps; ++k)
        for (int gy = 0; gy < d; ++gy)
            for (int gx = 0; gx < d; ++gx) xy.emplace_back(gx * stride, gy * stride);
    return xy;
}

}  // namespace detail

/// Binary masks for the grid layers. Feedforward: presynaptic site within
/// Euclidean distance `radius` of the postsynaptic site (inclusive).
/// Lateral: same (x, y) coordinate. `input_nps` is the number of input
/// channel planes (1 for grayscale, 3 for RGB).
inline StructureMasks build_grid_masks(int input_side, const std::vector<GridLayerSpec>& specs,
                                       int input_nps = 1) {
    if (input_side < 1) throw TopologyError("input side must be >= 1");
    if (input_nps < 1) throw TopologyError("input nps must be >= 1");
    StructureMasks masks;
    std::vector<std::pair<int, int>> prev = detail::grid_coordinates(input_side, 1, input_nps);
    int prev_stride = 1;
    for (const GridLayerSpec& spec : specs) {
        spec.validate();
        if (input_side % spec.stride != 0)
            throw TopologyError("grid stride " + std::to_string(spec.stride) +
                                " does not divide input side " + std::to_string(input_side));
        if (spec.stride < prev_stride)
            throw TopologyError("grid strides must be non-decreasing with depth");
        const int d = input_side / spec.stride;
        std::vector<std::pair<int, int>> cur = detail::grid_coordinates(d, spec.stride, spec.nps);
        const double r2 = spec.radius * spec.radius;

        Mat w = Mat::Zero(static_cast<Eigen::Index>(cur.size()),
                          static_cast<Eigen::Index>(prev.size()));
        for (std::size_t i = 0; i < cur.size(); ++i) {
            for (std::size_t j = 0; j < prev.size(); ++j) {
                const double dx = cur[i].first - prev[j].first;
                const double dy = cur[i].second - prev[j].second;
                if (dx * dx + dy * dy <= r2) w(static_cast<Eigen::Index>(i),
                                               static_cast<Eigen::Index>(j)) = 1.0;
            }
        }
        Mat l = Mat::Zero(static_cast<Eigen::Index>(cur.size()),
                          static_cast<Eigen::Index>(cur.size()));
        for (std::size_t i = 0; i < cur.size(); ++i)
            for (std::size_t j = 0; j < cur.size(); ++j)
                if (cur[i] == cur[j]) l(static_cast<Eigen::Index>(i),
                                        static_cast<Eigen::Index>(j)) = 1.0;

        masks.w.push_back(std::move(w));
        masks.l.push_back(std::move(l));
        prev = std::move(cur);
        prev_stride = spec.stride;
    }
    masks.validate();
    return masks;
}

/// Topology for a grid-structured network: grid hidden layers from `specs`,
/// then a dense (all-ones mask) output layer of `n_outputs` units.
inline NetworkTopology make_structured_topology(int input_side,
                                                const std::vector<GridLayerSpec>& specs,
                                                int n_outputs, double gamma = 1.0,
                                                bool output_lateral_on = false,
                                                int input_nps = 1) {
    if (specs.empty()) throw TopologyError("structured topology needs at least one grid layer");
    StructureMasks masks = build_grid_masks(input_side, specs, input_nps);
    std::vector<int> sizes;
    sizes.push_back(input_side * input_side * input_nps);
    for (const GridLayerSpec& spec : specs) {
        const int d = input_side / spec.stride;
        sizes.push_back(d * d * spec.nps);
    }
    const int last_hidden = sizes.back();
    sizes.push_back(n_outputs);
    masks.w.push_back(Mat::Ones(n_outputs, last_hidden));
    masks.l.push_back(Mat::Ones(n_outputs, n_outputs));

    NetworkTopology topo = NetworkTopology::make(std::move(sizes), gamma, output_lateral_on);
    topo.masks = std::make_shared<const StructureMasks>(std::move(masks));
    topo.validate();
    return topo;
}

/// Similarity-matching update under structure constants: on present synapses
/// the rule matches the dense one (the lateral decay is divided by s_ij, a
/// no-op for binary constants); absent synapses stay exactly zero.
inline Parameters structured_csm_update(const Parameters& par, const NetworkTopology& topo,
                                        const NetworkState& free_state,
                                        const NetworkState& nudged_state,
                                        const LearningRates& rates,
                                        const StructureMasks& masks) {
    Parameters out = par;
    apply_csm_update(out, topo, free_state, nudged_state, rates, &masks);
    return out;
}

/// Coordinate-list text export of the nonzero structure constants.
inline void write_masks_coo(std::ostream& os, const StructureMasks& masks) {
    os << "kind,layer,row,col,value\n";
    for (int p = 1; p <= masks.depth(); ++p) {
        const Mat& w = masks.W(p);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                if (w(i, j) != 0.0) os << "W," << p << ',' << i << ',' << j << ',' << w(i, j) << '\n';
        const Mat& l = masks.L(p);
        for (Eigen::Index i = 0; i < l.rows(); ++i)
            for (Eigen::Index j = 0; j < l.cols(); ++j)
                if (l(i, j) != 0.0) os << "L," << p << ',' << i << ',' << j << ',' << l(i, j) << '\n';
    }
}

/// Parses "radius,nps,stride;radius,nps,stride;..." (one triple per hidden
/// layer, innermost first).
inline std::vector<GridLayerSpec> parse_grid_specs(const std::string& text) {
    std::vector<GridLayerSpec> specs;
    std::stringstream layers(text);
    std::string layer;
    while (std::getline(layers, layer, ';')) {
        if (layer.empty()) continue;
        std::stringstream fields(layer);
        std::string field;
        std::vector<double> vals;
        while (std::getline(fields, field, ',')) vals.push_back(std::stod(field));
        if (vals.size() != 3)
            throw ConfigError("grid spec needs radius,nps,stride triples: " + text);
        GridLayerSpec spec;
        spec.radius = vals[0];
        spec.nps = static_cast<int>(vals[1]);
        spec.stride = static_cast<int>(vals[2]);
        spec.validate();
        specs.push_back(spec);
    }
    if (specs.empty()) throw ConfigError("empty grid spec: " + text);
    return specs;
}

}  // namespace csm
