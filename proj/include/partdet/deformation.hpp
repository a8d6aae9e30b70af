#pragma once

#include <array>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "partdet/nn.hpp"
#include "partdet/tensor.hpp"

namespace partdet {

// Grid location inside a part detection map. x indexes rows, y indexes
// columns throughout the deformation layer.
struct GridLoc {
    int x = 0;
    int y = 0;
    bool operator==(const GridLoc&) const = default;
};

// How the per-part deformation maps are parameterized.
//   kQuadratic: four fixed basis maps (squared and linear offsets from the
//               anchor) with learned weights c1..c4.
//   kLearnedMap: a single fully learned deformation map with unit weight.
enum class DeformationMode : int { kQuadratic = 0, kLearnedMap = 1 };

// Static geometry of one part filter.
struct PartSpec {
    int part_id = 0;       // 1-based
    int level = 1;         // 1..3
    int f_h = 0;           // filter rows, <= 19
    int f_w = 0;           // filter cols, <= 5
    int anchor_x = 0;      // row of the anchor inside the part's detection map
    int anchor_y = 0;      // column of the anchor
    int mirror_of = 0;     // 1-based id of the mirrored partner, 0 = none

    int map_h() const { return kFeatureH - f_h + 1; }
    int map_w() const { return kFeatureW - f_w + 1; }

    void validate() const {
        if (part_id < 1 || part_id > kPartCount) throw std::invalid_argument("PartSpec: part_id out of range");
        if (level < 1 || level > 3) throw std::invalid_argument("PartSpec: level out of range");
        if (f_h < 1 || f_h > kFeatureH || f_w < 1 || f_w > kFeatureW)
            throw std::invalid_argument("PartSpec: filter does not fit the 19x5 part space");
        if (anchor_x < 0 || anchor_x >= map_h() || anchor_y < 0 || anchor_y >= map_w())
            throw std::invalid_argument("PartSpec: anchor outside the part detection map");
        if (mirror_of < 0 || mirror_of > kPartCount) throw std::invalid_argument("PartSpec: bad mirror id");
    }
};

// The four quadratic basis maps for one part:
//   d1 = (x - ax)^2, d2 = (y - ay)^2, d3 = x - ax, d4 = y - ay.
template <typename T>
struct DeformationBasis {
    std::array<Map2<T>, 4> d;

    T value(int n, int x, int y) const { return d[static_cast<std::size_t>(n)].at(x, y); }
};

template <typename T>
DeformationBasis<T> quadratic_basis(int map_h, int map_w, int anchor_x, int anchor_y) {
    if (anchor_x < 0 || anchor_x >= map_h || anchor_y < 0 || anchor_y >= map_w)
        throw std::invalid_argument("quadratic_basis: anchor outside the map");
    DeformationBasis<T> basis;
    for (auto& m : basis.d) m = Map2<T>(map_h, map_w);
    for (int x = 0; x < map_h; ++x) {
        for (int y = 0; y < map_w; ++y) {
            T dx = static_cast<T>(x - anchor_x);
            T dy = static_cast<T>(y - anchor_y);
            basis.d[0].at(x, y) = dx * dx;
            basis.d[1].at(x, y) = dy * dy;
            basis.d[2].at(x, y) = dx;
            basis.d[3].at(x, y) = dy;
        }
    }
    return basis;
}

// B = M + c1 d1 + c2 d2 + c3 d3 + c4 d4. The constant c5 term of the
// expanded quadratic form is omitted: it shifts every cell equally, so it
// moves neither the argmax nor the learnable set.
template <typename T>
Map2<T> summed_map(const Map2<T>& m, const std::array<T, 4>& c, const DeformationBasis<T>& basis) {
    for (const auto& d : basis.d)
        if (d.h != m.h || d.w != m.w) throw std::invalid_argument("summed_map: basis/map dimension mismatch");
    Map2<T> b(m.h, m.w);
    for (int i = 0; i < m.size(); ++i) {
        b.v[static_cast<std::size_t>(i)] =
            m.v[static_cast<std::size_t>(i)] + c[0] * basis.d[0].v[static_cast<std::size_t>(i)] +
            c[1] * basis.d[1].v[static_cast<std::size_t>(i)] + c[2] * basis.d[2].v[static_cast<std::size_t>(i)] +
            c[3] * basis.d[3].v[static_cast<std::size_t>(i)];
    }
    return b;
}

// Global max of the summed map with its location. Ties resolve to the first
// cell in row-major order. `runner_up` reports the best value outside the
// winning cell, used to detect near-tie configurations.
template <typename T>
struct PartScore {
    T value = T(0);
    GridLoc loc;
    T runner_up = T(0);
};

template <typename T>
PartScore<T> part_score(const Map2<T>& b) {
    PartScore<T> r;
    r.value = b.v[0];
    r.loc = {0, 0};
    // a single-cell map has no competing location, so its gap is infinite
    r.runner_up = std::numeric_limits<T>::lowest();
    for (int x = 0; x < b.h; ++x) {
        for (int y = 0; y < b.w; ++y) {
            if (x == 0 && y == 0) continue;
            T v = b.at(x, y);
            if (v > r.value) {
                r.runner_up = r.value;
                r.value = v;
                r.loc = {x, y};
            } else if (v > r.runner_up) {
                r.runner_up = v;
            }
        }
    }
    return r;
}

// Backward pass of the deformation layer for one part. Only the winning cell
// carries gradient: dM is zero everywhere except dM(loc) = ds, and each
// coefficient receives ds * d_n(loc).
template <typename T>
void deformation_backward(T ds, GridLoc loc, const DeformationBasis<T>& basis, Map2<T>& d_m,
                          std::array<T, 4>& d_c) {
    if (loc.x < 0 || loc.x >= d_m.h || loc.y < 0 || loc.y >= d_m.w)
        throw InternalError("deformation_backward: recorded argmax outside the map");
    d_m.at(loc.x, loc.y) += ds;
    for (int n = 0; n < 4; ++n) d_c[static_cast<std::size_t>(n)] += ds * basis.value(n, loc.x, loc.y);
}

// Expansion of the completed-square quadratic deformation form. Returns the
// summed map built from the linear basis expansion; when both curvature
// coefficients are usable it also carries the constant term
// c5 = c3^2/(4 c1) + c4^2/(4 c2) (added to every cell) and the implied part
// center (ax - c3/(2 c1), ay - c4/(2 c2)). With |c1| or |c2| below 1e-12 the
// form degenerates: c5 and the center are unavailable and the map is the
// plain linear combination.
template <typename T>
struct QuadraticExpansion {
    Map2<T> b;
    std::optional<T> c5;
    std::optional<std::pair<T, T>> center;
    bool degenerate = false;
};

template <typename T>
QuadraticExpansion<T> expand_quadratic(const std::array<T, 4>& c, int anchor_x, int anchor_y, const Map2<T>& m) {
    QuadraticExpansion<T> out;
    DeformationBasis<T> basis = quadratic_basis<T>(m.h, m.w, anchor_x, anchor_y);
    out.b = summed_map(m, c, basis);
    if (std::abs(static_cast<double>(c[0])) < 1e-12 || std::abs(static_cast<double>(c[1])) < 1e-12) {
        out.degenerate = true;
        return out;
    }
    T c5 = c[2] * c[2] / (T(4) * c[0]) + c[3] * c[3] / (T(4) * c[1]);
    for (auto& v : out.b.v) v += c5;
    out.c5 = c5;
    out.center = {static_cast<T>(anchor_x) - c[2] / (T(2) * c[0]),
                  static_cast<T>(anchor_y) - c[3] / (T(2) * c[1])};
    return out;
}

// Learnable state of all eight parts: filters over the 64 feature maps plus
// the deformation parameterization.
template <typename T>
struct PartModel {
    std::vector<PartSpec> specs;                 // exactly kPartCount entries
    std::vector<FilterBank<T>> filters;          // one bank of count 1 per part
    std::vector<std::array<T, 4>> coeffs;        // quadratic mode: c1..c4 per part
    std::vector<Map2<T>> learned_maps;           // learned-map mode: one map per part
    DeformationMode mode = DeformationMode::kQuadratic;

    template <typename U>
    PartModel<U> cast() const {
        PartModel<U> out;
        out.specs = specs;
        out.mode = mode;
        out.filters.reserve(filters.size());
        for (const auto& f : filters) out.filters.push_back(f.template cast<U>());
        out.coeffs.reserve(coeffs.size());
        for (const auto& c : coeffs)
            out.coeffs.push_back({static_cast<U>(c[0]), static_cast<U>(c[1]), static_cast<U>(c[2]),
                                  static_cast<U>(c[3])});
        out.learned_maps.reserve(learned_maps.size());
        for (const auto& m : learned_maps) out.learned_maps.push_back(m.template cast<U>());
        return out;
    }
};

// Part detection maps: each part filter is cross-correlated over the shared
// 64x19x5 feature maps, yielding one response map per part.
template <typename T>
std::vector<Map2<T>> part_detection_maps(const Tensor3<T>& features, const PartModel<T>& model) {
    if (features.c != kConv1Filters || features.h != kFeatureH || features.w != kFeatureW)
        throw std::invalid_argument("part_detection_maps: feature tensor must be 64x19x5");
    std::vector<Map2<T>> maps;
    maps.reserve(model.specs.size());
    for (std::size_t p = 0; p < model.specs.size(); ++p) {
        Tensor3<T> resp = conv2d_valid(features, model.filters[p]);
        Map2<T> m(resp.h, resp.w);
        m.v.assign(resp.plane(0), resp.plane(0) + static_cast<std::size_t>(resp.h) * resp.w);
        maps.push_back(std::move(m));
    }
    return maps;
}

// The default eight-part geometry. The corpus view is a side view that can
// face either way along the car length (the row axis of the 19x5 part grid),
// so parts come in mirrored pairs:
//   parts 1, 2: level 1, 5x3 wheel-scale filters anchored near the two ends;
//   part 3:     level 2, 10x4 half-car filter anchored centrally;
//   part 4:     level 3, 15x5 whole-car filter;
//   parts 5-8:  the same filters for the opposite facing, anchors mirrored
//               along the row axis.
inline std::vector<PartSpec> default_part_layout() {
    std::vector<PartSpec> parts = {
        // id, level, f_h, f_w, ax, ay, mirror_of
        {1, 1, 5, 3, 2, 1, 0},
        {2, 1, 5, 3, 12, 1, 0},
        {3, 2, 10, 4, 5, 1, 0},
        {4, 3, 15, 5, 2, 0, 0},
    };
    for (int i = 0; i < 4; ++i) {
        PartSpec m = parts[static_cast<std::size_t>(i)];
        m.part_id = 5 + i;
        m.mirror_of = i + 1;
        m.anchor_x = (m.map_h() - 1) - m.anchor_x;
        parts.push_back(m);
    }
    for (const auto& p : parts) p.validate();
    return parts;
}

// Full-layout validation: eight parts with ids 1..8 in order, valid anchors,
// and size-consistent mirror pairs.
inline void validate_part_layout(const std::vector<PartSpec>& parts) {
    if (parts.size() != kPartCount) throw std::invalid_argument("part layout: exactly 8 parts required");
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const PartSpec& p = parts[i];
        p.validate();
        if (p.part_id != static_cast<int>(i) + 1)
            throw std::invalid_argument("part layout: part ids must be 1..8 in order");
        if (p.mirror_of != 0) {
            const PartSpec& q = parts[static_cast<std::size_t>(p.mirror_of - 1)];
            if (q.f_h != p.f_h || q.f_w != p.f_w)
                throw std::invalid_argument("part layout: mirrored pair sizes differ");
        }
    }
}

}  // namespace partdet
