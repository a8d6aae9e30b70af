#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "partdet/common.hpp"
#include "partdet/deformation.hpp"
#include "partdet/gabor.hpp"
#include "partdet/nn.hpp"
#include "partdet/visibility.hpp"

namespace partdet {

// Training proceeds in three stages; each stage's network is a prefix of the
// next plus its own classifier head.
//   kStage1: conv1 + pooling + linear readout over the pooled features.
//   kStage2: adds the part filters and the deformation layer; the readout is
//            a logistic unit over the eight part scores.
//   kStage3: replaces the readout with the configured visibility classifier.
enum class Stage : int { kStage1 = 1, kStage2 = 2, kStage3 = 3 };

struct Architecture {
    Stage stage = Stage::kStage3;
    DeformationMode deform_mode = DeformationMode::kQuadratic;
    VisibilityMode vis_mode = VisibilityMode::kHierarchical;
    std::vector<PartSpec> parts;

    // stage 2 always classifies through the plain logistic head
    VisibilityMode effective_vis_mode() const {
        return stage == Stage::kStage3 ? vis_mode : VisibilityMode::kLogistic;
    }
    bool has_parts() const { return stage != Stage::kStage1; }
};

inline constexpr int kHeadInputs = kConv1Filters * kFeatureH * kFeatureW;  // 6080

// Every learnable scalar of the network, addressable three ways: as typed
// fields for the forward/backward passes, as named flat groups for SGD, the
// gradient checker and serialization, and as a checkpoint on disk. Each
// scalar belongs to exactly one group.
template <typename T>
struct NetworkParams {
    Architecture arch;

    FilterBank<T> conv1;

    // stage-1 readout, discarded afterwards
    std::vector<T> head_w;
    T head_b = T(0);

    PartModel<T> parts;
    VisibilityParams<T> vis;

    struct GroupView {
        std::string name;
        T* data;
        std::size_t size;
        std::vector<int> dims;
    };

    // Structure for the given architecture, all values zero.
    static NetworkParams make(const Architecture& arch) {
        validate_part_layout(arch.parts);
        NetworkParams p;
        p.arch = arch;
        p.conv1 = FilterBank<T>(kConv1Filters, kInputChannels, kConv1Size, kConv1Size);
        if (arch.stage == Stage::kStage1) {
            p.head_w.assign(kHeadInputs, T(0));
        } else {
            p.parts.mode = arch.deform_mode;
            p.parts.specs = arch.parts;
            for (const PartSpec& s : arch.parts) {
                p.parts.filters.emplace_back(1, kConv1Filters, s.f_h, s.f_w);
                p.parts.coeffs.push_back({T(0), T(0), T(0), T(0)});
                p.parts.learned_maps.emplace_back(s.map_h(), s.map_w());
            }
            p.vis = VisibilityParams<T>::make(arch.effective_vis_mode(), arch.parts);
        }
        return p;
    }

    // Fresh trainable state. conv1 comes from the deterministic Gabor bank,
    // everything else from small uniform draws; deformation starts with a
    // mild centered quadratic penalty (c1 = c2 = -0.05).
    static NetworkParams init(const Architecture& arch, Rng& rng) {
        NetworkParams p = make(arch);
        p.conv1 = gabor_bank<T>(kConv1Filters, kConv1Size, kConv1Size, kInputChannels);
        if (arch.stage == Stage::kStage1) {
            init_uniform_xavier(p.head_w.data(), p.head_w.size(), kHeadInputs, 1, rng);
        } else {
            for (std::size_t i = 0; i < p.parts.filters.size(); ++i) {
                FilterBank<T>& f = p.parts.filters[i];
                int fan_in = f.in_channels * f.f_h * f.f_w;
                init_uniform_xavier(f.weights.data(), f.weights.size(), fan_in, f.f_h * f.f_w, rng);
                if (arch.deform_mode == DeformationMode::kQuadratic)
                    p.parts.coeffs[i] = {T(-0.05), T(-0.05), T(0), T(0)};
            }
            VisibilityParams<T>& v = p.vis;
            if (v.mode == VisibilityMode::kLogistic) {
                init_uniform_xavier(v.w.data(), v.w.size(), kPartCount, 1, rng);
            } else {
                for (int l = 0; l < 3; ++l) {
                    auto& g = v.g[static_cast<std::size_t>(l)];
                    init_uniform_xavier(g.data(), g.size(), 1, 1, rng);
                }
                init_uniform_xavier(v.inter[0].data(), v.inter[0].size(), static_cast<int>(v.levels[0].size()),
                                    static_cast<int>(v.levels[1].size()), rng);
                init_uniform_xavier(v.inter[1].data(), v.inter[1].size(), static_cast<int>(v.levels[1].size()),
                                    static_cast<int>(v.levels[2].size()), rng);
                init_uniform_xavier(v.out_w.data(), v.out_w.size(), static_cast<int>(v.levels[2].size()), 1, rng);
            }
        }
        return p;
    }

    void zero() {
        for (auto& g : groups())
            for (std::size_t i = 0; i < g.size; ++i) g.data[i] = T(0);
    }

    // Deformation curvature must stay a cost under maximization.
    void project_constraints() {
        if (arch.has_parts() && arch.deform_mode == DeformationMode::kQuadratic) {
            for (auto& c : parts.coeffs) {
                if (c[0] > T(0)) c[0] = T(0);
                if (c[1] > T(0)) c[1] = T(0);
            }
        }
    }

    std::vector<GroupView> groups() {
        std::vector<GroupView> out;
        out.push_back({"conv1_w", conv1.weights.data(), conv1.weights.size(),
                       {kConv1Filters, kInputChannels, kConv1Size, kConv1Size}});
        out.push_back({"conv1_b", conv1.biases.data(), conv1.biases.size(), {kConv1Filters}});
        if (arch.stage == Stage::kStage1) {
            out.push_back({"head_w", head_w.data(), head_w.size(), {kHeadInputs}});
            out.push_back({"head_b", &head_b, 1, {1}});
            return out;
        }
        for (std::size_t i = 0; i < parts.filters.size(); ++i) {
            std::string id = std::to_string(i + 1);
            FilterBank<T>& f = parts.filters[i];
            out.push_back({"part" + id + "_w", f.weights.data(), f.weights.size(),
                           {kConv1Filters, f.f_h, f.f_w}});
            out.push_back({"part" + id + "_b", f.biases.data(), 1, {1}});
            if (arch.deform_mode == DeformationMode::kQuadratic) {
                out.push_back({"part" + id + "_c", parts.coeffs[i].data(), 4, {4}});
            } else {
                Map2<T>& m = parts.learned_maps[i];
                out.push_back({"part" + id + "_dmap", m.v.data(), m.v.size(), {m.h, m.w}});
            }
        }
        if (vis.mode == VisibilityMode::kLogistic) {
            out.push_back({"vis_w", vis.w.data(), vis.w.size(), {kPartCount}});
            out.push_back({"vis_b", &vis.b, 1, {1}});
        } else {
            for (int l = 0; l < 3; ++l) {
                std::string id = std::to_string(l + 1);
                auto& g = vis.g[static_cast<std::size_t>(l)];
                auto& b = vis.bias[static_cast<std::size_t>(l)];
                out.push_back({"vis_g" + id, g.data(), g.size(), {static_cast<int>(g.size())}});
                out.push_back({"vis_b" + id, b.data(), b.size(), {static_cast<int>(b.size())}});
                if (l < 2) {
                    auto& w = vis.inter[static_cast<std::size_t>(l)];
                    out.push_back({"vis_w" + id + std::to_string(l + 2), w.data(), w.size(),
                                   {static_cast<int>(vis.levels[static_cast<std::size_t>(l)].size()),
                                    static_cast<int>(vis.levels[static_cast<std::size_t>(l) + 1].size())}});
                }
            }
            out.push_back({"vis_out_w", vis.out_w.data(), vis.out_w.size(), {static_cast<int>(vis.out_w.size())}});
            out.push_back({"vis_out_b", &vis.out_b, 1, {1}});
        }
        return out;
    }

    std::size_t scalar_count() {
        std::size_t n = 0;
        for (const auto& g : groups()) n += g.size;
        return n;
    }

    template <typename U>
    NetworkParams<U> cast() {
        NetworkParams<U> o = NetworkParams<U>::make(arch);
        auto src = groups();
        auto dst = o.groups();
        for (std::size_t i = 0; i < src.size(); ++i)
            for (std::size_t j = 0; j < src[i].size; ++j) dst[i].data[j] = static_cast<U>(src[i].data[j]);
        o.head_b = static_cast<U>(head_b);
        return o;
    }
};

// One momentum-SGD step over every group, followed by the deformation sign
// projection. Non-finite gradients abort.
template <typename T>
void sgd_step(NetworkParams<T>& params, NetworkParams<T>& grads, NetworkParams<T>& velocity, T lr, T momentum) {
    if (!(lr > T(0))) throw std::invalid_argument("sgd_step: lr must be > 0");
    if (momentum < T(0) || momentum >= T(1)) throw std::invalid_argument("sgd_step: momentum must be in [0,1)");
    auto pg = params.groups();
    auto gg = grads.groups();
    auto vg = velocity.groups();
    for (std::size_t i = 0; i < pg.size(); ++i) {
        for (std::size_t j = 0; j < gg[i].size; ++j) {
            if (!std::isfinite(static_cast<double>(gg[i].data[j])))
                throw TrainingDivergence("non-finite gradient in group " + gg[i].name);
        }
        sgd_update_span(pg[i].data, gg[i].data, vg[i].data, pg[i].size, lr, momentum);
    }
    params.project_constraints();
}

// ---- checkpoint serialization ----------------------------------------------
//
// Binary container: magic "PARTDET\0", u32 version, architecture descriptor,
// a manifest of (name, dims) per parameter group, then the groups' values as
// raw little-endian f32 arrays in manifest order.

namespace detail {

inline void put_u8(std::string& s, std::uint8_t v) { s.push_back(static_cast<char>(v)); }
inline void put_u16(std::string& s, std::uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_i16(std::string& s, std::int16_t v) { put_u16(s, static_cast<std::uint16_t>(v)); }
inline void put_f32(std::string& s, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(s, bits);
}

struct ByteReader {
    const std::string& s;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > s.size()) throw FormatError("checkpoint: truncated");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(s[pos++]);
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint8_t>(s[pos]) | (static_cast<std::uint16_t>(static_cast<std::uint8_t>(s[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::int16_t i16() { return static_cast<std::int16_t>(u16()); }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string out = s.substr(pos, n);
        pos += n;
        return out;
    }
};

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'P', 'A', 'R', 'T', 'D', 'E', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string serialize_checkpoint(NetworkParams<float>& params) {
    std::string out(kCheckpointMagic, 8);
    detail::put_u32(out, kCheckpointVersion);
    const Architecture& a = params.arch;
    detail::put_u8(out, static_cast<std::uint8_t>(a.stage));
    detail::put_u8(out, static_cast<std::uint8_t>(a.deform_mode));
    detail::put_u8(out, static_cast<std::uint8_t>(a.vis_mode));
    detail::put_u8(out, 0);
    detail::put_u32(out, static_cast<std::uint32_t>(a.parts.size()));
    for (const PartSpec& p : a.parts) {
        detail::put_u8(out, static_cast<std::uint8_t>(p.level));
        detail::put_u8(out, static_cast<std::uint8_t>(p.f_h));
        detail::put_u8(out, static_cast<std::uint8_t>(p.f_w));
        detail::put_u8(out, static_cast<std::uint8_t>(p.mirror_of));
        detail::put_i16(out, static_cast<std::int16_t>(p.anchor_x));
        detail::put_i16(out, static_cast<std::int16_t>(p.anchor_y));
    }
    auto groups = params.groups();
    detail::put_u32(out, static_cast<std::uint32_t>(groups.size()));
    for (const auto& g : groups) {
        detail::put_u16(out, static_cast<std::uint16_t>(g.name.size()));
        out += g.name;
        detail::put_u8(out, static_cast<std::uint8_t>(g.dims.size()));
        for (int d : g.dims) detail::put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (const auto& g : groups)
        for (std::size_t i = 0; i < g.size; ++i) detail::put_f32(out, g.data[i]);
    return out;
}

inline NetworkParams<float> deserialize_checkpoint(const std::string& bytes) {
    detail::ByteReader r{bytes};
    if (r.bytes(8) != std::string(kCheckpointMagic, 8)) throw FormatError("checkpoint: bad magic");
    if (r.u32() != kCheckpointVersion) throw FormatError("checkpoint: unsupported version");
    Architecture a;
    a.stage = static_cast<Stage>(r.u8());
    a.deform_mode = static_cast<DeformationMode>(r.u8());
    a.vis_mode = static_cast<VisibilityMode>(r.u8());
    r.u8();
    std::uint32_t n_parts = r.u32();
    if (a.stage != Stage::kStage1 && n_parts != kPartCount) throw FormatError("checkpoint: bad part count");
    for (std::uint32_t i = 0; i < n_parts; ++i) {
        PartSpec p;
        p.part_id = static_cast<int>(i) + 1;
        p.level = r.u8();
        p.f_h = r.u8();
        p.f_w = r.u8();
        p.mirror_of = r.u8();
        p.anchor_x = r.i16();
        p.anchor_y = r.i16();
        a.parts.push_back(p);
    }
    if (a.parts.empty()) a.parts = default_part_layout();  // stage-1 files may omit the layout

    NetworkParams<float> params = NetworkParams<float>::make(a);
    auto groups = params.groups();
    std::uint32_t n_groups = r.u32();
    if (n_groups != groups.size()) throw FormatError("checkpoint: group count mismatch");
    for (auto& g : groups) {
        std::string name = r.bytes(r.u16());
        if (name != g.name) throw FormatError("checkpoint: group '" + name + "' does not match expected '" + g.name + "'");
        std::uint8_t ndims = r.u8();
        std::size_t total = 1;
        std::vector<int> dims;
        for (std::uint8_t d = 0; d < ndims; ++d) {
            dims.push_back(static_cast<int>(r.u32()));
            total *= static_cast<std::size_t>(dims.back());
        }
        if (dims != g.dims || total != g.size) throw FormatError("checkpoint: dims mismatch in group " + g.name);
    }
    for (auto& g : groups)
        for (std::size_t i = 0; i < g.size; ++i) g.data[i] = r.f32();
    return params;
}

inline void save_checkpoint(const std::string& path, NetworkParams<float>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open checkpoint for writing: " + path);
    std::string bytes = serialize_checkpoint(params);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("checkpoint write failed: " + path);
}

inline NetworkParams<float> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace partdet
