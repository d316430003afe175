#pragma once

#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "yk/blocks.hpp"
#include "yk/config.hpp"

namespace yk {

struct RawPredictions {
    Task task = Task::Detect;
    // detect: three maps (n, 4+1+nc, h_l, w_l), strides 8/16/32, raw
    // pre-sigmoid values, channel layout [box(4), objectness(1), classes(nc)]
    std::vector<Tensor4> maps;
    std::vector<std::int64_t> strides;
    // classify: logits (n, nc, 1, 1)
    Tensor4 logits;
};

namespace layers {

struct Conv {
    Cbs cbs;
};
struct C3k2L {
    yk::C3k2 block;
};
struct C2fL {
    yk::C2f block;
};
struct SppfL {
    yk::Sppf block;
};
struct C2psaL {
    yk::C2psa block;
};
struct UpsampleL {};
struct ConcatL {};

struct DetectBranch {
    Cbs box1, box2;
    Tensor4 box_w;               // 1x1 -> 4, with bias
    std::vector<float> box_b;
    std::vector<Cbs> cls;        // conv stack before the class/objectness 1x1
    Tensor4 cls_w;               // 1x1 -> 1+nc, with bias
    std::vector<float> cls_b;
};

struct DetectL {
    std::vector<DetectBranch> branches;
    std::int64_t nc = 80;
    bool dw = false;
};

struct ClassifyL {
    Cbs pre;
    Tensor4 fc_w;  // 1x1 (nc, c, 1, 1), with bias
    std::vector<float> fc_b;
};

using Impl = std::variant<Conv, C3k2L, C2fL, SppfL, C2psaL, UpsampleL, ConcatL, DetectL, ClassifyL>;

}  // namespace layers

struct Layer {
    ScaledLayer decl;
    layers::Impl impl;
    std::int64_t out_channels = 0;
};

struct Model {
    ScaledSpec spec;
    std::vector<Layer> layers;
    std::uint64_t seed = 0;
    // per-layer output shapes at the 640x640 reference input (Detect and
    // Classify contribute one entry per output map)
    std::vector<std::vector<Shape4>> ref_shapes;

    std::vector<TensorRef> tensor_refs() {
        std::vector<TensorRef> refs;
        for (size_t i = 0; i < layers.size(); ++i) {
            const std::string prefix = "layer" + std::to_string(i);
            std::visit(
                [&](auto& l) {
                    using T = std::decay_t<decltype(l)>;
                    if constexpr (std::is_same_v<T, layers::Conv>) {
                        l.cbs.collect(prefix, refs);
                    } else if constexpr (std::is_same_v<T, layers::C3k2L> ||
                                         std::is_same_v<T, layers::C2fL> ||
                                         std::is_same_v<T, layers::SppfL> ||
                                         std::is_same_v<T, layers::C2psaL>) {
                        l.block.collect(prefix, refs);
                    } else if constexpr (std::is_same_v<T, layers::DetectL>) {
                        for (size_t b = 0; b < l.branches.size(); ++b) {
                            auto& br = l.branches[b];
                            const std::string bp = prefix + ".b" + std::to_string(b);
                            br.box1.collect(bp + ".box1", refs);
                            br.box2.collect(bp + ".box2", refs);
                            push_ref(refs, bp + ".box.weight", br.box_w);
                            push_ref(refs, bp + ".box.bias", br.box_b);
                            for (size_t c = 0; c < br.cls.size(); ++c)
                                br.cls[c].collect(bp + ".cls" + std::to_string(c), refs);
                            push_ref(refs, bp + ".cls.weight", br.cls_w);
                            push_ref(refs, bp + ".cls.bias", br.cls_b);
                        }
                    } else if constexpr (std::is_same_v<T, layers::ClassifyL>) {
                        l.pre.collect(prefix + ".pre", refs);
                        push_ref(refs, prefix + ".fc.weight", l.fc_w);
                        push_ref(refs, prefix + ".fc.bias", l.fc_b);
                    }
                },
                layers[i].impl);
        }
        return refs;
    }
};

inline std::vector<std::vector<Shape4>> infer_shapes(const Model& m, std::int64_t n,
                                                     std::int64_t h, std::int64_t w);

namespace detail_model {

inline layers::DetectBranch make_detect_branch(Rng& rng, std::int64_t ch, std::int64_t c2,
                                               std::int64_t c3, std::int64_t nc, bool dw) {
    layers::DetectBranch br;
    br.box1 = Cbs::make(rng, ch, c2, 3);
    br.box2 = Cbs::make(rng, c2, c2, 3);
    br.box_w = init_conv_weight(rng, 4, c2, 1, 1);
    br.box_b.assign(4, 0.0f);
    if (dw) {
        br.cls.push_back(Cbs::make(rng, ch, ch, 3, 1, ch));
        br.cls.push_back(Cbs::make(rng, ch, c3, 1));
        br.cls.push_back(Cbs::make(rng, c3, c3, 3, 1, c3));
        br.cls.push_back(Cbs::make(rng, c3, c3, 1));
    } else {
        br.cls.push_back(Cbs::make(rng, ch, c3, 3));
        br.cls.push_back(Cbs::make(rng, c3, c3, 3));
    }
    br.cls_w = init_conv_weight(rng, 1 + nc, c3, 1, 1);
    br.cls_b.assign(static_cast<size_t>(1 + nc), 0.0f);
    return br;
}

}  // namespace detail_model

inline Model build_model(const ScaledSpec& spec, std::uint64_t seed) {
    Model m;
    m.spec = spec;
    m.seed = seed;
    Rng rng(seed);

    std::vector<std::int64_t> ch(spec.layers.size(), 0);
    auto src_ch = [&](int f) { return f < 0 ? std::int64_t(3) : ch[static_cast<size_t>(f)]; };

    for (const auto& l : spec.layers) {
        const std::int64_t cin = src_ch(l.from[0]);
        Layer out;
        out.decl = l;
        try {
            switch (l.module) {
                case Module::Conv:
                    out.impl = layers::Conv{Cbs::make(rng, cin, l.c, l.k, l.stride)};
                    out.out_channels = l.c;
                    break;
                case Module::C3k2:
                    out.impl = layers::C3k2L{
                        C3k2::make(rng, cin, l.c, l.repeats, l.c3k, l.shortcut, l.e)};
                    out.out_channels = l.c;
                    break;
                case Module::C2f:
                    out.impl = layers::C2fL{C2f::make(rng, cin, l.c, l.repeats, l.shortcut, l.e)};
                    out.out_channels = l.c;
                    break;
                case Module::SPPF:
                    out.impl = layers::SppfL{Sppf::make(rng, cin, l.c, l.k)};
                    out.out_channels = l.c;
                    break;
                case Module::C2PSA:
                    check(l.c == cin, "C2PSA requires matching in/out channels");
                    out.impl = layers::C2psaL{C2psa::make(rng, cin, l.repeats)};
                    out.out_channels = l.c;
                    break;
                case Module::Upsample:
                    out.impl = layers::UpsampleL{};
                    out.out_channels = cin;
                    break;
                case Module::Concat: {
                    std::int64_t total = 0;
                    for (int f : l.from) total += src_ch(f);
                    out.impl = layers::ConcatL{};
                    out.out_channels = total;
                    break;
                }
                case Module::Detect: {
                    layers::DetectL det;
                    det.nc = spec.num_classes;
                    det.dw = l.dw;
                    const std::int64_t ch0 = src_ch(l.from[0]);
                    const std::int64_t c2 = std::max<std::int64_t>({16, ch0 / 4, 64});
                    const std::int64_t c3 =
                        std::max<std::int64_t>(ch0, std::min<std::int64_t>(spec.num_classes, 100));
                    for (int f : l.from)
                        det.branches.push_back(detail_model::make_detect_branch(
                            rng, src_ch(f), c2, c3, spec.num_classes, l.dw));
                    out.impl = std::move(det);
                    out.out_channels = 4 + 1 + spec.num_classes;
                    break;
                }
                case Module::Classify: {
                    layers::ClassifyL cl;
                    cl.pre = Cbs::make(rng, cin, l.c, 1);
                    cl.fc_w = init_conv_weight(rng, spec.num_classes, l.c, 1, 1);
                    cl.fc_b.assign(static_cast<size_t>(spec.num_classes), 0.0f);
                    out.impl = std::move(cl);
                    out.out_channels = spec.num_classes;
                    break;
                }
            }
        } catch (const Error& e) {
            fail("shape inference failure at layer " + std::to_string(l.index) + " (" +
                 module_name(l.module) + "): " + e.what());
        }
        ch[static_cast<size_t>(l.index)] = out.out_channels;
        m.layers.push_back(std::move(out));
    }

    // precompute reference shapes at 640x640
    m.ref_shapes = infer_shapes(m, 1, 640, 640);
    return m;
}

// Static shape walk; forward() must observe exactly these shapes.
inline std::vector<std::vector<Shape4>> infer_shapes(const Model& m, std::int64_t n,
                                                     std::int64_t h, std::int64_t w) {
    std::vector<std::vector<Shape4>> shapes(m.layers.size());
    const Shape4 input{n, 3, h, w};
    auto src_shape = [&](int f) {
        return f < 0 ? input : shapes[static_cast<size_t>(f)][0];
    };
    for (size_t i = 0; i < m.layers.size(); ++i) {
        const auto& l = m.layers[i].decl;
        const Shape4 s0 = src_shape(l.from[0]);
        switch (l.module) {
            case Module::Conv: {
                const std::int64_t oh = conv_out_dim(s0.h, l.k, l.stride, l.k / 2);
                const std::int64_t ow = conv_out_dim(s0.w, l.k, l.stride, l.k / 2);
                check(oh >= 1 && ow >= 1,
                      "shape inference failure at layer " + std::to_string(l.index));
                shapes[i] = {{s0.n, m.layers[i].out_channels, oh, ow}};
                break;
            }
            case Module::C3k2:
            case Module::C2f:
            case Module::SPPF:
            case Module::C2PSA:
                shapes[i] = {{s0.n, m.layers[i].out_channels, s0.h, s0.w}};
                break;
            case Module::Upsample:
                shapes[i] = {{s0.n, s0.c, 2 * s0.h, 2 * s0.w}};
                break;
            case Module::Concat: {
                std::int64_t c = 0;
                for (int f : l.from) {
                    const Shape4 s = src_shape(f);
                    check(s.h == s0.h && s.w == s0.w,
                          "concat spatial mismatch at layer " + std::to_string(l.index));
                    c += s.c;
                }
                shapes[i] = {{s0.n, c, s0.h, s0.w}};
                break;
            }
            case Module::Detect: {
                std::vector<Shape4> outs;
                for (int f : l.from) {
                    const Shape4 s = src_shape(f);
                    outs.push_back({s.n, m.layers[i].out_channels, s.h, s.w});
                }
                shapes[i] = outs;
                break;
            }
            case Module::Classify:
                shapes[i] = {{s0.n, m.spec.num_classes, 1, 1}};
                break;
        }
    }
    return shapes;
}

inline RawPredictions forward(const Model& m, const Tensor4& x) {
    check(x.shape.c == 3, "forward: input must have 3 channels");
    if (m.spec.task == Task::Detect)
        check(x.shape.h % 32 == 0 && x.shape.w % 32 == 0,
              "forward: input spatial dims must be divisible by 32, got " + x.shape.str());
    ensure_finite(x, "forward input");

    // last layer that reads each cached output, so activations can be freed
    std::vector<size_t> last_use(m.layers.size(), 0);
    for (size_t i = 0; i < m.layers.size(); ++i)
        for (int f : m.layers[i].decl.from)
            if (f >= 0) last_use[static_cast<size_t>(f)] = i;

    std::vector<std::optional<Tensor4>> cache(m.layers.size());
    EvalCtx cx;
    RawPredictions preds;
    preds.task = m.spec.task;

    auto src = [&](int f) -> const Tensor4& {
        return f < 0 ? x : *cache[static_cast<size_t>(f)];
    };

    for (size_t i = 0; i < m.layers.size(); ++i) {
        const auto& layer = m.layers[i];
        const auto& decl = layer.decl;
        try {
            std::visit(
                [&](const auto& l) {
                    using T = std::decay_t<decltype(l)>;
                    if constexpr (std::is_same_v<T, layers::Conv>) {
                        cache[i] = l.cbs.forward(cx, src(decl.from[0]));
                    } else if constexpr (std::is_same_v<T, layers::C3k2L> ||
                                         std::is_same_v<T, layers::C2fL> ||
                                         std::is_same_v<T, layers::SppfL> ||
                                         std::is_same_v<T, layers::C2psaL>) {
                        cache[i] = l.block.forward(cx, src(decl.from[0]));
                    } else if constexpr (std::is_same_v<T, layers::UpsampleL>) {
                        cache[i] = upsample_nearest2x(src(decl.from[0]));
                    } else if constexpr (std::is_same_v<T, layers::ConcatL>) {
                        std::vector<const Tensor4*> parts;
                        for (int f : decl.from) parts.push_back(&src(f));
                        cache[i] = concat_channels(parts);
                    } else if constexpr (std::is_same_v<T, layers::DetectL>) {
                        for (size_t b = 0; b < l.branches.size(); ++b) {
                            const auto& br = l.branches[b];
                            const Tensor4& in = src(decl.from[b]);
                            Tensor4 box = conv2d(
                                br.box2.forward(cx, br.box1.forward(cx, in)), br.box_w,
                                &br.box_b, ConvParams{1, 1, 1, 0, 1});
                            Tensor4 c = in;
                            for (const auto& stage : br.cls) c = stage.forward(cx, c);
                            Tensor4 cls =
                                conv2d(c, br.cls_w, &br.cls_b, ConvParams{1, 1, 1, 0, 1});
                            preds.maps.push_back(
                                concat_channels<float>({&box, &cls}));
                            preds.strides.push_back(x.shape.h / box.shape.h);
                        }
                    } else if constexpr (std::is_same_v<T, layers::ClassifyL>) {
                        Tensor4 y = l.pre.forward(cx, src(decl.from[0]));
                        y = global_avgpool(y);
                        preds.logits = conv2d(y, l.fc_w, &l.fc_b, ConvParams{1, 1, 1, 0, 1});
                    }
                },
                layer.impl);
        } catch (const Error& e) {
            fail("layer " + std::to_string(i) + " (" + module_name(decl.module) +
                 "): " + e.what());
        }
        // drop activations nothing later reads
        for (size_t j = 0; j <= i; ++j)
            if (cache[j] && last_use[j] <= i) cache[j].reset();
    }
    return preds;
}

// ---------------------------------------------------------------------------
// Weights file: magic "YWTS", u32 LE version=1, u64 LE header_len, UTF-8 JSON
// header {name: {shape, dtype:"f32", offset, nbytes}}, then raw LE f32 data.
// ---------------------------------------------------------------------------

inline std::string save_weights(Model& m) {
    auto refs = m.tensor_refs();
    nlohmann::json header = nlohmann::json::object();
    std::uint64_t offset = 0;
    for (const auto& r : refs) {
        header[r.name] = {{"shape", r.dims},
                          {"dtype", "f32"},
                          {"offset", offset},
                          {"nbytes", static_cast<std::uint64_t>(r.numel) * 4}};
        offset += static_cast<std::uint64_t>(r.numel) * 4;
    }
    const std::string hs = header.dump();

    std::string out;
    out.reserve(16 + hs.size() + offset);
    out.append("YWTS", 4);
    const std::uint32_t version = 1;
    out.append(reinterpret_cast<const char*>(&version), 4);
    const std::uint64_t hlen = hs.size();
    out.append(reinterpret_cast<const char*>(&hlen), 8);
    out.append(hs);
    for (const auto& r : refs)
        out.append(reinterpret_cast<const char*>(r.data),
                   static_cast<size_t>(r.numel) * 4);
    return out;
}

inline void load_weights(Model& m, const std::string& bytes) {
    check(bytes.size() >= 16, "unexpected end of data");
    check(bytes.compare(0, 4, "YWTS") == 0, "bad magic: not a YWTS weights file");
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + 4, 4);
    check(version == 1, "unsupported weights version " + std::to_string(version));
    std::uint64_t hlen = 0;
    std::memcpy(&hlen, bytes.data() + 8, 8);
    check(bytes.size() >= 16 + hlen, "unexpected end of data");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(16, hlen));
    } catch (const std::exception& e) {
        fail(std::string("corrupt weights header: ") + e.what());
    }
    const size_t data_start = 16 + static_cast<size_t>(hlen);

    auto refs = m.tensor_refs();
    for (auto& r : refs) {
        const auto it = header.find(r.name);
        check(it != header.end(), "missing tensor '" + r.name + "' in weights file");
        const auto& meta = *it;
        check(meta.at("dtype") == "f32", "tensor '" + r.name + "': unsupported dtype");
        const auto shape = meta.at("shape").get<std::vector<std::int64_t>>();
        check(shape == r.dims, "tensor '" + r.name + "': shape mismatch");
        const auto offset = meta.at("offset").get<std::uint64_t>();
        const auto nbytes = meta.at("nbytes").get<std::uint64_t>();
        check(nbytes == static_cast<std::uint64_t>(r.numel) * 4,
              "tensor '" + r.name + "': size mismatch");
        check(data_start + offset + nbytes <= bytes.size(), "unexpected end of data");
        std::memcpy(r.data, bytes.data() + data_start + offset, nbytes);
    }
    check(header.size() == refs.size(), "weights file has unexpected extra tensors");
}

}  // namespace yk
