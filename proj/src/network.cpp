#include "microast/network.hpp"

#include "microast/error.hpp"
#include "microast/ops.hpp"

#include <cmath>
#include <random>
#include <set>

namespace microast {

namespace {

constexpr std::size_t kImageChannels = 3;
constexpr std::size_t kMinImageExtent = 16;
constexpr const char* kContentEncoder = "content_encoder";
constexpr const char* kStyleEncoder = "style_encoder";

Shape bias_shape(std::size_t c) { return Shape{c, 1, 1, 1}; }

void add_layer(std::vector<TensorSlot>& slots, const std::string& prefix, Shape weight) {
    slots.push_back({prefix + ".weight", weight});
    slots.push_back({prefix + ".bias", bias_shape(weight.n)});
}

void add_encoder(std::vector<TensorSlot>& slots, const std::string& p, const ChannelPlan& plan) {
    const std::size_t k = plan.kernel;
    const std::size_t b = plan.bottleneck;
    add_layer(slots, p + ".stem", {plan.stem, kImageChannels, k, k});
    add_layer(slots, p + ".ds1.depthwise", {plan.stem, 1, k, k});
    add_layer(slots, p + ".ds1.pointwise", {plan.mid, plan.stem, 1, 1});
    add_layer(slots, p + ".ds2.depthwise", {plan.mid, 1, k, k});
    add_layer(slots, p + ".ds2.pointwise", {b, plan.mid, 1, 1});
    for (const char* block : {".res1", ".res2"}) {
        add_layer(slots, p + block + ".conv1", {b, b, k, k});
        add_layer(slots, p + block + ".conv2", {b, b, k, k});
    }
}

std::string head_name(const char* net, std::size_t i) {
    return std::string("modulator.") + net + ".head" + std::to_string(i);
}

void add_modulator(std::vector<TensorSlot>& slots, const ChannelPlan& plan) {
    const std::size_t b = plan.bottleneck;
    for (const char* net : {"weight_net", "bias_net"}) {
        add_layer(slots, std::string("modulator.") + net + ".hidden", {b, b, 1, 1});
        for (std::size_t i = 0; i < plan.modulated_convs; ++i) add_layer(slots, head_name(net, i), {b, b, 1, 1});
    }
}

void add_decoder(std::vector<TensorSlot>& slots, const ChannelPlan& plan) {
    const std::size_t k = plan.kernel;
    const std::size_t b = plan.bottleneck;
    for (const char* block : {"decoder.res1", "decoder.res2"}) {
        add_layer(slots, std::string(block) + ".conv1", {b, b, k, k});
        add_layer(slots, std::string(block) + ".conv2", {b, b, k, k});
    }
    add_layer(slots, "decoder.up1.depthwise", {b, 1, k, k});
    add_layer(slots, "decoder.up1.pointwise", {plan.mid, b, 1, 1});
    add_layer(slots, "decoder.up2.depthwise", {plan.mid, 1, k, k});
    add_layer(slots, "decoder.up2.pointwise", {plan.stem, plan.mid, 1, 1});
    add_layer(slots, "decoder.out", {kImageChannels, plan.stem, k, k});
}

void check_image(const TensorF32& image, const char* what) {
    if (image.c() != kImageChannels) {
        throw ShapeError(std::string(what) + ": expected a 3-channel image, got " + to_string(image.shape()));
    }
    if (image.h() < kMinImageExtent || image.w() < kMinImageExtent) {
        throw ShapeError(std::string(what) + ": image extents must be at least 16x16, got " +
                         to_string(image.shape()));
    }
}

TensorF32 encode(const TensorF32& image, const NetworkWeights& weights, const std::string& p) {
    TensorF32 f = conv2d(image, load_conv(weights, p + ".stem"));
    relu_inplace(f);
    for (const char* stage : {".ds1", ".ds2"}) {
        const ConvParams dw = load_conv(weights, p + stage + ".depthwise", 2, static_cast<int>(f.c()));
        const ConvParams pw = load_conv(weights, p + stage + ".pointwise");
        f = depthwise_separable_conv2d(f, dw, pw);
        relu_inplace(f);
    }
    for (const char* block : {".res1", ".res2"}) {
        f = residual_block(f, load_conv(weights, p + block + ".conv1"), load_conv(weights, p + block + ".conv2"));
    }
    return f;
}

// Dense layer on a vector: out[o] = sum_i w[o, i] * in[i] + b[o].
std::vector<float> dense(const TensorF32& w, const TensorF32& b, const std::vector<float>& in) {
    std::vector<float> out(w.n());
    for (std::size_t o = 0; o < w.n(); ++o) {
        float acc = 0.0f;
        for (std::size_t i = 0; i < w.c(); ++i) acc += w.at(o, i, 0, 0) * in[i];
        out[o] = acc + b.data()[o];
    }
    return out;
}

double conv_macs(std::size_t out_h, std::size_t out_w, std::size_t out_c, std::size_t in_per_group, std::size_t kh,
                 std::size_t kw) {
    return static_cast<double>(out_h) * static_cast<double>(out_w) * static_cast<double>(out_c) *
           static_cast<double>(in_per_group * kh * kw);
}

double encoder_macs(std::size_t h, std::size_t w, const ChannelPlan& plan) {
    const std::size_t k = plan.kernel;
    const int pad = static_cast<int>(k / 2);
    double macs = conv_macs(h, w, plan.stem, kImageChannels, k, k);
    const std::size_t h1 = conv_output_extent(h, k, 2, pad);
    const std::size_t w1 = conv_output_extent(w, k, 2, pad);
    macs += conv_macs(h1, w1, plan.stem, 1, k, k) + conv_macs(h1, w1, plan.mid, plan.stem, 1, 1);
    const std::size_t h2 = conv_output_extent(h1, k, 2, pad);
    const std::size_t w2 = conv_output_extent(w1, k, 2, pad);
    macs += conv_macs(h2, w2, plan.mid, 1, k, k) + conv_macs(h2, w2, plan.bottleneck, plan.mid, 1, 1);
    macs += 4.0 * conv_macs(h2, w2, plan.bottleneck, plan.bottleneck, k, k);
    return macs;
}

double decoder_macs(std::size_t h4, std::size_t w4, const ChannelPlan& plan) {
    const std::size_t k = plan.kernel;
    const std::size_t b = plan.bottleneck;
    double macs = 2.0 * kDecoderResBlocks * conv_macs(h4, w4, b, b, k, k);
    macs += conv_macs(2 * h4, 2 * w4, b, 1, k, k) + conv_macs(2 * h4, 2 * w4, plan.mid, b, 1, 1);
    macs += conv_macs(4 * h4, 4 * w4, plan.mid, 1, k, k) + conv_macs(4 * h4, 4 * w4, plan.stem, plan.mid, 1, 1);
    macs += conv_macs(4 * h4, 4 * w4, kImageChannels, plan.stem, k, k);
    return macs;
}

double modulator_macs(const ChannelPlan& plan) {
    const auto b = static_cast<double>(plan.bottleneck);
    return 2.0 * (1.0 + static_cast<double>(plan.modulated_convs)) * b * b;
}

std::size_t round_up4(std::size_t v) { return (v + 3) / 4 * 4; }

}  // namespace

void ChannelPlan::validate() const {
    if (stem == 0 || mid == 0 || bottleneck == 0) throw SchemaError("channel plan: widths must be positive");
    if (kernel == 0 || kernel % 2 == 0) throw SchemaError("channel plan: kernel size must be odd");
    if (modulated_convs != 2 * kDecoderResBlocks) {
        throw SchemaError("channel plan: the decoder has " + std::to_string(2 * kDecoderResBlocks) +
                          " modulated convolutions, plan says " + std::to_string(modulated_convs));
    }
}

std::vector<TensorSlot> architecture(const ChannelPlan& plan) {
    plan.validate();
    std::vector<TensorSlot> slots;
    add_encoder(slots, kContentEncoder, plan);
    add_encoder(slots, kStyleEncoder, plan);
    add_modulator(slots, plan);
    add_decoder(slots, plan);
    return slots;
}

NetworkWeights::NetworkWeights(ChannelPlan plan, std::vector<Entry> tensors) : plan_(plan) {
    const auto slots = architecture(plan_);
    std::map<std::string, std::size_t, std::less<>> given;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (!given.emplace(tensors[i].first, i).second) {
            throw SchemaError("weights: duplicate tensor '" + tensors[i].first + "'");
        }
    }
    tensors_.reserve(slots.size());
    for (const auto& slot : slots) {
        const auto it = given.find(slot.name);
        if (it == given.end()) throw SchemaError("weights: missing tensor '" + slot.name + "'");
        TensorF32& t = tensors[it->second].second;
        if (t.shape() != slot.shape) {
            throw SchemaError("weights: tensor '" + slot.name + "' has shape " + to_string(t.shape()) +
                              ", expected " + to_string(slot.shape));
        }
        index_.emplace(slot.name, tensors_.size());
        tensors_.emplace_back(slot.name, std::move(t));
        given.erase(it);
    }
    if (!given.empty()) throw SchemaError("weights: unexpected tensor '" + given.begin()->first + "'");
}

const TensorF32& NetworkWeights::get(std::string_view name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw SchemaError("weights: no tensor named '" + std::string(name) + "'");
    return tensors_[it->second].second;
}

ConvParams load_conv(const NetworkWeights& weights, const std::string& prefix, int stride, int groups) {
    ConvParams p;
    p.weight = weights.get(prefix + ".weight");
    const auto bias = weights.get(prefix + ".bias").data();
    p.bias.assign(bias.begin(), bias.end());
    p.stride = stride;
    p.groups = groups;
    p.pad_mode = PadMode::Reflect;
    p.pad = static_cast<int>(p.kernel_h() / 2);
    return p;
}

std::size_t feature_extent(std::size_t input) { return (input + 3) / 4; }

TensorF32 encode_content(const TensorF32& image, const NetworkWeights& weights) {
    check_image(image, "encode_content");
    return encode(image, weights, kContentEncoder);
}

TensorF32 encode_style(const TensorF32& image, const NetworkWeights& weights) {
    check_image(image, "encode_style");
    return encode(image, weights, kStyleEncoder);
}

ModSignals derive_signals(const TensorF32& style_feature, const NetworkWeights& weights) {
    const ChannelPlan& plan = weights.plan();
    if (style_feature.n() != 1 || style_feature.c() != plan.bottleneck) {
        throw ShapeError("derive_signals: expected 1x" + std::to_string(plan.bottleneck) + "xHxW, got " +
                         to_string(style_feature.shape()));
    }
    ChannelStats stats = instance_stats(style_feature);
    ModSignals signals;
    // The global average pool equals the per-channel mean.
    const std::vector<float> pooled = stats.mean;
    signals.mu = std::move(stats.mean);
    signals.sigma = std::move(stats.std);

    auto run_net = [&](const char* net) {
        const std::string base = std::string("modulator.") + net;
        std::vector<float> hidden = dense(weights.get(base + ".hidden.weight"), weights.get(base + ".hidden.bias"), pooled);
        for (float& v : hidden) v = v > 0.0f ? v : 0.0f;
        std::vector<std::vector<float>> heads;
        for (std::size_t i = 0; i < plan.modulated_convs; ++i) {
            const std::string head = head_name(net, i);
            heads.push_back(dense(weights.get(head + ".weight"), weights.get(head + ".bias"), hidden));
        }
        return heads;
    };
    auto w_heads = run_net("weight_net");
    auto b_heads = run_net("bias_net");
    for (std::size_t i = 0; i < plan.modulated_convs; ++i) {
        signals.filters.push_back({std::move(w_heads[i]), std::move(b_heads[i])});
    }
    return signals;
}

TensorF32 decode(const TensorF32& content_feature, const ModSignals& signals, const NetworkWeights& weights) {
    const ChannelPlan& plan = weights.plan();
    if (content_feature.c() != plan.bottleneck) {
        throw ShapeError("decode: content feature must have " + std::to_string(plan.bottleneck) + " channels, got " +
                         to_string(content_feature.shape()));
    }
    signals.validate(plan.bottleneck, plan.modulated_convs);

    TensorF32 f = content_feature;
    for (std::size_t block = 0; block < kDecoderResBlocks; ++block) {
        const std::string p = "decoder.res" + std::to_string(block + 1);
        f = feat_mod(f, signals.mu, signals.sigma);
        f = modulated_resblock(f, load_conv(weights, p + ".conv1"), load_conv(weights, p + ".conv2"),
                               signals.filters[2 * block], signals.filters[2 * block + 1]);
    }
    for (const char* stage : {"decoder.up1", "decoder.up2"}) {
        const std::string p = stage;
        const ConvParams dw = load_conv(weights, p + ".depthwise", 1, static_cast<int>(f.c()));
        const ConvParams pw = load_conv(weights, p + ".pointwise");
        f = upsample_depthwise_separable_conv2d(f, 2, dw, pw);
        relu_inplace(f);
    }
    f = conv2d(f, load_conv(weights, "decoder.out"));
    clamp_inplace(f, 0.0f, 1.0f);
    return f;
}

TensorF32 stylize(const TensorF32& content, const TensorF32& style, const NetworkWeights& weights) {
    check_image(content, "stylize (content)");
    check_image(style, "stylize (style)");

    ModSignals signals = derive_signals(encode_style(style, weights), weights);

    const std::size_t h = content.h();
    const std::size_t w = content.w();
    const std::size_t ph = round_up4(h);
    const std::size_t pw = round_up4(w);
    TensorF32 f_c;
    if (ph != h || pw != w) {
        f_c = encode_content(reflect_pad(content, 0, static_cast<int>(ph - h), 0, static_cast<int>(pw - w)), weights);
    } else {
        f_c = encode_content(content, weights);
    }
    TensorF32 out = decode(f_c, signals, weights);
    f_c = TensorF32();
    if (out.h() == h && out.w() == w) return out;
    return crop(out, 0, 0, h, w);
}

std::size_t count_params(const NetworkWeights& weights) {
    std::size_t total = 0;
    for (const auto& [name, t] : weights.tensors()) total += t.numel();
    return total;
}

std::size_t count_params(const ChannelPlan& plan) {
    std::size_t total = 0;
    for (const auto& slot : architecture(plan)) total += slot.shape.numel();
    return total;
}

double estimate_flops(std::size_t height, std::size_t width, const ChannelPlan& plan) {
    return estimate_flops(height, width, height, width, plan);
}

double estimate_flops(std::size_t content_h, std::size_t content_w, std::size_t style_h, std::size_t style_w,
                      const ChannelPlan& plan) {
    plan.validate();
    const std::size_t ph = round_up4(content_h);
    const std::size_t pw = round_up4(content_w);
    const double macs = encoder_macs(ph, pw, plan) + encoder_macs(style_h, style_w, plan) + modulator_macs(plan) +
                        decoder_macs(feature_extent(ph), feature_extent(pw), plan);
    return 2.0 * macs;
}

NetworkWeights init_weights(std::uint64_t seed, bool neutral, const ChannelPlan& plan) {
    const auto slots = architecture(plan);
    std::mt19937_64 rng(seed);
    // 24 high bits -> [0, 1); identical on every standard library.
    auto uniform = [&rng](float bound) {
        const float u = static_cast<float>(rng() >> 40) * 0x1.0p-24f;
        return (2.0f * u - 1.0f) * bound;
    };

    std::vector<NetworkWeights::Entry> tensors;
    float bound = 1.0f;
    for (const auto& slot : slots) {
        const bool is_weight = slot.name.ends_with(".weight");
        if (is_weight) bound = 1.0f / std::sqrt(static_cast<float>(slot.shape.c * slot.shape.h * slot.shape.w));
        TensorF32 t(slot.shape);
        for (float& v : t.data()) v = uniform(bound);
        if (neutral) {
            const bool style_weight = slot.name.starts_with(kStyleEncoder) && is_weight;
            const bool modulator = slot.name.starts_with("modulator.");
            if (style_weight || modulator) {
                const bool unit = slot.name.starts_with("modulator.weight_net.head") && !is_weight;
                for (float& v : t.data()) v = unit ? 1.0f : 0.0f;
            }
        }
        tensors.emplace_back(slot.name, std::move(t));
    }
    return NetworkWeights(plan, std::move(tensors));
}

}  // namespace microast
