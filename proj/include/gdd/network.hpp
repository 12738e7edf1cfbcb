#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gdd/autodiff.hpp"
#include "gdd/nn_ops.hpp"
#include "gdd/rng.hpp"

namespace gdd {

enum class Variant { gdd, dd, dip_z, dip_g };

inline const char* to_string(Variant v) {
    switch (v) {
        case Variant::gdd: return "gdd";
        case Variant::dd: return "dd";
        case Variant::dip_z: return "dip-z";
        case Variant::dip_g: return "dip-g";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    if (s == "gdd") return Variant::gdd;
    if (s == "dd") return Variant::dd;
    if (s == "dip-z" || s == "dip_z") return Variant::dip_z;
    if (s == "dip-g" || s == "dip_g") return Variant::dip_g;
    throw ValidationError("unknown variant '" + s + "' (expected gdd|dd|dip-z|dip-g)");
}

// forced_ones replaces every gate output with ones; the refinement units then
// still multiply, which makes them exact identities on F.
enum class GateMode { learned, forced_ones };

enum class RefinementUnit { uru, fru };

inline const char* to_string(RefinementUnit u) { return u == RefinementUnit::uru ? "uru" : "fru"; }

struct NetworkConfig {
    std::size_t scales = 4;               // K
    std::size_t base_channels = 64;       // deep-decoder width
    std::size_t guidance_channels = 64;   // guidance encoder-decoder width
    double leaky_slope = 0.1;
    std::uint64_t seed = 0;
};

template <class Real>
struct ConvLayer {
    Parameter<Real> weight;
    Parameter<Real> bias;
    std::size_t stride = 1;

    Node<Real> operator()(const Node<Real>& x) const { return conv2d(x, weight.node(), bias.node(), stride); }
};

template <class Real>
struct NormLayer {
    Parameter<Real> gain;
    Parameter<Real> shift;

    Node<Real> operator()(const Node<Real>& x) const { return channel_norm(x, gain.node(), shift.node(), Real(1e-6)); }
};

// conv -> CN -> LeakyReLU
template <class Real>
struct ConvBlock {
    ConvLayer<Real> conv;
    NormLayer<Real> norm;

    Node<Real> operator()(const Node<Real>& x, Real slope) const { return leaky_relu(norm(conv(x)), slope); }
};

// Uniform samples in [0, 0.1].
template <class Real>
Tensor<Real> init_code_tensor(Rng& rng, const Shape& shape) {
    Tensor<Real> z(shape);
    for (auto& v : z.data()) v = static_cast<Real>(0.1 * rng.uniform());
    return z;
}

template <class Real>
Node<Real> attention_gate(const Node<Real>& features, const ConvLayer<Real>& gate, Real slope) {
    return sigmoid(leaky_relu(gate(features), slope));
}

namespace detail {

template <class Real>
Node<Real> refine(const Node<Real>& f, const Node<Real>& source, const ConvLayer<Real>& gate, Real slope,
                  GateMode mode, const char* unit) {
    if (f.shape().height != source.shape().height || f.shape().width != source.shape().width) {
        throw ShapeError(std::string(unit) + ": feature " + to_string(f.shape()) + " and guidance " +
                         to_string(source.shape()) + " differ in spatial size");
    }
    Node<Real> weights = mode == GateMode::forced_ones ? constant(Tensor<Real>(f.shape(), Real(1)))
                                                       : attention_gate(source, gate, slope);
    require_same_shape(f.shape(), weights.shape(), unit);
    return mul(f, weights);
}

}  // namespace detail

// Upsampling refinement: F scaled elementwise by the gated encoder feature.
template <class Real>
Node<Real> uru(const Node<Real>& f, const Node<Real>& encoder_feature, const ConvLayer<Real>& gate, Real slope,
               GateMode mode = GateMode::learned) {
    return detail::refine(f, encoder_feature, gate, slope, mode, "uru");
}

// Feature refinement: F scaled elementwise by the gated guidance-decoder feature.
template <class Real>
Node<Real> fru(const Node<Real>& f, const Node<Real>& decoder_feature, const ConvLayer<Real>& gate, Real slope,
               GateMode mode = GateMode::learned) {
    return detail::refine(f, decoder_feature, gate, slope, mode, "fru");
}

template <class Real>
struct GuidanceFeatures {
    // Index s-1 feeds deep-decoder stage s; both lists run coarse to fine and
    // entry s-1 has spatial size H / 2^(K-s).
    std::vector<Node<Real>> encoder;  // Gamma_1..Gamma_K
    std::vector<Node<Real>> decoder;  // Xi_1..Xi_K
};

template <class Real>
struct AttentionMap {
    std::size_t scale;  // 1..K, coarse to fine
    RefinementUnit unit;
    std::size_t channel;
    Tensor<Real> weights;  // 1 x h_k x w_k
};

template <class Real>
class GddModel {
public:
    Variant variant() const { return variant_; }
    const NetworkConfig& config() const { return config_; }
    const Shape& guidance_shape() const { return guidance_shape_; }
    Shape output_shape() const { return {out_channels_, guidance_shape_.height, guidance_shape_.width}; }
    const Tensor<Real>& code() const { return code_; }

    std::vector<Parameter<Real>>& parameters() { return params_; }
    const std::vector<Parameter<Real>>& parameters() const { return params_; }
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value().size();
        return n;
    }

    GateMode gate_mode() const { return gate_mode_; }
    void set_gate_mode(GateMode m) { gate_mode_ = m; }

    GuidanceFeatures<Real> guidance_forward(const Tensor<Real>& g) const {
        if (variant_ != Variant::gdd) throw ValidationError("guidance_forward requires the gdd variant");
        check_guidance(g);
        const auto u = run_unet(constant(g));
        const std::size_t k = config_.scales;
        GuidanceFeatures<Real> out;
        for (std::size_t s = 1; s <= k; ++s) {
            out.encoder.push_back(u.encoder[k - s]);
            out.decoder.push_back(u.decoder[k - s]);
        }
        return out;
    }

    Node<Real> forward(const Tensor<Real>& g) const {
        check_guidance(g);
        const Real slope = static_cast<Real>(config_.leaky_slope);
        switch (variant_) {
            case Variant::gdd: {
                const auto feats = guidance_forward(g);
                Node<Real> f = constant(code_);
                for (std::size_t s = 0; s < config_.scales; ++s) {
                    f = bilinear_upsample2x(f);
                    f = uru(f, feats.encoder[s], stages_[s].uru_gate, slope, gate_mode_);
                    f = stages_[s].body(f, slope);
                    f = fru(f, feats.decoder[s], stages_[s].fru_gate, slope, gate_mode_);
                }
                return sigmoid(head_(f));
            }
            case Variant::dd: {
                Node<Real> f = constant(code_);
                for (std::size_t s = 0; s < config_.scales; ++s) f = stages_[s].body(bilinear_upsample2x(f), slope);
                return sigmoid(head_(f));
            }
            case Variant::dip_z: return sigmoid(head_(run_unet(constant(code_)).decoder[0]));
            case Variant::dip_g: return sigmoid(head_(run_unet(constant(g)).decoder[0]));
        }
        throw ValidationError("unknown variant");
    }

    std::vector<AttentionMap<Real>> export_attention_maps(const Tensor<Real>& g) const {
        if (variant_ != Variant::gdd) throw ValidationError("attention maps exist only for the gdd variant");
        const Real slope = static_cast<Real>(config_.leaky_slope);
        const auto feats = guidance_forward(g);
        std::vector<AttentionMap<Real>> maps;
        auto emit = [&](std::size_t scale, RefinementUnit unit, const Tensor<Real>& w) {
            const Shape s = w.shape();
            for (std::size_t c = 0; c < s.channels; ++c) {
                Tensor<Real> m(Shape{1, s.height, s.width});
                std::copy(w.channel(c).begin(), w.channel(c).end(), m.data().begin());
                maps.push_back({scale, unit, c, std::move(m)});
            }
        };
        for (std::size_t s = 0; s < config_.scales; ++s) {
            emit(s + 1, RefinementUnit::uru, attention_gate(feats.encoder[s], stages_[s].uru_gate, slope).value());
            emit(s + 1, RefinementUnit::fru, attention_gate(feats.decoder[s], stages_[s].fru_gate, slope).value());
        }
        return maps;
    }

    // Trainable parameters the output does not depend on (expected empty).
    std::vector<std::string> audit_connectivity(const Tensor<Real>& g) const {
        const auto loss = square_sum(forward(g));
        return unreachable_parameters<Real>(loss, params_);
    }

private:
    template <class R>
    friend GddModel<R> build_variant(Variant, const NetworkConfig&, const Shape&, std::size_t);

    struct DecoderStage {
        ConvBlock<Real> body;
        ConvLayer<Real> uru_gate;
        ConvLayer<Real> fru_gate;
    };

    struct UnetOutput {
        std::vector<Node<Real>> encoder;  // e_0 (full res) .. e_K (bottleneck)
        std::vector<Node<Real>> decoder;  // d_0 .. d_K, d_K = e_K
    };

    void check_guidance(const Tensor<Real>& g) const {
        if (g.shape() != guidance_shape_) {
            throw ShapeError("guidance shape " + to_string(g.shape()) + " does not match model guidance shape " +
                             to_string(guidance_shape_));
        }
    }

    UnetOutput run_unet(const Node<Real>& input) const {
        const Real slope = static_cast<Real>(config_.leaky_slope);
        const std::size_t k = config_.scales;
        UnetOutput out;
        Node<Real> x = input;
        for (std::size_t l = 0; l <= k; ++l) {
            x = encoder_[l][1](encoder_[l][0](x, slope), slope);
            out.encoder.push_back(x);
        }
        out.decoder.resize(k + 1);
        out.decoder[k] = out.encoder[k];
        for (std::size_t l = k; l-- > 0;) {
            const Node<Real> up = bilinear_upsample2x(out.decoder[l + 1]);
            out.decoder[l] = decoder_[l](concat_channels<Real>({up, out.encoder[l]}), slope);
        }
        return out;
    }

    Variant variant_ = Variant::gdd;
    NetworkConfig config_;
    Shape guidance_shape_;
    std::size_t out_channels_ = 0;
    GateMode gate_mode_ = GateMode::learned;
    Tensor<Real> code_;
    std::vector<Parameter<Real>> params_;
    std::vector<std::array<ConvBlock<Real>, 2>> encoder_;
    std::vector<ConvBlock<Real>> decoder_;
    std::vector<DecoderStage> stages_;
    ConvLayer<Real> head_;
};

namespace detail {

template <class Real>
class LayerFactory {
public:
    LayerFactory(Rng& rng, std::vector<Parameter<Real>>& registry) : rng_(rng), registry_(registry) {}

    // He-uniform weights (bound sqrt(6 / fan_in)), zero bias.
    ConvLayer<Real> conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
                         std::size_t stride = 1) {
        Tensor<Real> w(Shape{out, in, kernel * kernel});
        const double bound = std::sqrt(6.0 / static_cast<double>(in * kernel * kernel));
        for (auto& v : w.data()) v = static_cast<Real>(rng_.uniform(-bound, bound));
        ConvLayer<Real> layer{Parameter<Real>(name + ".weight", std::move(w)),
                              Parameter<Real>(name + ".bias", Tensor<Real>(Shape{out, 1, 1})), stride};
        registry_.push_back(layer.weight);
        registry_.push_back(layer.bias);
        return layer;
    }

    NormLayer<Real> norm(const std::string& name, std::size_t channels) {
        NormLayer<Real> layer{Parameter<Real>(name + ".gain", Tensor<Real>(Shape{channels, 1, 1}, Real(1))),
                              Parameter<Real>(name + ".shift", Tensor<Real>(Shape{channels, 1, 1}))};
        registry_.push_back(layer.gain);
        registry_.push_back(layer.shift);
        return layer;
    }

    ConvBlock<Real> block(const std::string& name, std::size_t in, std::size_t out, std::size_t stride = 1) {
        auto c = conv(name + ".conv", in, out, 3, stride);
        return {std::move(c), norm(name + ".norm", out)};
    }

private:
    Rng& rng_;
    std::vector<Parameter<Real>>& registry_;
};

}  // namespace detail

template <class Real>
GddModel<Real> build_variant(Variant kind, const NetworkConfig& config, const Shape& guidance_shape,
                             std::size_t out_channels) {
    if (config.scales < 2) throw ValidationError("network needs at least 2 scales, got " + std::to_string(config.scales));
    if (config.base_channels == 0 || config.guidance_channels == 0 || out_channels == 0 || guidance_shape.channels == 0) {
        throw ValidationError("network channel counts must be positive");
    }
    if (!(config.leaky_slope > 0.0 && config.leaky_slope < 1.0)) throw ValidationError("leaky slope must lie in (0,1)");
    const std::size_t div = std::size_t{1} << config.scales;
    if (guidance_shape.height % div != 0 || guidance_shape.width % div != 0) {
        throw ShapeError("spatial size " + std::to_string(guidance_shape.height) + "x" + std::to_string(guidance_shape.width) +
                         " must be divisible by 2^K = " + std::to_string(div));
    }

    GddModel<Real> m;
    m.variant_ = kind;
    m.config_ = config;
    m.guidance_shape_ = guidance_shape;
    m.out_channels_ = out_channels;
    Rng rng(config.seed);
    detail::LayerFactory<Real> make(rng, m.params_);
    const std::size_t k = config.scales;
    const std::size_t gc = config.guidance_channels;
    const std::size_t bc = config.base_channels;

    const bool has_unet = kind != Variant::dd;
    if (has_unet) {
        const std::size_t in = kind == Variant::dip_z ? bc : guidance_shape.channels;
        for (std::size_t l = 0; l <= k; ++l) {
            const std::string name = "unet.enc" + std::to_string(l);
            m.encoder_.push_back({make.block(name + ".a", l == 0 ? in : gc, gc, l == 0 ? 1 : 2), make.block(name + ".b", gc, gc)});
        }
        for (std::size_t l = 0; l < k; ++l) m.decoder_.push_back(make.block("unet.dec" + std::to_string(l), 2 * gc, gc));
    }
    if (kind == Variant::gdd || kind == Variant::dd) {
        for (std::size_t s = 0; s < k; ++s) {
            const std::string name = "decoder.stage" + std::to_string(s + 1);
            typename GddModel<Real>::DecoderStage st{make.block(name, bc, bc), {}, {}};
            if (kind == Variant::gdd) {
                st.uru_gate = make.conv(name + ".uru_gate", gc, bc, 1);
                st.fru_gate = make.conv(name + ".fru_gate", gc, bc, 1);
            }
            m.stages_.push_back(std::move(st));
        }
    }
    m.head_ = make.conv("head", kind == Variant::dip_z || kind == Variant::dip_g ? gc : bc, out_channels, 1);

    const Shape code_shape = kind == Variant::dip_z
                                 ? Shape{bc, guidance_shape.height, guidance_shape.width}
                                 : Shape{bc, guidance_shape.height / div, guidance_shape.width / div};
    if (kind != Variant::dip_g) m.code_ = init_code_tensor<Real>(rng, code_shape);
    return m;
}

template <class Real>
GddModel<Real> build_gdd(const NetworkConfig& config, const Shape& guidance_shape, std::size_t out_channels) {
    return build_variant<Real>(Variant::gdd, config, guidance_shape, out_channels);
}

}  // namespace gdd
