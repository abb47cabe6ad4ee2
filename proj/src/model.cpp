#include "dsffnet/model.hpp"

#include <cmath>

#include "dsffnet/errors.hpp"
#include "dsffnet/rng.hpp"

namespace dsffnet {

void ModelWidths::validate() const {
    if (enc.size() != 4)
        throw ConfigError("widths: encoder needs 4 entries (3 conv units), got " +
                          std::to_string(enc.size()));
    if (enc[0] != 3) throw ConfigError("widths: encoder input channels must be 3");
    for (std::size_t i = 1; i + 1 < enc.size(); ++i)
        if (enc[i] >= enc[i + 1])
            throw ConfigError("widths: encoder channels must strictly increase (unit " +
                              std::to_string(i) + ")");
    if (dec.size() != 5)
        throw ConfigError("widths: decoder needs 5 entries (3 blocks + output), got " +
                          std::to_string(dec.size()));
    if (dec.front() != 3 || dec.back() != 3)
        throw ConfigError("widths: decoder must start and end at 3 channels");
    for (std::size_t i = 0; i + 1 < dec.size(); ++i)
        if (dec[i] == 0) throw ConfigError("widths: zero-width decoder stage");
}

const char* variant_name(DecoderVariant v) {
    switch (v) {
    case DecoderVariant::kFull: return "full";
    case DecoderVariant::kSpadainFirst: return "spadain";
    case DecoderVariant::kMixOnly: return "no-target-side";
    }
    return "full";
}

DecoderVariant variant_from_name(const std::string& name) {
    if (name == "full") return DecoderVariant::kFull;
    if (name == "spadain") return DecoderVariant::kSpadainFirst;
    if (name == "no-target-side") return DecoderVariant::kMixOnly;
    throw ConfigError("unknown decoder variant '" + name + "'");
}

namespace {

ConvParams init_conv(std::size_t c_out, std::size_t c_in, SplitMix64& rng) {
    const double s = std::sqrt(1.0 / static_cast<double>(c_in));
    std::vector<double> w(c_out * c_in);
    for (auto& v : w) v = (2.0 * rng.uniform() - 1.0) * s;
    ConvParams p;
    p.w = make_param({c_out, c_in}, std::move(w));
    p.b = make_param({c_out}, std::vector<double>(c_out, 0.0));
    return p;
}

FfadainParams init_ffadain(std::size_t channels, std::size_t mix_in, SplitMix64& rng) {
    FfadainParams p;
    p.id_gamma = init_conv(channels, 3, rng);
    p.id_delta = init_conv(channels, 3, rng);
    p.mix_gamma = init_conv(channels, mix_in, rng);
    p.mix_delta = init_conv(channels, mix_in, rng);
    p.alpha = make_param({1}, {0.5});
    p.beta = make_param({1}, {0.5});
    return p;
}

void name_conv(std::vector<std::pair<std::string, TensorPtr>>& out, const std::string& prefix,
               const ConvParams& c) {
    out.emplace_back(prefix + ".W", c.w);
    out.emplace_back(prefix + ".b", c.b);
}

void name_ffadain(std::vector<std::pair<std::string, TensorPtr>>& out, const std::string& prefix,
                  const FfadainParams& f) {
    name_conv(out, prefix + ".id_gamma", f.id_gamma);
    name_conv(out, prefix + ".id_delta", f.id_delta);
    name_conv(out, prefix + ".mix_gamma", f.mix_gamma);
    name_conv(out, prefix + ".mix_delta", f.mix_delta);
    out.emplace_back(prefix + ".alpha", f.alpha);
    out.emplace_back(prefix + ".beta", f.beta);
}

} // namespace

ModelParams init_params(const ModelWidths& widths, std::uint64_t seed) {
    widths.validate();
    SplitMix64 rng(seed);
    ModelParams m;
    m.widths = widths;
    for (std::size_t i = 0; i + 1 < widths.enc.size(); ++i)
        m.enc.push_back(init_conv(widths.enc[i + 1], widths.enc[i], rng));
    const std::size_t mix_in = widths.mix_channels();
    for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t c_in = widths.dec[k];
        const std::size_t c_out = widths.dec[k + 1];
        ResBlockParams& rb = m.blocks[k];
        rb.ffa0 = init_ffadain(c_in, mix_in, rng);
        rb.conv0 = init_conv(c_out, c_in, rng);
        rb.ffa1 = init_ffadain(c_out, mix_in, rng);
        rb.conv1 = init_conv(c_out, c_out, rng);
        rb.has_skip_conv = c_in != c_out;
        if (rb.has_skip_conv) rb.skip = init_conv(c_out, c_in, rng);
    }
    m.out_conv = init_conv(3, widths.dec[3], rng);
    return m;
}

std::vector<std::pair<std::string, TensorPtr>> ModelParams::named() const {
    std::vector<std::pair<std::string, TensorPtr>> out;
    for (std::size_t i = 0; i < enc.size(); ++i)
        name_conv(out, "enc." + std::to_string(i), enc[i]);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const std::string p = "dec." + std::to_string(k);
        name_ffadain(out, p + ".ffa.0", blocks[k].ffa0);
        name_conv(out, p + ".conv.0", blocks[k].conv0);
        name_ffadain(out, p + ".ffa.1", blocks[k].ffa1);
        name_conv(out, p + ".conv.1", blocks[k].conv1);
        if (blocks[k].has_skip_conv) name_conv(out, p + ".skip", blocks[k].skip);
    }
    name_conv(out, "out", out_conv);
    return out;
}

void ModelParams::zero_grads() const {
    for (auto& [name, t] : named()) t->zero_grad();
}

TensorPtr encode_pose(Tape& tape, const ModelParams& params, const TensorPtr& src) {
    if (src->rank() != 2 || src->shape[0] != 3)
        throw DimensionError("encode_pose: source must be 3×N, got axis 0 = " +
                             std::to_string(src->rank() == 2 ? src->shape[0] : src->rank()));
    if (src->shape[1] < 1) throw ContractError("encode_pose: source has no vertices");
    TensorPtr h = src;
    for (const auto& unit : params.enc) {
        h = tape.linear_1x1(h, unit.w, unit.b);
        h = tape.instance_norm(h, kNormEps).normalized;
        h = tape.relu(h);
    }
    return tape.max_over_vertices(h);
}

TensorPtr build_mixed_feature(Tape& tape, const TensorPtr& code, const TensorPtr& tgt) {
    if (tgt->rank() != 2 || tgt->shape[0] != 3)
        throw DimensionError("build_mixed_feature: target must be 3×N");
    if (tgt->shape[1] < 1) throw ContractError("build_mixed_feature: target has no vertices");
    auto repeated = tape.repeat_columns(code, tgt->shape[1]);
    return tape.concat_channels(tgt, repeated);
}

namespace {

// γ or δ fusion: w·side_id + (1−w)·side_mix with a learnable scalar w
TensorPtr fuse(Tape& tape, const TensorPtr& weight, const TensorPtr& id_side,
               const TensorPtr& mix_side) {
    auto one_minus = tape.add_scalar(tape.scale(weight, -1.0), 1.0);
    return tape.add(tape.mul_scalar(id_side, weight), tape.mul_scalar(mix_side, one_minus));
}

} // namespace

TensorPtr ffadain_forward(Tape& tape, const FfadainParams& p, const TensorPtr& h,
                          const TensorPtr& f_mix, const TensorPtr& v_id,
                          FfadainActivation* act) {
    const std::size_t n = h->cols();
    if (f_mix->cols() != n || v_id->cols() != n)
        throw DimensionError("ffadain: vertex-count mismatch on axis 1 (h " + std::to_string(n) +
                             ", f_mix " + std::to_string(f_mix->cols()) + ", v_id " +
                             std::to_string(v_id->cols()) + ")");
    auto gamma_id = tape.linear_1x1(v_id, p.id_gamma.w, p.id_gamma.b);
    auto delta_id = tape.linear_1x1(v_id, p.id_delta.w, p.id_delta.b);
    auto gamma_mix = tape.linear_1x1(f_mix, p.mix_gamma.w, p.mix_gamma.b);
    auto delta_mix = tape.linear_1x1(f_mix, p.mix_delta.w, p.mix_delta.b);
    auto gamma_ff = fuse(tape, p.alpha, gamma_id, gamma_mix);
    auto delta_ff = fuse(tape, p.beta, delta_id, delta_mix);
    auto normed = tape.instance_norm(h, kNormEps);
    auto out = tape.add(tape.mul(gamma_ff, normed.normalized), delta_ff);
    if (act) {
        act->gamma_id = gamma_id;
        act->delta_id = delta_id;
        act->gamma_mix = gamma_mix;
        act->delta_mix = delta_mix;
        act->gamma_ff = gamma_ff;
        act->delta_ff = delta_ff;
        act->mu = normed.mu;
        act->sigma = normed.sigma;
    }
    return out;
}

TensorPtr spadain_forward(Tape& tape, const FfadainParams& p, const TensorPtr& h,
                          const TensorPtr& v_id) {
    if (v_id->cols() != h->cols())
        throw DimensionError("spadain: vertex-count mismatch on axis 1");
    auto gamma = tape.linear_1x1(v_id, p.id_gamma.w, p.id_gamma.b);
    auto delta = tape.linear_1x1(v_id, p.id_delta.w, p.id_delta.b);
    auto normed = tape.instance_norm(h, kNormEps);
    return tape.add(tape.mul(gamma, normed.normalized), delta);
}

TensorPtr mixonly_forward(Tape& tape, const FfadainParams& p, const TensorPtr& h,
                          const TensorPtr& f_mix) {
    if (f_mix->cols() != h->cols())
        throw DimensionError("mixonly: vertex-count mismatch on axis 1");
    auto gamma = tape.linear_1x1(f_mix, p.mix_gamma.w, p.mix_gamma.b);
    auto delta = tape.linear_1x1(f_mix, p.mix_delta.w, p.mix_delta.b);
    auto normed = tape.instance_norm(h, kNormEps);
    return tape.add(tape.mul(gamma, normed.normalized), delta);
}

namespace {

TensorPtr unit_forward(Tape& tape, const FfadainParams& p, const TensorPtr& h,
                       const TensorPtr& f_mix, const TensorPtr& v_id, DecoderVariant variant,
                       bool first_in_block) {
    switch (variant) {
    case DecoderVariant::kFull: return ffadain_forward(tape, p, h, f_mix, v_id);
    case DecoderVariant::kSpadainFirst:
        return first_in_block ? spadain_forward(tape, p, h, v_id)
                              : ffadain_forward(tape, p, h, f_mix, v_id);
    case DecoderVariant::kMixOnly: return mixonly_forward(tape, p, h, f_mix);
    }
    throw ContractError("unit_forward: unreachable variant");
}

} // namespace

TensorPtr resblock_forward(Tape& tape, const ResBlockParams& p, const TensorPtr& h,
                           const TensorPtr& f_mix, const TensorPtr& v_id,
                           DecoderVariant variant) {
    auto a0 = unit_forward(tape, p.ffa0, h, f_mix, v_id, variant, true);
    auto m0 = tape.linear_1x1(tape.relu(a0), p.conv0.w, p.conv0.b);
    auto a1 = unit_forward(tape, p.ffa1, m0, f_mix, v_id, variant, false);
    auto m1 = tape.linear_1x1(tape.relu(a1), p.conv1.w, p.conv1.b);
    auto skip = p.has_skip_conv ? tape.linear_1x1(h, p.skip.w, p.skip.b) : h;
    return tape.add(m1, skip);
}

TensorPtr decode(Tape& tape, const ModelParams& params, const TensorPtr& v_id,
                 const TensorPtr& f_mix, DecoderVariant variant) {
    TensorPtr h = v_id;
    for (const auto& block : params.blocks)
        h = resblock_forward(tape, block, h, f_mix, v_id, variant);
    return tape.linear_1x1(h, params.out_conv.w, params.out_conv.b);
}

TensorPtr transfer_forward(Tape& tape, const ModelParams& params, const TensorPtr& src,
                           const TensorPtr& tgt, DecoderVariant variant) {
    auto code = encode_pose(tape, params, src);
    auto f_mix = build_mixed_feature(tape, code, tgt);
    return decode(tape, params, tgt, f_mix, variant);
}

Mesh transfer(const ModelParams& params, const Mesh& source, const Mesh& target,
              DecoderVariant variant) {
    Tape tape;
    auto src = make_tensor({3, source.vertex_count()}, mesh_to_columns(source));
    auto tgt = make_tensor({3, target.vertex_count()}, mesh_to_columns(target));
    auto pred = transfer_forward(tape, params, src, tgt, variant);
    return columns_to_mesh(pred->data, target.vertex_count(), target.faces);
}

} // namespace dsffnet
