#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dsffnet/mesh.hpp"
#include "dsffnet/tensor.hpp"

namespace dsffnet {

// Channel schedules. enc: 3 conv units climbing to the pose-code length
// (default 1024). dec: forward-path widths v_id → three residual blocks →
// final conv back to 3 coordinates.
struct ModelWidths {
    std::vector<std::size_t> enc = {3, 64, 128, 1024};
    std::vector<std::size_t> dec = {3, 64, 128, 64, 3};

    std::size_t code_length() const { return enc.back(); }
    std::size_t mix_channels() const { return enc.back() + 3; }
    void validate() const; // throws ConfigError
};

struct ConvParams {
    TensorPtr w; // C_out×C_in
    TensorPtr b; // C_out
};

// One feature-fusion denormalization unit: two side channels (target
// vertices and mixed feature), each with a γ and a δ conv, fused by the
// learned scalars alpha (γ side) and beta (δ side).
struct FfadainParams {
    ConvParams id_gamma, id_delta;   // 3 → C
    ConvParams mix_gamma, mix_delta; // (code+3) → C
    TensorPtr alpha, beta;           // shape {1}
};

struct ResBlockParams {
    FfadainParams ffa0, ffa1;
    ConvParams conv0; // C_in → C_out
    ConvParams conv1; // C_out → C_out
    ConvParams skip;  // C_in → C_out, used only when C_in != C_out
    bool has_skip_conv = false;
};

// Decoder forward-path flavors used by the ablation studies.
enum class DecoderVariant {
    kFull,         // both side channels everywhere
    kSpadainFirst, // first unit per block keeps only the target-vertex side
    kMixOnly,      // target-vertex side channel removed everywhere
};

const char* variant_name(DecoderVariant v);
DecoderVariant variant_from_name(const std::string& name);

struct ModelParams {
    ModelWidths widths;
    std::vector<ConvParams> enc; // 3 units
    std::array<ResBlockParams, 3> blocks;
    ConvParams out_conv; // dec[3] → 3

    // stable dotted-name view over every learnable, in a fixed order
    std::vector<std::pair<std::string, TensorPtr>> named() const;
    void zero_grads() const;
};

ModelParams init_params(const ModelWidths& widths, std::uint64_t seed);

// per-forward-pass intermediates exposed for inspection/testing
struct FfadainActivation {
    TensorPtr gamma_id, delta_id;
    TensorPtr gamma_mix, delta_mix;
    TensorPtr gamma_ff, delta_ff;
    TensorPtr mu, sigma;
};

inline constexpr double kNormEps = 1e-5;

// src: 3×N_src → pose code (rank-1, code_length)
TensorPtr encode_pose(Tape& tape, const ModelParams& params, const TensorPtr& src);

// (3+code)×N_tgt: vertex rows first, repeated code after
TensorPtr build_mixed_feature(Tape& tape, const TensorPtr& code, const TensorPtr& tgt);

TensorPtr ffadain_forward(Tape& tape, const FfadainParams& p, const TensorPtr& h,
                          const TensorPtr& f_mix, const TensorPtr& v_id,
                          FfadainActivation* act = nullptr);

// id-side-only baseline: out = γ_id·(h−μ)/σ + δ_id
TensorPtr spadain_forward(Tape& tape, const FfadainParams& p, const TensorPtr& h,
                          const TensorPtr& v_id);

// mix-side-only (target-vertex side channel removed)
TensorPtr mixonly_forward(Tape& tape, const FfadainParams& p, const TensorPtr& h,
                          const TensorPtr& f_mix);

TensorPtr resblock_forward(Tape& tape, const ResBlockParams& p, const TensorPtr& h,
                           const TensorPtr& f_mix, const TensorPtr& v_id,
                           DecoderVariant variant = DecoderVariant::kFull);

TensorPtr decode(Tape& tape, const ModelParams& params, const TensorPtr& v_id,
                 const TensorPtr& f_mix, DecoderVariant variant = DecoderVariant::kFull);

// full pipeline on tape (differentiable): source/target as 3×N tensors
TensorPtr transfer_forward(Tape& tape, const ModelParams& params, const TensorPtr& src,
                           const TensorPtr& tgt, DecoderVariant variant = DecoderVariant::kFull);

// mesh-level convenience: returns predicted vertices with the target's faces
Mesh transfer(const ModelParams& params, const Mesh& source, const Mesh& target,
              DecoderVariant variant = DecoderVariant::kFull);

} // namespace dsffnet
