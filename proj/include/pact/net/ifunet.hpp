#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pact/ad/ops.hpp"
#include "pact/field.hpp"
#include "pact/geometry.hpp"

namespace pact::net {

struct IFUnetConfig {
    int depth = 3;
    int base_channels = 16;
    double f_pool = 0.25;
    double f_conv = 0.25;
    double f_attn = 0.5;
    int heads = 2;
    int ffn_ratio = 4;
    // Downsampling factor in front of the attention branch (2 or 4). The
    // desk training preset uses 4 to keep the token count CPU-friendly.
    int attn_pool = 2;
    bool use_mixer_blocks = true;
    bool max_pool_in_mixer = false; // branch pooling defaults to averaging

    // Throws when fractions do not sum to 1, a channel group would be empty,
    // or the head count does not divide the attention group at some level.
    void validate(int image_size) const;
    int channels_at(int level) const { return base_channels << level; }
};

// (pool, conv, attention) channel group sizes: floor for the first two, the
// remainder goes to attention.
std::array<std::int64_t, 3> mixer_split(std::int64_t channels, const IFUnetConfig& cfg);

// Named trainable leaves in deterministic construction order.
class IFUnetParams {
public:
    ad::Value add(const std::string& name, ad::Tensor t);
    // Registers an existing graph leaf (used by gradcheck harnesses).
    void add_existing(const std::string& name, ad::Value v);
    const ad::Value& get(const std::string& name) const;
    const std::vector<std::pair<std::string, ad::Value>>& named() const { return named_; }
    std::vector<ad::Value> values() const;
    std::int64_t parameter_count() const;

private:
    std::vector<std::pair<std::string, ad::Value>> named_;
};

// Fan-in scaled uniform init for weights, zeros for biases and norm offsets,
// ones for norm gains. Deterministic per seed.
IFUnetParams init_params(const IFUnetConfig& cfg, std::uint64_t seed);

// The three-branch channel mixer. Spatial shape is preserved; the pooled
// branches come back through nearest upsampling.
ad::Value inception_mixer(const ad::Value& x, const IFUnetParams& params,
                          const std::string& prefix, const IFUnetConfig& cfg);

// Pre-norm transformer arrangement: x + Mixer(LN(x)), then + FFN(LN(.)).
ad::Value inceptionformer_block(const ad::Value& x, const IFUnetParams& params,
                                const std::string& prefix, const IFUnetConfig& cfg);

// Unet with every skip routed through one Inceptionformer block.
ad::Value ifunet_forward(const ad::Value& x, const IFUnetParams& params,
                         const IFUnetConfig& cfg);

// ImageField batch convenience wrapper (values moved through the graph once).
std::vector<ImageField> ifunet_apply(const std::vector<ImageField>& batch,
                                     const IFUnetParams& params, const IFUnetConfig& cfg);

struct CheckpointMeta {
    IFUnetConfig config;
    RingGeometry geometry;
    ImageGrid grid;
    double input_gain = 1.0;
    std::string mode = "cdss";
    std::uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const IFUnetParams& params,
                     const CheckpointMeta& meta);
std::pair<IFUnetParams, CheckpointMeta> load_checkpoint(const std::string& path);

} // namespace pact::net
