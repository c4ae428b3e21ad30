#include "pact/net/ifunet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "pact/io_util.hpp"
#include "pact/rng.hpp"

namespace pact::net {

using ad::Shape;
using ad::Tensor;
using ad::Value;

void IFUnetConfig::validate(int image_size) const {
    if (depth < 2) throw InvalidConfig("ifunet depth must be >= 2");
    if (base_channels < 4) throw InvalidConfig("base_channels must be >= 4");
    if (heads < 1) throw InvalidConfig("heads must be >= 1");
    if (ffn_ratio < 1) throw InvalidConfig("ffn_ratio must be >= 1");
    if (attn_pool != 2 && attn_pool != 4)
        throw InvalidConfig("attn_pool must be 2 or 4");
    if (std::abs(f_pool + f_conv + f_attn - 1.0) > 1e-12)
        throw InvalidConfig("mixer fractions must sum to 1");
    if (f_pool < 0.0 || f_conv < 0.0 || f_attn < 0.0)
        throw InvalidConfig("mixer fractions must be non-negative");
    if (image_size > 0) {
        if (image_size % (1 << depth) != 0)
            throw BadShape("image side must be divisible by 2^depth");
        if ((image_size >> depth) < 2) throw BadShape("image too small for this depth");
    }
    if (use_mixer_blocks) {
        for (int l = 0; l < depth; ++l) {
            const auto split = mixer_split(channels_at(l), *this);
            if (split[0] < 1 || split[1] < 1 || split[2] < 1)
                throw InvalidConfig("mixer split leaves an empty branch at level " +
                                    std::to_string(l));
            if (split[2] % heads != 0)
                throw IndivisibleHeads("attention channels " + std::to_string(split[2]) +
                                       " not divisible by " + std::to_string(heads) +
                                       " heads at level " + std::to_string(l));
        }
    }
}

std::array<std::int64_t, 3> mixer_split(std::int64_t channels, const IFUnetConfig& cfg) {
    const auto cp = static_cast<std::int64_t>(std::floor(cfg.f_pool * channels));
    const auto cc = static_cast<std::int64_t>(std::floor(cfg.f_conv * channels));
    return {cp, cc, channels - cp - cc};
}

Value IFUnetParams::add(const std::string& name, Tensor t) {
    Value v = Value::leaf(std::move(t), true);
    add_existing(name, v);
    return v;
}

void IFUnetParams::add_existing(const std::string& name, Value v) {
    for (const auto& [n, u] : named_)
        if (n == name) throw InvalidConfig("duplicate parameter name: " + name);
    named_.emplace_back(name, std::move(v));
}

const Value& IFUnetParams::get(const std::string& name) const {
    for (const auto& [n, v] : named_)
        if (n == name) return v;
    throw InvalidConfig("unknown parameter: " + name);
}

std::vector<Value> IFUnetParams::values() const {
    std::vector<Value> out;
    out.reserve(named_.size());
    for (const auto& [n, v] : named_) out.push_back(v);
    return out;
}

std::int64_t IFUnetParams::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, v] : named_) n += v.tensor().numel();
    return n;
}

namespace {

// Walks the architecture in a fixed order, calling back with each parameter's
// name and shape. init and checkpoint loading share this single source of
// parameter layout truth.
template <typename F>
void for_each_parameter(const IFUnetConfig& cfg, F&& f) {
    auto conv = [&](const std::string& name, std::int64_t co, std::int64_t ci, std::int64_t k) {
        f(name + ".w", Shape{co, ci, k, k});
        f(name + ".b", Shape{co});
    };
    auto norm = [&](const std::string& name, std::int64_t c) {
        f(name + ".g", Shape{c});
        f(name + ".o", Shape{c});
    };

    for (int l = 0; l < cfg.depth; ++l) {
        const std::int64_t c = cfg.channels_at(l);
        const std::int64_t cin = l == 0 ? 1 : cfg.channels_at(l - 1);
        conv("enc" + std::to_string(l) + ".conv1", c, cin, 3);
        conv("enc" + std::to_string(l) + ".conv2", c, c, 3);
    }
    const std::int64_t cb = cfg.channels_at(cfg.depth);
    conv("bneck.conv1", cb, cfg.channels_at(cfg.depth - 1), 3);
    conv("bneck.conv2", cb, cb, 3);

    if (cfg.use_mixer_blocks) {
        for (int l = 0; l < cfg.depth; ++l) {
            const std::int64_t c = cfg.channels_at(l);
            const auto split = mixer_split(c, cfg);
            const std::string p = "ifb" + std::to_string(l);
            norm(p + ".ln1", c);
            conv(p + ".mix.pool.conv", split[0], split[0], 3);
            conv(p + ".mix.conv.conv1", split[1], split[1], 1);
            conv(p + ".mix.conv.conv2", split[1], split[1], 3);
            conv(p + ".mix.attn.qkv", 3 * split[2], split[2], 1);
            conv(p + ".mix.attn.proj", split[2], split[2], 1);
            conv(p + ".mix.fuse.conv3", c, c, 3);
            conv(p + ".mix.fuse.conv1", c, c, 1);
            norm(p + ".ln2", c);
            conv(p + ".ffn.conv1", cfg.ffn_ratio * c, c, 1);
            conv(p + ".ffn.conv2", c, cfg.ffn_ratio * c, 1);
        }
    }

    for (int l = cfg.depth - 1; l >= 0; --l) {
        const std::int64_t c = cfg.channels_at(l);
        const std::int64_t c_coarse = cfg.channels_at(l + 1);
        conv("dec" + std::to_string(l) + ".up", c, c_coarse, 3);
        conv("dec" + std::to_string(l) + ".conv1", c, 2 * c, 3);
        conv("dec" + std::to_string(l) + ".conv2", c, c, 3);
    }
    conv("out.conv", 1, cfg.base_channels, 1);
}

} // namespace

IFUnetParams init_params(const IFUnetConfig& cfg, std::uint64_t seed) {
    cfg.validate(0);
    CounterRng rng(CounterRng::mix(seed ^ 0x49465500ull)); // "IFU"
    IFUnetParams params;
    for_each_parameter(cfg, [&](const std::string& name, Shape shape) {
        Tensor t(shape);
        const bool is_weight = name.ends_with(".w");
        const bool is_gain = name.ends_with(".g");
        if (is_weight) {
            std::int64_t fan_in = 1;
            for (int i = 1; i < shape.ndim; ++i) fan_in *= shape.d[i];
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            for (auto& x : t.v) x = static_cast<ad::real>(rng.uniform(-bound, bound));
        } else if (is_gain) {
            for (auto& x : t.v) x = ad::real(1);
        } // biases and norm offsets stay zero
        params.add(name, std::move(t));
    });
    return params;
}

namespace {

Value conv_gelu(const Value& x, const IFUnetParams& p, const std::string& name) {
    return ad::gelu(ad::conv2d(x, p.get(name + ".w"), p.get(name + ".b")));
}

Value conv_plain(const Value& x, const IFUnetParams& p, const std::string& name) {
    return ad::conv2d(x, p.get(name + ".w"), p.get(name + ".b"));
}

Value layer_norm(const Value& x, const IFUnetParams& p, const std::string& name) {
    return ad::layernorm_channels(x, p.get(name + ".g"), p.get(name + ".o"));
}

// Multi-head self-attention over the 2x-pooled map flattened to tokens.
Value msa(const Value& x, const IFUnetParams& p, const std::string& prefix,
          const IFUnetConfig& cfg) {
    const Shape& s = x.shape();
    const std::int64_t B = s.d[0], C = s.d[1], H = s.d[2], W = s.d[3];
    const std::int64_t heads = cfg.heads;
    const std::int64_t dh = C / heads;
    const std::int64_t N = H * W;

    Value qkv = conv_plain(x, p, prefix + ".qkv");
    auto parts = ad::split_channels(qkv, {C, C, C});
    // (B, C, H, W) -> (B*heads, dh, N); head-major channel layout makes this a
    // pure reshape.
    auto to_heads = [&](const Value& t) { return ad::reshape(t, Shape{B * heads, dh, N}); };
    Value q = ad::transpose_last2(to_heads(parts[0])); // (BH, N, dh)
    Value k = to_heads(parts[1]);                      // (BH, dh, N) == K^T layout
    Value v = ad::transpose_last2(to_heads(parts[2])); // (BH, N, dh)

    Value scores = ad::scale(ad::matmul(q, k), 1.0 / std::sqrt(static_cast<double>(dh)));
    Value att = ad::softmax_last(scores);
    Value out = ad::matmul(att, v);                      // (BH, N, dh)
    out = ad::transpose_last2(out);                      // (BH, dh, N)
    out = ad::reshape(out, Shape{B, C, H, W});
    return conv_plain(out, p, prefix + ".proj");
}

} // namespace

Value inception_mixer(const Value& x, const IFUnetParams& params, const std::string& prefix,
                      const IFUnetConfig& cfg) {
    const Shape& s = x.shape();
    if (s.ndim != 4) throw ShapeMismatch("inception_mixer: expected (B,C,H,W)");
    if (s.d[2] % cfg.attn_pool || s.d[3] % cfg.attn_pool)
        throw ShapeMismatch("inception_mixer: spatial dims must divide the pooling factor");
    const auto split = mixer_split(s.d[1], cfg);
    if (split[0] < 1 || split[1] < 1 || split[2] < 1)
        throw ShapeMismatch("inception_mixer: a channel group is empty");
    if (split[2] % cfg.heads != 0)
        throw IndivisibleHeads("attention channels not divisible by head count");

    auto pool = [&](const Value& t) {
        return cfg.max_pool_in_mixer ? ad::maxpool2(t) : ad::avgpool2(t);
    };

    auto groups = ad::split_channels(x, {split[0], split[1], split[2]});
    // Pooled conv branch; pooling shrinks the map, so it returns upsampled.
    Value z1 = ad::upsample2_nearest(
        ad::gelu(conv_plain(pool(groups[0]), params, prefix + ".pool.conv")));
    Value z2 = ad::gelu(conv_plain(conv_plain(groups[1], params, prefix + ".conv.conv1"),
                                   params, prefix + ".conv.conv2"));
    Value a = pool(groups[2]);
    if (cfg.attn_pool == 4) a = pool(a);
    Value z3 = msa(a, params, prefix + ".attn", cfg);
    z3 = ad::upsample2_nearest(z3);
    if (cfg.attn_pool == 4) z3 = ad::upsample2_nearest(z3);

    Value zc = ad::concat_channels({z1, z2, z3});
    Value fused = ad::add(zc, conv_plain(zc, params, prefix + ".fuse.conv3"));
    return conv_plain(fused, params, prefix + ".fuse.conv1");
}

Value inceptionformer_block(const Value& x, const IFUnetParams& params,
                            const std::string& prefix, const IFUnetConfig& cfg) {
    Value u = ad::add(x, inception_mixer(layer_norm(x, params, prefix + ".ln1"), params,
                                         prefix + ".mix", cfg));
    Value f = layer_norm(u, params, prefix + ".ln2");
    f = conv_gelu(f, params, prefix + ".ffn.conv1");
    f = conv_plain(f, params, prefix + ".ffn.conv2");
    return ad::add(u, f);
}

Value ifunet_forward(const Value& x, const IFUnetParams& params, const IFUnetConfig& cfg) {
    const Shape& s = x.shape();
    if (s.ndim != 4 || s.d[1] != 1) throw BadShape("ifunet: input must be (B,1,H,W)");
    if (s.d[2] != s.d[3]) throw BadShape("ifunet: input must be square");
    cfg.validate(static_cast<int>(s.d[2]));

    std::vector<Value> skips;
    Value cur = x;
    for (int l = 0; l < cfg.depth; ++l) {
        cur = conv_gelu(cur, params, "enc" + std::to_string(l) + ".conv1");
        cur = conv_gelu(cur, params, "enc" + std::to_string(l) + ".conv2");
        skips.push_back(cur);
        cur = ad::maxpool2(cur);
    }
    cur = conv_gelu(cur, params, "bneck.conv1");
    cur = conv_gelu(cur, params, "bneck.conv2");

    for (int l = cfg.depth - 1; l >= 0; --l) {
        cur = ad::upsample2_nearest(cur);
        cur = conv_gelu(cur, params, "dec" + std::to_string(l) + ".up");
        Value skip = cfg.use_mixer_blocks
                         ? inceptionformer_block(skips[static_cast<std::size_t>(l)], params,
                                                 "ifb" + std::to_string(l), cfg)
                         : skips[static_cast<std::size_t>(l)];
        cur = ad::concat_channels({skip, cur});
        cur = conv_gelu(cur, params, "dec" + std::to_string(l) + ".conv1");
        cur = conv_gelu(cur, params, "dec" + std::to_string(l) + ".conv2");
    }
    return conv_plain(cur, params, "out.conv");
}

std::vector<ImageField> ifunet_apply(const std::vector<ImageField>& batch,
                                     const IFUnetParams& params, const IFUnetConfig& cfg) {
    if (batch.empty()) return {};
    const int n = batch[0].nx;
    Tensor in(Shape{static_cast<std::int64_t>(batch.size()), 1, n, n});
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (batch[b].nx != n || batch[b].ny != n) throw ShapeMismatch("ragged batch");
        for (std::size_t q = 0; q < batch[b].values.size(); ++q)
            in.v[b * batch[b].values.size() + q] = static_cast<ad::real>(batch[b].values[q]);
    }
    Value out = ifunet_forward(Value::leaf(std::move(in), false), params, cfg);
    std::vector<ImageField> result(batch.size());
    const std::size_t n_pix = static_cast<std::size_t>(n) * n;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        result[b] = batch[b];
        for (std::size_t q = 0; q < n_pix; ++q)
            result[b].values[q] = static_cast<double>(out.tensor().v[b * n_pix + q]);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'A', 'C', 'T', 'C', 'K', 'P', 'T'};

nlohmann::json config_to_json(const IFUnetConfig& c) {
    return {{"depth", c.depth},
            {"base_channels", c.base_channels},
            {"f_pool", c.f_pool},
            {"f_conv", c.f_conv},
            {"f_attn", c.f_attn},
            {"heads", c.heads},
            {"ffn_ratio", c.ffn_ratio},
            {"attn_pool", c.attn_pool},
            {"use_mixer_blocks", c.use_mixer_blocks},
            {"max_pool_in_mixer", c.max_pool_in_mixer}};
}

IFUnetConfig config_from_json(const nlohmann::json& j) {
    IFUnetConfig c;
    c.depth = j.at("depth").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.f_pool = j.at("f_pool").get<double>();
    c.f_conv = j.at("f_conv").get<double>();
    c.f_attn = j.at("f_attn").get<double>();
    c.heads = j.at("heads").get<int>();
    c.ffn_ratio = j.at("ffn_ratio").get<int>();
    c.attn_pool = j.at("attn_pool").get<int>();
    c.use_mixer_blocks = j.at("use_mixer_blocks").get<bool>();
    c.max_pool_in_mixer = j.at("max_pool_in_mixer").get<bool>();
    return c;
}

} // namespace

void save_checkpoint(const std::string& path, const IFUnetParams& params,
                     const CheckpointMeta& meta) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path + " for writing");

    nlohmann::json manifest;
    manifest["config"] = config_to_json(meta.config);
    manifest["geometry"] = {{"n_elements", meta.geometry.n_elements},
                            {"radius_m", meta.geometry.radius_m},
                            {"fs_hz", meta.geometry.fs_hz},
                            {"n_samples", meta.geometry.n_samples},
                            {"sound_speed_mps", meta.geometry.sound_speed_mps},
                            {"t0_s", meta.geometry.t0_s}};
    manifest["grid"] = {{"nx", meta.grid.nx}, {"ny", meta.grid.ny}, {"pitch_m", meta.grid.pitch_m}};
    manifest["input_gain"] = meta.input_gain;
    manifest["mode"] = meta.mode;
    manifest["seed"] = meta.seed;
    nlohmann::json plist = nlohmann::json::array();
    for (const auto& [name, v] : params.named()) {
        nlohmann::json shape = nlohmann::json::array();
        for (int i = 0; i < v.shape().ndim; ++i) shape.push_back(v.shape().d[i]);
        plist.push_back({{"name", name}, {"shape", shape}});
    }
    manifest["params"] = plist;
    const std::string text = manifest.dump();

    io::write_bytes(os, kMagic, sizeof(kMagic));
    io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
    io::write_bytes(os, text.data(), text.size());

    std::uint32_t crc = 0;
    for (const auto& [name, v] : params.named()) {
        std::vector<float> blob(v.tensor().v.size());
        for (std::size_t i = 0; i < blob.size(); ++i)
            blob[i] = static_cast<float>(v.tensor().v[i]);
        io::write_bytes(os, blob.data(), blob.size() * sizeof(float));
        crc = io::crc32(blob.data(), blob.size() * sizeof(float), crc);
    }
    io::write_pod<std::uint32_t>(os, crc);
}

std::pair<IFUnetParams, CheckpointMeta> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path);
    char magic[8];
    io::read_bytes(is, magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CorruptFile("bad checkpoint magic");
    const auto len = io::read_pod<std::uint32_t>(is, "manifest length");
    std::string text(len, '\0');
    io::read_bytes(is, text.data(), len, "manifest");

    CheckpointMeta meta;
    std::vector<std::pair<std::string, Shape>> layout;
    try {
        const auto manifest = nlohmann::json::parse(text);
        meta.config = config_from_json(manifest.at("config"));
        const auto& jg = manifest.at("geometry");
        meta.geometry.n_elements = jg.at("n_elements").get<int>();
        meta.geometry.radius_m = jg.at("radius_m").get<double>();
        meta.geometry.fs_hz = jg.at("fs_hz").get<double>();
        meta.geometry.n_samples = jg.at("n_samples").get<int>();
        meta.geometry.sound_speed_mps = jg.at("sound_speed_mps").get<double>();
        meta.geometry.t0_s = jg.at("t0_s").get<double>();
        const auto& jr = manifest.at("grid");
        meta.grid.nx = jr.at("nx").get<int>();
        meta.grid.ny = jr.at("ny").get<int>();
        meta.grid.pitch_m = jr.at("pitch_m").get<double>();
        meta.input_gain = manifest.at("input_gain").get<double>();
        meta.mode = manifest.at("mode").get<std::string>();
        meta.seed = manifest.at("seed").get<std::uint64_t>();
        for (const auto& p : manifest.at("params")) {
            Shape s;
            s.ndim = 0;
            for (const auto& d : p.at("shape")) s.d[s.ndim++] = d.get<std::int64_t>();
            layout.emplace_back(p.at("name").get<std::string>(), s);
        }
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile(std::string("bad checkpoint manifest: ") + e.what());
    }

    IFUnetParams params;
    std::uint32_t crc = 0;
    for (const auto& [name, shape] : layout) {
        std::vector<float> blob(static_cast<std::size_t>(shape.numel()));
        io::read_bytes(is, blob.data(), blob.size() * sizeof(float), "parameter " + name);
        crc = io::crc32(blob.data(), blob.size() * sizeof(float), crc);
        Tensor t(shape);
        for (std::size_t i = 0; i < blob.size(); ++i) t.v[i] = static_cast<ad::real>(blob[i]);
        params.add(name, std::move(t));
    }
    const auto stored = io::read_pod<std::uint32_t>(is, "checkpoint crc");
    if (stored != crc) throw CorruptFile("checkpoint blob CRC mismatch");
    return {std::move(params), std::move(meta)};
}

} // namespace pact::net
