#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "fxcast/errors.hpp"
#include "fxcast/ops.hpp"
#include "fxcast/rng.hpp"
#include "fxcast/tape.hpp"
#include "fxcast/tensor.hpp"

namespace fxcast {

/// Architecture tag plus every tunable dimension. Defaults are the reference
/// configuration; the desk preset shrinks them for fast protocol runs.
struct ModelConfig {
    std::string arch;
    int L = 32;
    int H = 16;
    int F = 10;
    std::uint64_t seed = 0;
    int target_feature = -1; // index of the target column among features, -1 if absent

    // mlp: 3 hidden layers, ReLU
    int mlp_hidden = 128;
    // lstm: stacked cells
    std::array<int, 3> lstm_hidden = {32, 64, 64};
    // tcn: kernels (3,3,5), dilation (2,2,2) fixed by design
    int tcn_channels = 64;
    // tsmixer: feature width capped at 16
    int mixer_blocks = 5;
    int mixer_channels = 16;
    int mixer_time_hidden = 0; // 0 -> L
    int mixer_feat_hidden = 16;
    // transformer
    int tf_dim = 512;
    int tf_heads = 8;
    int tf_ffn = 2048;
    int tf_enc_layers = 6;
    int tf_dec_layers = 6;
    bool tf_positional = true;
    // patchtst
    int patch_len = 12;
    int patch_dim = 128;
    int patch_heads = 8;
    int patch_layers = 6;
    int patch_ffn = 0; // 0 -> 2*patch_dim
    // itransformer
    int itf_dim = 128;
    int itf_heads = 8;
    int itf_blocks = 4;
    int itf_block_layers = 2;
    int itf_ffn = 0; // 0 -> 2*itf_dim
    // fedformer_lite
    int fed_dim = 256;
    int fed_heads = 8;
    int fed_ffn = 512;
    int fed_enc_layers = 3;
    int fed_dec_layers = 2;
    int fed_topk = 8;
    int fed_ma_window = 25;

    void validate() const {
        if (L < 1 || H < 1 || F < 1) {
            throw ConfigError("model config: L, H, F must be >= 1");
        }
        const int positives[] = {mlp_hidden,     lstm_hidden[0], lstm_hidden[1], lstm_hidden[2],
                                 tcn_channels,   mixer_blocks,   mixer_channels, mixer_feat_hidden,
                                 tf_dim,         tf_heads,       tf_ffn,         tf_enc_layers,
                                 tf_dec_layers,  patch_len,      patch_dim,      patch_heads,
                                 patch_layers,   itf_dim,        itf_heads,      itf_blocks,
                                 itf_block_layers, fed_dim,      fed_heads,      fed_ffn,
                                 fed_enc_layers, fed_dec_layers, fed_topk,       fed_ma_window};
        for (int v : positives) {
            if (v < 1) throw ConfigError("model config: hyperparameters must be positive");
        }
        if (mixer_channels > 16 || mixer_feat_hidden > 16) {
            throw ConfigError("model config: tsmixer feature width is capped at 16");
        }
        if (tf_dim % tf_heads != 0 || patch_dim % patch_heads != 0 ||
            itf_dim % itf_heads != 0 || fed_dim % fed_heads != 0) {
            throw ConfigError("model config: width must be divisible by head count");
        }
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["arch"] = arch;
        j["L"] = L;
        j["H"] = H;
        j["F"] = F;
        j["seed"] = seed;
        j["target_feature"] = target_feature;
        j["mlp_hidden"] = mlp_hidden;
        j["lstm_hidden"] = lstm_hidden;
        j["tcn_channels"] = tcn_channels;
        j["mixer_blocks"] = mixer_blocks;
        j["mixer_channels"] = mixer_channels;
        j["mixer_time_hidden"] = mixer_time_hidden;
        j["mixer_feat_hidden"] = mixer_feat_hidden;
        j["tf_dim"] = tf_dim;
        j["tf_heads"] = tf_heads;
        j["tf_ffn"] = tf_ffn;
        j["tf_enc_layers"] = tf_enc_layers;
        j["tf_dec_layers"] = tf_dec_layers;
        j["tf_positional"] = tf_positional;
        j["patch_len"] = patch_len;
        j["patch_dim"] = patch_dim;
        j["patch_heads"] = patch_heads;
        j["patch_layers"] = patch_layers;
        j["patch_ffn"] = patch_ffn;
        j["itf_dim"] = itf_dim;
        j["itf_heads"] = itf_heads;
        j["itf_blocks"] = itf_blocks;
        j["itf_block_layers"] = itf_block_layers;
        j["itf_ffn"] = itf_ffn;
        j["fed_dim"] = fed_dim;
        j["fed_heads"] = fed_heads;
        j["fed_ffn"] = fed_ffn;
        j["fed_enc_layers"] = fed_enc_layers;
        j["fed_dec_layers"] = fed_dec_layers;
        j["fed_topk"] = fed_topk;
        j["fed_ma_window"] = fed_ma_window;
        return j;
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.arch = j.at("arch").get<std::string>();
        c.L = j.at("L").get<int>();
        c.H = j.at("H").get<int>();
        c.F = j.at("F").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.target_feature = j.at("target_feature").get<int>();
        c.mlp_hidden = j.at("mlp_hidden").get<int>();
        c.lstm_hidden = j.at("lstm_hidden").get<std::array<int, 3>>();
        c.tcn_channels = j.at("tcn_channels").get<int>();
        c.mixer_blocks = j.at("mixer_blocks").get<int>();
        c.mixer_channels = j.at("mixer_channels").get<int>();
        c.mixer_time_hidden = j.at("mixer_time_hidden").get<int>();
        c.mixer_feat_hidden = j.at("mixer_feat_hidden").get<int>();
        c.tf_dim = j.at("tf_dim").get<int>();
        c.tf_heads = j.at("tf_heads").get<int>();
        c.tf_ffn = j.at("tf_ffn").get<int>();
        c.tf_enc_layers = j.at("tf_enc_layers").get<int>();
        c.tf_dec_layers = j.at("tf_dec_layers").get<int>();
        c.tf_positional = j.at("tf_positional").get<bool>();
        c.patch_len = j.at("patch_len").get<int>();
        c.patch_dim = j.at("patch_dim").get<int>();
        c.patch_heads = j.at("patch_heads").get<int>();
        c.patch_layers = j.at("patch_layers").get<int>();
        c.patch_ffn = j.at("patch_ffn").get<int>();
        c.itf_dim = j.at("itf_dim").get<int>();
        c.itf_heads = j.at("itf_heads").get<int>();
        c.itf_blocks = j.at("itf_blocks").get<int>();
        c.itf_block_layers = j.at("itf_block_layers").get<int>();
        c.itf_ffn = j.at("itf_ffn").get<int>();
        c.fed_dim = j.at("fed_dim").get<int>();
        c.fed_heads = j.at("fed_heads").get<int>();
        c.fed_ffn = j.at("fed_ffn").get<int>();
        c.fed_enc_layers = j.at("fed_enc_layers").get<int>();
        c.fed_dec_layers = j.at("fed_dec_layers").get<int>();
        c.fed_topk = j.at("fed_topk").get<int>();
        c.fed_ma_window = j.at("fed_ma_window").get<int>();
        return c;
    }
};

/// All known architecture tags, benchmark order.
inline const std::vector<std::string>& model_tags() {
    static const std::vector<std::string> tags = {
        "mlp",         "lstm",     "tcn",          "tsmixer",
        "transformer", "patchtst", "itransformer", "fedformer_lite"};
    return tags;
}

// ---------------------------------------------------------------------------
// parameter store and building blocks
// ---------------------------------------------------------------------------

struct NamedParam {
    std::string name;
    Tensor value;
};

class ParamStore {
public:
    /// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    std::size_t add(std::string name, Shape shape, std::size_t fan_in, Rng& rng) {
        Tensor t(std::move(shape));
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < t.numel(); ++i) {
            t.mutable_data()[i] = rng.uniform(-bound, bound);
        }
        items.push_back({std::move(name), std::move(t)});
        return items.size() - 1;
    }

    std::size_t add_const(std::string name, Shape shape, double value) {
        items.push_back({std::move(name), Tensor(std::move(shape), value)});
        return items.size() - 1;
    }

    Tensor& operator[](std::size_t i) { return items[i].value; }
    const Tensor& operator[](std::size_t i) const { return items[i].value; }

    std::size_t total_scalars() const {
        std::size_t n = 0;
        for (const auto& p : items) n += p.value.numel();
        return n;
    }

    std::vector<NamedParam> items;
};

struct LinearBlock {
    std::size_t w = 0, b = 0;

    static LinearBlock make(ParamStore& ps, Rng& rng, const std::string& prefix, std::size_t in,
                            std::size_t out) {
        LinearBlock l;
        l.w = ps.add(prefix + ".w", {in, out}, in, rng);
        l.b = ps.add(prefix + ".b", {out}, in, rng);
        return l;
    }

    Tensor apply(const ParamStore& ps, const Tensor& x) const {
        return linear(x, ps[w], ps[b]);
    }
};

struct LayerNormBlock {
    std::size_t gain = 0, bias = 0;

    static LayerNormBlock make(ParamStore& ps, const std::string& prefix, std::size_t d) {
        LayerNormBlock n;
        n.gain = ps.add_const(prefix + ".gain", {d}, 1.0);
        n.bias = ps.add_const(prefix + ".bias", {d}, 0.0);
        return n;
    }

    Tensor apply(const ParamStore& ps, const Tensor& x) const {
        return layer_norm(x, ps[gain], ps[bias]);
    }
};

struct FfnBlock {
    LinearBlock up, down;

    static FfnBlock make(ParamStore& ps, Rng& rng, const std::string& prefix, std::size_t d,
                         std::size_t inner) {
        return {LinearBlock::make(ps, rng, prefix + ".up", d, inner),
                LinearBlock::make(ps, rng, prefix + ".down", inner, d)};
    }

    Tensor apply(const ParamStore& ps, const Tensor& x) const {
        return down.apply(ps, relu(up.apply(ps, x)));
    }
};

/// Multi-head attention over [N x T x D] token tensors.
struct MhaBlock {
    LinearBlock q, k, v, o;
    std::size_t heads = 1;
    std::size_t dim = 1;

    static MhaBlock make(ParamStore& ps, Rng& rng, const std::string& prefix, std::size_t d,
                         std::size_t heads) {
        MhaBlock m;
        m.q = LinearBlock::make(ps, rng, prefix + ".q", d, d);
        m.k = LinearBlock::make(ps, rng, prefix + ".k", d, d);
        m.v = LinearBlock::make(ps, rng, prefix + ".v", d, d);
        m.o = LinearBlock::make(ps, rng, prefix + ".o", d, d);
        m.heads = heads;
        m.dim = d;
        return m;
    }

    Tensor apply(const ParamStore& ps, const Tensor& queries, const Tensor& keys,
                 const Tensor& values, std::vector<Tensor>* attn_sink = nullptr) const {
        const std::size_t n = queries.dim(0);
        const std::size_t tq = queries.dim(1);
        const std::size_t tk = keys.dim(1);
        const std::size_t dh = dim / heads;

        auto split = [&](const Tensor& t, std::size_t tt) {
            return permute(reshape(t, {n, tt, heads, dh}), {0, 2, 1, 3}); // [N,h,T,dh]
        };
        Tensor Q = split(q.apply(ps, queries), tq);
        Tensor K = split(k.apply(ps, keys), tk);
        Tensor V = split(v.apply(ps, values), tk);

        Tensor scores = scale(matmul(Q, permute(K, {0, 1, 3, 2})),
                              1.0 / std::sqrt(static_cast<double>(dh)));
        Tensor probs = softmax(scores, 3);
        if (attn_sink) attn_sink->push_back(probs);
        Tensor ctx = matmul(probs, V);                        // [N,h,Tq,dh]
        Tensor merged = reshape(permute(ctx, {0, 2, 1, 3}), {n, tq, dim});
        return o.apply(ps, merged);
    }
};

/// Post-norm encoder layer: self-attention then feedforward.
struct EncoderLayer {
    MhaBlock attn;
    FfnBlock ffn;
    LayerNormBlock n1, n2;

    static EncoderLayer make(ParamStore& ps, Rng& rng, const std::string& prefix, std::size_t d,
                             std::size_t heads, std::size_t inner) {
        return {MhaBlock::make(ps, rng, prefix + ".attn", d, heads),
                FfnBlock::make(ps, rng, prefix + ".ffn", d, inner),
                LayerNormBlock::make(ps, prefix + ".norm1", d),
                LayerNormBlock::make(ps, prefix + ".norm2", d)};
    }

    Tensor apply(const ParamStore& ps, const Tensor& x,
                 std::vector<Tensor>* attn_sink = nullptr) const {
        Tensor a = n1.apply(ps, add(x, attn.apply(ps, x, x, x, attn_sink)));
        return n2.apply(ps, add(a, ffn.apply(ps, a)));
    }
};

/// Post-norm decoder layer: self-attention, cross-attention, feedforward.
struct DecoderLayer {
    MhaBlock self_attn, cross_attn;
    FfnBlock ffn;
    LayerNormBlock n1, n2, n3;

    static DecoderLayer make(ParamStore& ps, Rng& rng, const std::string& prefix, std::size_t d,
                             std::size_t heads, std::size_t inner) {
        return {MhaBlock::make(ps, rng, prefix + ".self", d, heads),
                MhaBlock::make(ps, rng, prefix + ".cross", d, heads),
                FfnBlock::make(ps, rng, prefix + ".ffn", d, inner),
                LayerNormBlock::make(ps, prefix + ".norm1", d),
                LayerNormBlock::make(ps, prefix + ".norm2", d),
                LayerNormBlock::make(ps, prefix + ".norm3", d)};
    }

    Tensor apply(const ParamStore& ps, const Tensor& x, const Tensor& memory,
                 std::vector<Tensor>* attn_sink = nullptr) const {
        Tensor a = n1.apply(ps, add(x, self_attn.apply(ps, x, x, x, attn_sink)));
        Tensor c = n2.apply(ps, add(a, cross_attn.apply(ps, a, memory, memory, attn_sink)));
        return n3.apply(ps, add(c, ffn.apply(ps, c)));
    }
};

/// Cached sinusoidal positional encoding table [T x D].
inline Tensor sinusoidal_encoding(std::size_t T, std::size_t D) {
    static std::mutex mu;
    static std::unordered_map<std::uint64_t, Tensor> cache;
    const std::uint64_t key = (static_cast<std::uint64_t>(T) << 32) | D;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    Tensor pe({T, D});
    for (std::size_t pos = 0; pos < T; ++pos) {
        for (std::size_t i = 0; i < D; ++i) {
            const double rate =
                std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(D));
            const double angle = static_cast<double>(pos) * rate;
            pe.mutable_data()[pos * D + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    cache.emplace(key, pe);
    return pe;
}

// ---------------------------------------------------------------------------
// the common model interface
// ---------------------------------------------------------------------------

struct ForwardTrace {
    Tensor output; // [B x H]
    Tensor cam;    // designated attribution activation, [B x T' x K], on the forward path
};

/// A trained architecture: forward prediction, parameter access, and a
/// designated activation for attribution. A model being trained is
/// single-owner; a frozen model is safely shareable for concurrent reads.
class ForecastModel {
public:
    explicit ForecastModel(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }
    virtual ~ForecastModel() = default;

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

    std::vector<Tensor*> param_ptrs() {
        std::vector<Tensor*> out;
        out.reserve(store_.items.size());
        for (auto& p : store_.items) out.push_back(&p.value);
        return out;
    }

    std::size_t param_count() const { return store_.total_scalars(); }

    /// Name of the activation designated for attribution.
    const std::string& cam_target() const { return cam_target_; }
    /// Whether that activation has a genuine time axis.
    bool cam_has_time_axis() const { return cam_time_axis_; }

    /// Run the model on [B x L x F]. When a tape is given, every parameter is
    /// registered on it first so the graph records parameter dependencies.
    ForwardTrace forward_traced(Tape* tape, const Tensor& x) {
        if (x.rank() != 3 || x.dim(1) != static_cast<std::size_t>(cfg_.L) ||
            x.dim(2) != static_cast<std::size_t>(cfg_.F)) {
            throw DimensionError("forward: expected [B x " + std::to_string(cfg_.L) + " x " +
                                 std::to_string(cfg_.F) + "], got " + shape_str(x.shape()));
        }
        attn_.clear();
        if (tape) {
            for (auto& p : store_.items) tape->watch(p.value);
        }
        return run(x);
    }

    Tensor forward(Tape* tape, const Tensor& x) { return forward_traced(tape, x).output; }

    /// Attention probability tensors recorded during the last forward pass.
    const std::vector<Tensor>& last_attention() const { return attn_; }

protected:
    virtual ForwardTrace run(const Tensor& x) = 0;

    ModelConfig cfg_;
    ParamStore store_;
    std::string cam_target_;
    bool cam_time_axis_ = true;
    std::vector<Tensor> attn_;
};

} // namespace fxcast
