#pragma once

#include "fxcast/models/common.hpp"

namespace fxcast {

/// Mixer for multivariate series: per-block time mixing (an MLP across the L
/// axis, per channel) and feature mixing (an MLP across the channel axis, per
/// time step), each as a pre-norm residual branch:
///   x = x + time_mix(norm(x));  x = x + feat_mix(norm(x))
/// Pre-norm keeps the block an exact identity when a mix branch is zeroed,
/// which the tests use to validate the plumbing. Input channels are first
/// projected F -> mixer_channels (capped at 16). The attribution target is the
/// final block output.
class TsMixerModel final : public ForecastModel {
public:
    explicit TsMixerModel(ModelConfig cfg) : ForecastModel(std::move(cfg)) {
        Rng rng(cfg_.seed);
        const auto L = static_cast<std::size_t>(cfg_.L);
        const auto C = static_cast<std::size_t>(cfg_.mixer_channels);
        const auto th = static_cast<std::size_t>(
            cfg_.mixer_time_hidden > 0 ? cfg_.mixer_time_hidden : cfg_.L);
        const auto fh = static_cast<std::size_t>(cfg_.mixer_feat_hidden);

        proj_ = LinearBlock::make(store_, rng, "proj", static_cast<std::size_t>(cfg_.F), C);
        blocks_.reserve(static_cast<std::size_t>(cfg_.mixer_blocks));
        for (int b = 0; b < cfg_.mixer_blocks; ++b) {
            const std::string prefix = "block" + std::to_string(b + 1);
            Block blk;
            blk.time_norm = LayerNormBlock::make(store_, prefix + ".time_norm", C);
            blk.time_mix = FfnBlock::make(store_, rng, prefix + ".time_mix", L, th);
            blk.feat_norm = LayerNormBlock::make(store_, prefix + ".feat_norm", C);
            blk.feat_mix = FfnBlock::make(store_, rng, prefix + ".feat_mix", C, fh);
            blocks_.push_back(blk);
        }
        head_ = LinearBlock::make(store_, rng, "head", L * C, static_cast<std::size_t>(cfg_.H));
        cam_target_ = "final_mixer_block";
    }

protected:
    ForwardTrace run(const Tensor& x) override {
        const std::size_t B = x.dim(0);
        const auto L = static_cast<std::size_t>(cfg_.L);
        const auto C = static_cast<std::size_t>(cfg_.mixer_channels);

        Tensor h = proj_.apply(store_, x); // [B x L x C]
        for (const auto& blk : blocks_) {
            Tensor tn = blk.time_norm.apply(store_, h);
            Tensor tt = permute(tn, {0, 2, 1}); // [B x C x L]
            Tensor tm = permute(blk.time_mix.apply(store_, tt), {0, 2, 1});
            h = add(h, tm);

            Tensor fn = blk.feat_norm.apply(store_, h);
            h = add(h, blk.feat_mix.apply(store_, fn));
        }
        Tensor cam = h; // [B x L x C]
        Tensor out = head_.apply(store_, reshape(cam, {B, L * C}));
        return {out, cam};
    }

private:
    struct Block {
        LayerNormBlock time_norm, feat_norm;
        FfnBlock time_mix, feat_mix;
    };

    LinearBlock proj_, head_;
    std::vector<Block> blocks_;
};

} // namespace fxcast
