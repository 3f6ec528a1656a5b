#pragma once

#include "fxcast/models/common.hpp"

namespace fxcast {

/// Three residual blocks of causal dilated convolution, kernels (3, 3, 5) at
/// dilation 2. Each block: ReLU(conv) + skip, the skip being a 1x1 projection
/// when channel counts differ. The head reads the final time step.
/// Receptive field: 1 + 2*2 + 2*2 + 4*2 = 17 steps.
class TcnModel final : public ForecastModel {
public:
    explicit TcnModel(ModelConfig cfg) : ForecastModel(std::move(cfg)) {
        Rng rng(cfg_.seed);
        const auto c = static_cast<std::size_t>(cfg_.tcn_channels);
        const auto f = static_cast<std::size_t>(cfg_.F);
        const std::size_t ks[3] = {3, 3, 5};
        std::size_t in = f;
        for (int blk = 0; blk < 3; ++blk) {
            const std::string prefix = "block" + std::to_string(blk + 1);
            kernel_[blk] = store_.add(prefix + ".kernel", {ks[blk], in, c}, ks[blk] * in, rng);
            bias_[blk] = store_.add(prefix + ".bias", {c}, ks[blk] * in, rng);
            in = c;
        }
        skip_ = LinearBlock::make(store_, rng, "block1.skip", f, c);
        head_ = LinearBlock::make(store_, rng, "head", c, static_cast<std::size_t>(cfg_.H));
        cam_target_ = "block3_output";
    }

    static constexpr int kDilation = 2;
    static constexpr int receptive_field() { return 1 + 2 * 2 + 2 * 2 + 4 * 2; }

protected:
    ForwardTrace run(const Tensor& x) override {
        const std::size_t B = x.dim(0);
        const auto T = static_cast<std::size_t>(cfg_.L);
        const auto c = static_cast<std::size_t>(cfg_.tcn_channels);

        Tensor h = x;
        for (int blk = 0; blk < 3; ++blk) {
            Tensor conv = relu(add(conv1d_causal(h, store_[kernel_[blk]], kDilation),
                                   store_[bias_[blk]]));
            Tensor skip = blk == 0 ? skip_.apply(store_, h) : h;
            h = add(conv, skip);
        }
        Tensor cam = h; // [B x T x C]
        Tensor last = reshape(slice(cam, 1, T - 1, 1), {B, c});
        return {head_.apply(store_, last), cam};
    }

private:
    std::size_t kernel_[3] = {}, bias_[3] = {};
    LinearBlock skip_, head_;
};

} // namespace fxcast
