#pragma once

#include "fxcast/models/common.hpp"

namespace fxcast {

/// Fully connected net: flatten(L*F) -> 3 hidden ReLU layers -> linear head.
class MlpModel final : public ForecastModel {
public:
    explicit MlpModel(ModelConfig cfg) : ForecastModel(std::move(cfg)) {
        Rng rng(cfg_.seed);
        const auto in = static_cast<std::size_t>(cfg_.L) * static_cast<std::size_t>(cfg_.F);
        const auto h = static_cast<std::size_t>(cfg_.mlp_hidden);
        l1_ = LinearBlock::make(store_, rng, "fc1", in, h);
        l2_ = LinearBlock::make(store_, rng, "fc2", h, h);
        l3_ = LinearBlock::make(store_, rng, "fc3", h, h);
        head_ = LinearBlock::make(store_, rng, "head", h, static_cast<std::size_t>(cfg_.H));
        cam_target_ = "hidden3";
    }

protected:
    ForwardTrace run(const Tensor& x) override {
        const std::size_t B = x.dim(0);
        const auto h = static_cast<std::size_t>(cfg_.mlp_hidden);
        Tensor flat = reshape(x, {B, x.dim(1) * x.dim(2)});
        Tensor h1 = relu(l1_.apply(store_, flat));
        Tensor h2 = relu(l2_.apply(store_, h1));
        Tensor h3 = relu(l3_.apply(store_, h2));
        Tensor cam = reshape(h3, {B, 1, h}); // single-step time axis
        Tensor out = head_.apply(store_, reshape(cam, {B, h}));
        return {out, cam};
    }

private:
    LinearBlock l1_, l2_, l3_, head_;
};

} // namespace fxcast
