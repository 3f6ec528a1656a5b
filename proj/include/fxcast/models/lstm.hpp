#pragma once

#include "fxcast/models/common.hpp"

namespace fxcast {

/// Three stacked LSTM layers; the head reads the top layer's final hidden
/// state. The attribution target is the whole top-layer hidden sequence.
class LstmModel final : public ForecastModel {
public:
    explicit LstmModel(ModelConfig cfg) : ForecastModel(std::move(cfg)) {
        Rng rng(cfg_.seed);
        std::size_t in = static_cast<std::size_t>(cfg_.F);
        for (int layer = 0; layer < 3; ++layer) {
            const auto h = static_cast<std::size_t>(cfg_.lstm_hidden[layer]);
            const std::string prefix = "lstm" + std::to_string(layer + 1);
            wx_[layer] = store_.add(prefix + ".wx", {in, 4 * h}, in, rng);
            wh_[layer] = store_.add(prefix + ".wh", {h, 4 * h}, h, rng);
            b_[layer] = store_.add(prefix + ".b", {4 * h}, h, rng);
            in = h;
        }
        head_ = LinearBlock::make(store_, rng, "head",
                                  static_cast<std::size_t>(cfg_.lstm_hidden[2]),
                                  static_cast<std::size_t>(cfg_.H));
        cam_target_ = "top_hidden_sequence";
    }

protected:
    ForwardTrace run(const Tensor& x) override {
        const std::size_t B = x.dim(0);
        const auto T = static_cast<std::size_t>(cfg_.L);
        Tensor h = x;
        for (int layer = 0; layer < 3; ++layer) {
            h = lstm_layer(h, store_[wx_[layer]], store_[wh_[layer]], store_[b_[layer]]);
        }
        Tensor cam = h; // [B x T x h3]
        const auto h3 = static_cast<std::size_t>(cfg_.lstm_hidden[2]);
        Tensor last = reshape(slice(cam, 1, T - 1, 1), {B, h3});
        return {head_.apply(store_, last), cam};
    }

private:
    std::size_t wx_[3] = {}, wh_[3] = {}, b_[3] = {};
    LinearBlock head_;
};

} // namespace fxcast
