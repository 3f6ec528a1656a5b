#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fxcast/errors.hpp"
#include "fxcast/frame.hpp"
#include "fxcast/tensor.hpp"

namespace fxcast {

/// Supervised sliding windows: inputs[i] covers source rows [s, s+L) over the
/// selected feature columns, targets[i] covers rows [s+L, s+L+H) of the target
/// column, stride 1.
struct WindowSet {
    std::size_t input_len = 0;
    std::size_t horizon = 0;
    std::vector<std::string> feature_names;
    Tensor inputs;  // [N x L x F]
    Tensor targets; // [N x H]
    std::vector<std::size_t> window_starts;
    std::vector<std::string> timestamps; // source frame timestamps

    std::size_t count() const { return window_starts.size(); }

    /// Source rows covered by a window (inputs and targets): [s, s+L+H).
    std::pair<std::size_t, std::size_t> covered_rows(std::size_t i) const {
        const std::size_t s = window_starts.at(i);
        return {s, s + input_len + horizon};
    }
};

inline WindowSet make_windows(const SeriesFrame& frame,
                              const std::vector<std::string>& feature_names, std::size_t L,
                              std::size_t H) {
    if (L < 1 || H < 1) throw ParameterError("make_windows: L and H must be >= 1");
    const std::size_t T = frame.rows();
    if (T < L + H) {
        throw DataError("make_windows: need at least L+H=" + std::to_string(L + H) +
                        " rows, frame has " + std::to_string(T));
    }
    std::vector<const std::vector<double>*> feats;
    feats.reserve(feature_names.size());
    for (const auto& name : feature_names) feats.push_back(&frame.column(name).values);
    const auto& target = frame.target().values;

    const std::size_t N = T - L - H + 1;
    const std::size_t F = feats.size();
    WindowSet ws;
    ws.input_len = L;
    ws.horizon = H;
    ws.feature_names = feature_names;
    ws.inputs = Tensor({N, L, F});
    ws.targets = Tensor({N, H});
    ws.timestamps = frame.timestamps();
    double* in = ws.inputs.mutable_data();
    double* tg = ws.targets.mutable_data();
    for (std::size_t s = 0; s < N; ++s) {
        ws.window_starts.push_back(s);
        for (std::size_t t = 0; t < L; ++t) {
            for (std::size_t f = 0; f < F; ++f) {
                in[(s * L + t) * F + f] = (*feats[f])[s + t];
            }
        }
        for (std::size_t h = 0; h < H; ++h) tg[s * H + h] = target[s + L + h];
    }
    return ws;
}

/// Chronologically contiguous k-fold split over windows, ordered by window
/// start. Sizes differ by at most one with the larger blocks first.
struct FoldSplit {
    int k = 0;
    std::vector<int> assignment; // per-window fold index

    std::vector<std::size_t> fold_indices(int fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignment.size(); ++i)
            if (assignment[i] == fold) out.push_back(i);
        return out;
    }

    std::vector<std::size_t> train_indices(int fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignment.size(); ++i)
            if (assignment[i] != fold) out.push_back(i);
        return out;
    }
};

inline FoldSplit make_folds(std::size_t n_windows, int k = 5) {
    if (k < 1) throw ParameterError("make_folds: k must be >= 1");
    if (n_windows < static_cast<std::size_t>(k)) {
        throw DataError("make_folds: " + std::to_string(n_windows) + " windows for k=" +
                        std::to_string(k));
    }
    FoldSplit fs;
    fs.k = k;
    fs.assignment.resize(n_windows);
    const std::size_t base = n_windows / static_cast<std::size_t>(k);
    const std::size_t extra = n_windows % static_cast<std::size_t>(k);
    std::size_t pos = 0;
    for (int f = 0; f < k; ++f) {
        const std::size_t len = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
        for (std::size_t i = 0; i < len; ++i) fs.assignment[pos++] = f;
    }
    return fs;
}

inline FoldSplit make_folds(const WindowSet& ws, int k = 5) { return make_folds(ws.count(), k); }

/// Gather a batch of windows into dense tensors.
inline std::pair<Tensor, Tensor> gather_windows(const WindowSet& ws,
                                                const std::vector<std::size_t>& indices) {
    const std::size_t B = indices.size();
    const std::size_t L = ws.input_len, H = ws.horizon;
    const std::size_t F = ws.feature_names.size();
    Tensor x({B, L, F});
    Tensor y({B, H});
    const double* in = ws.inputs.data();
    const double* tg = ws.targets.data();
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t i = indices[b];
        std::copy(in + i * L * F, in + (i + 1) * L * F, x.mutable_data() + b * L * F);
        std::copy(tg + i * H, tg + (i + 1) * H, y.mutable_data() + b * H);
    }
    return {x, y};
}

} // namespace fxcast
