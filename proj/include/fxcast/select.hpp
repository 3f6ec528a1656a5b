#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "fxcast/errors.hpp"
#include "fxcast/frame.hpp"
#include "fxcast/ops.hpp"
#include "fxcast/ridge.hpp"
#include "fxcast/windows.hpp"

namespace fxcast {

/// Wrapper feature selection: sequential forward selection scored by the
/// held-out MAE of a ridge regressor on flattened windows (features = L lags
/// of each selected column, target = mean of the H-step horizon). The holdout
/// is the final fraction of windows, chronologically.
struct SelectConfig {
    double lambda = 1.0;
    std::size_t input_len = 32;
    std::size_t horizon = 16;
    std::size_t max_features = 10;
    int patience = 2;
    double holdout_fraction = 0.2;
};

struct SelectionResult {
    std::vector<std::string> selected;
    std::vector<double> trace; // best holdout MAE per selection step
    double lambda = 0.0;
    // step-0 table: holdout MAE of each candidate alone
    std::vector<std::string> single_feature_names;
    std::vector<double> single_feature_mae;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["selected"] = selected;
        j["trace"] = trace;
        j["lambda"] = lambda;
        nlohmann::ordered_json table = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < single_feature_names.size(); ++i) {
            table.push_back({{"feature", single_feature_names[i]},
                             {"mae", single_feature_mae[i]}});
        }
        j["single_feature_mae"] = table;
        return j;
    }

    static SelectionResult from_json(const nlohmann::json& j) {
        SelectionResult r;
        r.selected = j.at("selected").get<std::vector<std::string>>();
        r.trace = j.at("trace").get<std::vector<double>>();
        r.lambda = j.at("lambda").get<double>();
        for (const auto& e : j.at("single_feature_mae")) {
            r.single_feature_names.push_back(e.at("feature").get<std::string>());
            r.single_feature_mae.push_back(e.at("mae").get<double>());
        }
        return r;
    }
};

/// Name of the built-in reference feature subset.
inline const char* kReferenceSubsetName = "paper-2024-selected";

/// The published reference subset, mapped onto the shipped schema's canonical
/// indicator names ("m2u2" in the original listing has no schema counterpart;
/// it is mapped to "um2", the closest named indicator). "date" refers to the
/// derived days-since-start column.
inline std::vector<std::string> reference_selected_features() {
    return {"HS300", "cpiu",  "AUDUSD", "EURUSD", "um2",
            "inputu", "trade", "udr",    "USDX",   "date"};
}

namespace detail {

struct WrapperProblem {
    Tensor x;               // [N x (L*|cols|)]
    std::vector<double> y;  // horizon means
    std::size_t n_train = 0;
};

inline WrapperProblem wrapper_problem(const SeriesFrame& zframe,
                                      const std::vector<std::string>& cols,
                                      const SelectConfig& cfg) {
    WindowSet ws = make_windows(zframe, cols, cfg.input_len, cfg.horizon);
    const std::size_t n = ws.count();
    const std::size_t f = cfg.input_len * cols.size();
    WrapperProblem p;
    p.x = reshape(ws.inputs, {n, f}).detached();
    p.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t h = 0; h < cfg.horizon; ++h) acc += ws.targets.at({i, h});
        p.y[i] = acc / static_cast<double>(cfg.horizon);
    }
    const auto n_hold = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(cfg.holdout_fraction * static_cast<double>(n))));
    if (n_hold >= n) throw DataError("wrapper_select: not enough windows for a holdout split");
    p.n_train = n - n_hold;
    return p;
}

inline double wrapper_holdout_mae(const WrapperProblem& p, double lambda) {
    const std::size_t f = p.x.dim(1);
    Tensor xtrain({p.n_train, f});
    std::copy(p.x.data(), p.x.data() + p.n_train * f, xtrain.mutable_data());
    std::vector<double> ytrain(p.y.begin(), p.y.begin() + static_cast<std::ptrdiff_t>(p.n_train));
    RidgeModel m = ridge_fit(xtrain, ytrain, lambda);
    double acc = 0.0;
    const std::size_t n = p.x.dim(0);
    for (std::size_t i = p.n_train; i < n; ++i) {
        acc += std::fabs(m.predict_row(p.x.data() + i * f, f) - p.y[i]);
    }
    return acc / static_cast<double>(n - p.n_train);
}

} // namespace detail

inline SelectionResult wrapper_select(const SeriesFrame& frame,
                                      const std::vector<std::string>& candidates,
                                      const SelectConfig& cfg) {
    if (candidates.empty()) throw ParameterError("wrapper_select: no candidate features");
    if (cfg.max_features < 1) throw ParameterError("wrapper_select: max_features must be >= 1");
    if (cfg.patience < 1) throw ParameterError("wrapper_select: patience must be >= 1");

    // leak-free internal normalization: stats fit strictly before the first
    // holdout target row
    WindowSet probe = make_windows(frame, {frame.target_name()}, cfg.input_len, cfg.horizon);
    const std::size_t n = probe.count();
    const auto n_hold = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(cfg.holdout_fraction * static_cast<double>(n))));
    if (n_hold >= n) throw DataError("wrapper_select: not enough windows for a holdout split");
    const std::size_t fit_end = probe.window_starts[n - n_hold] + cfg.input_len;
    const NormStats stats = zscore_fit(frame, fit_end);
    const SeriesFrame zframe = zscore_apply(frame, stats);

    SelectionResult result;
    result.lambda = cfg.lambda;

    std::vector<std::string> selected;
    std::vector<std::string> remaining = candidates;
    double best_overall = std::numeric_limits<double>::infinity();
    std::size_t best_len = 0;
    int stale_steps = 0;

    while (selected.size() < cfg.max_features && !remaining.empty()) {
        double step_best = std::numeric_limits<double>::infinity();
        std::size_t step_best_idx = 0;
        std::vector<double> step_maes(remaining.size());
        for (std::size_t c = 0; c < remaining.size(); ++c) {
            std::vector<std::string> cols = selected;
            cols.push_back(remaining[c]);
            const auto problem = detail::wrapper_problem(zframe, cols, cfg);
            const double mae = detail::wrapper_holdout_mae(problem, cfg.lambda);
            step_maes[c] = mae;
            if (mae < step_best) { // ties keep the earlier candidate
                step_best = mae;
                step_best_idx = c;
            }
        }
        if (selected.empty()) {
            result.single_feature_names = remaining;
            result.single_feature_mae = step_maes;
        }
        selected.push_back(remaining[step_best_idx]);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(step_best_idx));
        result.trace.push_back(step_best);

        if (step_best < best_overall) {
            best_overall = step_best;
            best_len = selected.size();
            stale_steps = 0;
        } else {
            ++stale_steps;
            if (stale_steps >= cfg.patience) break;
        }
    }

    // keep only the prefix that achieved the best holdout MAE
    selected.resize(best_len);
    result.selected = std::move(selected);
    return result;
}

} // namespace fxcast
