#include "catch2/catch_amalgamated.hpp"

#include <cmath>

#include "fxcast/frame.hpp"
#include "fxcast/rng.hpp"
#include "fxcast/synth.hpp"
#include "fxcast/windows.hpp"
#include "support/tmpfiles.hpp"

using namespace fxcast;
using testsupport::TmpDir;

namespace {

Schema two_col_schema() {
    Schema s;
    s.columns.push_back({"rate", Frequency::daily, ColumnRole::target});
    s.columns.push_back({"cpiu", Frequency::monthly, ColumnRole::feature});
    return s;
}

SeriesFrame small_frame(std::vector<double> target, std::string name = "rate") {
    std::vector<std::string> ts;
    const long start = civil_to_days(2020, 1, 1);
    for (std::size_t i = 0; i < target.size(); ++i) {
        ts.push_back(detail::iso_from_days(start + static_cast<long>(i)));
    }
    std::vector<Column> cols{{name, std::move(target), Frequency::daily}};
    return SeriesFrame(std::move(ts), std::move(cols), name);
}

} // namespace

TEST_CASE("iso date parsing and round trip") {
    REQUIRE(parse_iso_date("1970-01-01") == 0);
    REQUIRE(parse_iso_date("1970-01-02") == 1);
    REQUIRE(parse_iso_date("2015-08-11") == civil_to_days(2015, 8, 11));
    REQUIRE(detail::iso_from_days(parse_iso_date("2024-02-29")) == "2024-02-29");
    REQUIRE_THROWS_AS(parse_iso_date("2024/01/01"), DataError);
    REQUIRE_THROWS_AS(parse_iso_date("2024-13-01"), DataError);
}

TEST_CASE("load_csv parses a well-formed file") {
    TmpDir tmp;
    const auto path = tmp.write("d.csv",
                                "date,rate,cpiu\n"
                                "2020-01-01,7.01,100.2\n"
                                "2020-01-02,7.02,\n"
                                "2020-01-03,7.03,\n");
    SeriesFrame f = load_csv(path, two_col_schema());
    REQUIRE(f.rows() == 3);
    REQUIRE(f.timestamps()[2] == "2020-01-03");
    REQUIRE(f.target_name() == "rate");
    REQUIRE(f.column("rate").values[1] == 7.02);
    REQUIRE(is_missing(f.column("cpiu").values[1]));
    REQUIRE(f.column("cpiu").frequency == Frequency::monthly);
}

TEST_CASE("load_csv rejects malformed inputs") {
    TmpDir tmp;
    Schema s = two_col_schema();

    const auto dup = tmp.write("dup.csv",
                               "date,rate,cpiu\n"
                               "2020-01-01,7.0,1\n"
                               "2020-01-01,7.1,\n");
    REQUIRE_THROWS_AS(load_csv(dup, s), DataError);

    const auto unordered = tmp.write("ord.csv",
                                     "date,rate,cpiu\n"
                                     "2020-01-02,7.0,1\n"
                                     "2020-01-01,7.1,\n");
    REQUIRE_THROWS_AS(load_csv(unordered, s), DataError);

    const auto unknown = tmp.write("unk.csv",
                                   "date,rate,mystery\n"
                                   "2020-01-01,7.0,1\n");
    REQUIRE_THROWS_AS(load_csv(unknown, s), SchemaError);

    const auto bad = tmp.write("bad.csv",
                               "date,rate,cpiu\n"
                               "2020-01-01,7.0,1\n"
                               "2020-01-02,oops,\n");
    try {
        load_csv(bad, s);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        REQUIRE(std::string(e.what()).find("row 3") != std::string::npos);
    }

    const auto daily_gap = tmp.write("gap.csv",
                                     "date,rate,cpiu\n"
                                     "2020-01-01,7.0,1\n"
                                     "2020-01-02,,\n");
    REQUIRE_THROWS_AS(load_csv(daily_gap, s), DataError);
}

TEST_CASE("forward_fill fills monthly gaps and is idempotent") {
    std::vector<std::string> ts;
    for (int i = 0; i < 5; ++i) ts.push_back(detail::iso_from_days(18262 + i));
    const double na = missing_value();
    std::vector<Column> cols{
        {"rate", {1, 2, 3, 4, 5}, Frequency::daily},
        {"m", {5, na, na, 7, na}, Frequency::monthly},
    };
    SeriesFrame f(ts, cols, "rate");
    SeriesFrame g = forward_fill(f);
    const auto& m = g.column("m").values;
    REQUIRE(m == std::vector<double>{5, 5, 5, 7, 7});
    for (const auto& c : g.columns()) {
        for (double v : c.values) REQUIRE(!is_missing(v));
    }

    // idempotence
    SeriesFrame h = forward_fill(g);
    REQUIRE(h.column("m").values == g.column("m").values);

    // all-daily frame unchanged
    SeriesFrame d = small_frame({1, 2, 3});
    SeriesFrame d2 = forward_fill(d);
    REQUIRE(d2.column("rate").values == d.column("rate").values);

    // leading missing report names the column
    std::vector<Column> bad{{"rate", {1, 2, 3, 4, 5}, Frequency::daily},
                            {"m", {na, na, 1, na, na}, Frequency::monthly}};
    SeriesFrame fb(ts, bad, "rate");
    try {
        forward_fill(fb);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        REQUIRE(std::string(e.what()).find("'m'") != std::string::npos);
    }
}

TEST_CASE("zscore_fit computes population stats on the training prefix only") {
    SeriesFrame f = small_frame({1, 2, 3, 100, -50});
    NormStats s = zscore_fit(f, 3);
    REQUIRE(s.mean[0] == 2.0);
    REQUIRE(s.stdev[0] == Catch::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));

    // changing held-out rows leaves stats bit-identical
    SeriesFrame g = small_frame({1, 2, 3, -7, 1234});
    NormStats s2 = zscore_fit(g, 3);
    REQUIRE(s.mean[0] == s2.mean[0]);
    REQUIRE(s.stdev[0] == s2.stdev[0]);

    // constant column: std floored, normalized values all 0
    SeriesFrame c = small_frame({4, 4, 4, 4});
    NormStats cs = zscore_fit(c, 4);
    SeriesFrame cz = zscore_apply(c, cs);
    for (double v : cz.column("rate").values) REQUIRE(v == 0.0);
}

TEST_CASE("zscore apply/invert round trip and shift invariance") {
    Rng rng(77);
    std::vector<double> vals;
    for (int i = 0; i < 50; ++i) vals.push_back(rng.normal(7.0, 0.3));
    SeriesFrame f = small_frame(vals);
    NormStats s = zscore_fit(f, 40);
    SeriesFrame z = zscore_apply(f, s);

    auto back = zscore_invert(z.column("rate").values, s, "rate");
    for (std::size_t i = 0; i < vals.size(); ++i) REQUIRE(std::fabs(back[i] - vals[i]) <= 1e-12);

    // fitting rows have mean ~0, std ~1 after apply
    double m = 0.0;
    for (int i = 0; i < 40; ++i) m += z.column("rate").values[static_cast<std::size_t>(i)];
    m /= 40;
    double var = 0.0;
    for (int i = 0; i < 40; ++i) {
        const double d = z.column("rate").values[static_cast<std::size_t>(i)] - m;
        var += d * d;
    }
    var /= 40;
    REQUIRE(std::fabs(m) <= 1e-10);
    REQUIRE(std::fabs(std::sqrt(var) - 1.0) <= 1e-10);

    // mean-shifted copy normalizes to the same values
    std::vector<double> shifted = vals;
    for (auto& v : shifted) v += 5.0;
    SeriesFrame fs = small_frame(shifted);
    NormStats ss = zscore_fit(fs, 40);
    SeriesFrame zs = zscore_apply(fs, ss);
    for (std::size_t i = 0; i < vals.size(); ++i) {
        REQUIRE(std::fabs(zs.column("rate").values[i] - z.column("rate").values[i]) <= 1e-9);
    }

    NormStats empty;
    REQUIRE_THROWS_AS(zscore_apply(f, empty), SchemaError);
    REQUIRE_THROWS_AS(zscore_invert(vals, empty, "rate"), SchemaError);
}

TEST_CASE("make_windows counts and tiling") {
    SynthSpec spec;
    spec.rows = 100;
    spec.features = 3;
    spec.seed = 5;
    spec.planted_feature = 1;
    SeriesFrame f = synth_generate(spec);

    WindowSet ws = make_windows(f, {"f0", "f1", "f2"}, 32, 16);
    REQUIRE(ws.count() == 53); // N = T - L - H + 1

    SeriesFrame f48 = f.filtered("", f.timestamps()[47]);
    REQUIRE(f48.rows() == 48);
    WindowSet one = make_windows(f48, {"f0"}, 32, 16);
    REQUIRE(one.count() == 1);

    REQUIRE_THROWS_AS(make_windows(f48, {"f0"}, 40, 16), DataError);

    // brute-force tiling check: inputs[i][j][f] equals source row i+j
    for (std::size_t i = 0; i < ws.count(); i += 7) {
        for (std::size_t j = 0; j < 32; j += 5) {
            for (std::size_t k = 0; k < 3; ++k) {
                const auto& col = f.column(ws.feature_names[k]).values;
                REQUIRE(ws.inputs.at({i, j, k}) == col[i + j]);
            }
        }
        for (std::size_t h = 0; h < 16; h += 3) {
            REQUIRE(ws.targets.at({i, h}) == f.column("rate").values[i + 32 + h]);
        }
    }

    // window-count formula across random (T, L, H)
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t L = 2 + rng.below(20);
        const std::size_t H = 1 + rng.below(10);
        const std::size_t T = L + H + rng.below(40);
        SynthSpec sp;
        sp.rows = T;
        sp.features = 2;
        sp.seed = static_cast<std::uint64_t>(trial);
        SeriesFrame ff = synth_generate(sp);
        WindowSet w = make_windows(ff, {"f0", "f1"}, L, H);
        REQUIRE(w.count() == T - L - H + 1);
    }
}

TEST_CASE("make_folds blocks are contiguous, exhaustive, balanced") {
    FoldSplit fs = make_folds(10, 5);
    for (int f = 0; f < 5; ++f) {
        const auto idx = fs.fold_indices(f);
        REQUIRE(idx.size() == 2);
        REQUIRE(idx[0] == static_cast<std::size_t>(2 * f));
        REQUIRE(idx[1] == static_cast<std::size_t>(2 * f + 1));
    }

    FoldSplit fs11 = make_folds(11, 5);
    REQUIRE(fs11.fold_indices(0).size() == 3); // larger block first
    for (int f = 1; f < 5; ++f) REQUIRE(fs11.fold_indices(f).size() == 2);

    // union = all windows, pairwise disjoint, contiguous
    std::vector<int> seen(11, 0);
    int prev = 0;
    for (std::size_t i = 0; i < 11; ++i) {
        REQUIRE(fs11.assignment[i] >= prev);
        prev = fs11.assignment[i];
        seen[i]++;
    }
    for (int c : seen) REQUIRE(c == 1);

    REQUIRE_THROWS_AS(make_folds(4, 5), DataError);
}

TEST_CASE("no lookahead in the prefix pipeline") {
    SynthSpec spec;
    spec.rows = 60;
    spec.features = 2;
    spec.seed = 3;
    SeriesFrame f = synth_generate(spec);

    const std::size_t L = 8, H = 4, train_end = 30;
    NormStats stats = zscore_fit(f, train_end);
    SeriesFrame z = zscore_apply(f, stats);
    WindowSet ws = make_windows(z, {"f0", "f1"}, L, H);

    // windows whose first target row is at or after train_end are validation
    // material: every stats row (< train_end) precedes their first target row,
    // and inputs only touch rows < first target row by construction.
    for (std::size_t i = 0; i < ws.count(); ++i) {
        const std::size_t first_target = ws.window_starts[i] + L;
        const auto [lo, hi] = ws.covered_rows(i);
        REQUIRE(lo == ws.window_starts[i]);
        REQUIRE(hi == first_target + H);
        if (first_target >= train_end) {
            REQUIRE(train_end - 1 < first_target); // last stats row strictly before targets
        }
    }
}

TEST_CASE("synth_generate is deterministic and plants the documented signal") {
    SynthSpec spec;
    spec.rows = 200;
    spec.features = 4;
    spec.seed = 42;
    spec.planted_feature = 2;
    spec.noise_std = 0.0;

    SeriesFrame a = synth_generate(spec);
    SeriesFrame b = synth_generate(spec);
    for (std::size_t c = 0; c < a.cols(); ++c) {
        REQUIRE(a.columns()[c].values == b.columns()[c].values);
    }

    // zero noise: target is exactly the planted functional form
    const auto& planted = a.column("f2").values;
    const auto& target = a.column("rate").values;
    for (std::size_t t = 0; t < a.rows(); ++t) {
        const std::size_t src = t >= 1 ? t - 1 : 0;
        REQUIRE(target[t] == synth_target_fn(planted[src]));
    }

    SynthSpec bad = spec;
    bad.planted_feature = 99;
    REQUIRE_THROWS_AS(synth_generate(bad), ParameterError);
}

TEST_CASE("regressing target on the lagged planted feature explains it") {
    SynthSpec spec;
    spec.rows = 600;
    spec.features = 6;
    spec.seed = 11;
    spec.planted_feature = 3;
    spec.noise_std = 0.1;
    SeriesFrame f = synth_generate(spec);

    // closed-form least squares of y[t] on x[t-1] (with intercept)
    const auto& x = f.column("f3").values;
    const auto& y = f.column("rate").values;
    const std::size_t n = f.rows() - 1;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double xv = x[t], yv = y[t + 1];
        sx += xv;
        sy += yv;
        sxx += xv * xv;
        sxy += xv * yv;
        syy += yv * yv;
    }
    const double nd = static_cast<double>(n);
    const double cov = sxy - sx * sy / nd;
    const double varx = sxx - sx * sx / nd;
    const double vary = syy - sy * sy / nd;
    const double r2 = (cov * cov) / (varx * vary);
    REQUIRE(r2 > 0.9);
}

TEST_CASE("csv write/load round trip preserves values bit-exactly") {
    TmpDir tmp;
    SynthSpec spec;
    spec.rows = 50;
    spec.features = 3;
    spec.seed = 8;
    SeriesFrame f = synth_generate(spec);
    const auto path = tmp.file("round.csv");
    write_csv(f, path);
    SeriesFrame g = load_csv(path, synth_schema(3));
    REQUIRE(g.rows() == f.rows());
    for (std::size_t c = 0; c < f.cols(); ++c) {
        REQUIRE(g.columns()[c].values == f.columns()[c].values);
    }

    // writing twice is byte-identical
    const auto path2 = tmp.file("round2.csv");
    write_csv(f, path2);
    REQUIRE(testsupport::slurp(path) == testsupport::slurp(path2));
}

TEST_CASE("date column and range filter") {
    SynthSpec spec;
    spec.rows = 30;
    spec.features = 2;
    spec.seed = 1;
    SeriesFrame f = synth_generate(spec);
    SeriesFrame d = with_date_column(f);
    REQUIRE(d.has_column("date"));
    REQUIRE(d.column("date").values[0] == 0.0);
    REQUIRE(d.column("date").values[29] == 29.0);
    // idempotent
    REQUIRE(with_date_column(d).cols() == d.cols());

    SeriesFrame cut = f.filtered("2015-01-10", "2015-01-19");
    REQUIRE(cut.rows() == 10);
    REQUIRE(cut.timestamps().front() == "2015-01-10");
    REQUIRE(cut.timestamps().back() == "2015-01-19");
}

TEST_CASE("schema json round trip and reference schema") {
    Schema ref = reference_schema();
    REQUIRE(ref.target_name() == "rate");
    REQUIRE(ref.columns.size() == 34);
    REQUIRE(ref.find("um2") != nullptr);
    REQUIRE(ref.find("HS300")->frequency == Frequency::daily);
    REQUIRE(ref.find("trade")->frequency == Frequency::monthly);

    Schema rt = Schema::from_json(ref.to_json());
    REQUIRE(rt.columns.size() == ref.columns.size());
    for (std::size_t i = 0; i < rt.columns.size(); ++i) {
        REQUIRE(rt.columns[i].name == ref.columns[i].name);
        REQUIRE(rt.columns[i].frequency == ref.columns[i].frequency);
    }
}
