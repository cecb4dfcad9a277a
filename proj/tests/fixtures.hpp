// Deterministic synthetic datasets and spec sets shared by the unit and
// acceptance suites.
#pragma once

#include <string>
#include <vector>

#include "cwb/basis.hpp"
#include "cwb/dataio.hpp"
#include "cwb/loss.hpp"

namespace fixtures {

// Pooled dataset with `n` rows: numeric features x1..x{p_num}, categorical
// g1..g{p_cat} (3 levels), a site column with S balanced sites, and a
// response driven by a smooth effect, a categorical shift, and per-site
// intercept deviations.
inline cwb::Dataset synthetic(cwb::LossFamily family, int n, int p_num, int p_cat, int S,
                              std::uint64_t seed) {
    cwb::SplitMix64 rng(seed);
    cwb::Dataset ds;
    ds.response = "y";
    ds.site_column = "site";

    std::vector<cwb::Column> numeric;
    for (int j = 0; j < p_num; ++j) {
        cwb::Column c;
        c.name = "x" + std::to_string(j + 1);
        c.type = cwb::ColumnType::numeric;
        for (int i = 0; i < n; ++i) {
            c.num.push_back(4.0 * rng.uniform01() - 2.0);
            c.missing.push_back(0);
        }
        numeric.push_back(std::move(c));
    }
    const std::vector<std::string> levels{"a", "b", "c"};
    std::vector<cwb::Column> categorical;
    for (int j = 0; j < p_cat; ++j) {
        cwb::Column c;
        c.name = "g" + std::to_string(j + 1);
        c.type = cwb::ColumnType::categorical;
        for (int i = 0; i < n; ++i) {
            c.cat.push_back(levels[rng.bounded(3)]);
            c.missing.push_back(0);
        }
        categorical.push_back(std::move(c));
    }
    cwb::Column site;
    site.name = "site";
    site.type = cwb::ColumnType::categorical;
    for (int i = 0; i < n; ++i) {
        site.cat.push_back(std::to_string(1 + (i % S)));
        site.missing.push_back(0);
    }

    std::vector<double> site_shift(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s) site_shift[static_cast<std::size_t>(s)] = 0.8 * rng.normal();

    cwb::Column y;
    y.name = "y";
    y.type = cwb::ColumnType::numeric;
    for (int i = 0; i < n; ++i) {
        double f = 0.3;
        if (p_num > 0) {
            const double x = numeric[0].num[static_cast<std::size_t>(i)];
            f += std::sin(1.3 * x) + 0.4 * x;
        }
        if (p_num > 1) f += 0.5 * numeric[1].num[static_cast<std::size_t>(i)];
        if (p_cat > 0) {
            const std::string& g = categorical[0].cat[static_cast<std::size_t>(i)];
            f += g == "a" ? -0.6 : (g == "b" ? 0.2 : 0.7);
        }
        f += site_shift[static_cast<std::size_t>(i % S)];
        if (family == cwb::LossFamily::gaussian_l2) {
            y.num.push_back(f + 0.3 * rng.normal());
        } else {
            const double p = 1.0 / (1.0 + std::exp(-f));
            y.num.push_back(rng.uniform01() < p ? 1.0 : 0.0);
        }
        y.missing.push_back(0);
    }

    ds.columns.push_back(std::move(y));
    for (auto& c : numeric) ds.columns.push_back(std::move(c));
    for (auto& c : categorical) ds.columns.push_back(std::move(c));
    ds.columns.push_back(std::move(site));
    return ds;
}

inline cwb::BaseLearnerSpec make_spec(int id, cwb::LearnerKind kind,
                                      std::vector<std::string> features, double df,
                                      bool site_specific = false, int n_basis = 8,
                                      int degree = 3, int diff_order = 2) {
    cwb::BaseLearnerSpec s;
    s.id = id;
    s.kind = kind;
    s.features = std::move(features);
    if (df > 0.0) s.df_target = df;
    s.site_specific = site_specific;
    s.n_basis = n_basis;
    s.degree = degree;
    s.diff_order = diff_order;
    return s;
}

// Dense learner set: psplines and categoricals plus their site twins and a
// site random intercept.
inline std::vector<cwb::BaseLearnerSpec> dense_specs(int p_num, int p_cat) {
    std::vector<cwb::BaseLearnerSpec> specs;
    int id = 0;
    for (int j = 0; j < p_num; ++j) {
        specs.push_back(make_spec(id++, cwb::LearnerKind::pspline, {"x" + std::to_string(j + 1)}, 2.2));
    }
    for (int j = 0; j < p_cat; ++j) {
        specs.push_back(
            make_spec(id++, cwb::LearnerKind::categorical, {"g" + std::to_string(j + 1)}, 2.2));
    }
    specs.push_back(make_spec(id++, cwb::LearnerKind::linear, {}, 0.9, true));  // random intercept
    for (int j = 0; j < p_num; ++j) {
        specs.push_back(
            make_spec(id++, cwb::LearnerKind::pspline, {"x" + std::to_string(j + 1)}, 2.2, true));
    }
    for (int j = 0; j < p_cat; ++j) {
        specs.push_back(make_spec(id++, cwb::LearnerKind::categorical,
                                  {"g" + std::to_string(j + 1)}, 2.2, true));
    }
    return specs;
}

// Sparse learner set: one linear learner over the numeric features and the
// site random intercept.
inline std::vector<cwb::BaseLearnerSpec> sparse_specs(int p_num) {
    std::vector<cwb::BaseLearnerSpec> specs;
    std::vector<std::string> feats;
    for (int j = 0; j < p_num; ++j) feats.push_back("x" + std::to_string(j + 1));
    specs.push_back(make_spec(0, cwb::LearnerKind::linear, feats, 0.0));
    specs.push_back(make_spec(1, cwb::LearnerKind::linear, {}, 0.9, true));
    return specs;
}

}  // namespace fixtures
