#include "cwb/heartgen.hpp"

#include <algorithm>
#include <cmath>

namespace cwb {

namespace {

struct SiteProfile {
    const char* name;
    int clean_rows;
    int dirty_rows;         // rows dropped by complete-case cleaning
    double base_logit;      // site intercept of the generating model
    double oldpeak_slope;   // site deviation of the oldpeak effect
    double missing_aux;     // missingness rate in slope/ca/thal
};

// Intercepts roughly follow the observed disease prevalences of the real
// sites; the oldpeak deviations create the heterogeneity a site-specific
// smooth is meant to pick up.
constexpr SiteProfile kProfiles[] = {
    {"cleveland", 303, 7, -0.16, 0.25, 0.05},
    {"hungarian", 292, 9, -0.57, -0.45, 0.25},
    {"switzerland", 116, 5, 2.75, 0.10, 0.45},
    {"va", 140, 6, 1.05, 0.00, 0.35},
};

double clipd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

}  // namespace

std::vector<HeartSite> generate_heart_sites(std::uint64_t seed) {
    std::vector<HeartSite> sites;
    for (std::size_t p = 0; p < 4; ++p) {
        const SiteProfile& profile = kProfiles[p];
        SplitMix64 rng(seed + 1000 * (p + 1));
        const int n = profile.clean_rows + profile.dirty_rows;

        Dataset raw;
        raw.response = "num";
        raw.columns.reserve(14);  // keeps the column references below stable
        auto add_numeric = [&](const char* name) -> Column& {
            Column c;
            c.name = name;
            c.type = ColumnType::numeric;
            c.num.resize(static_cast<std::size_t>(n));
            c.missing.assign(static_cast<std::size_t>(n), 0);
            raw.columns.push_back(std::move(c));
            return raw.columns.back();
        };
        Column& age = add_numeric("age");
        Column& sex = add_numeric("sex");
        Column& cp = add_numeric("cp");
        Column& trestbps = add_numeric("trestbps");
        Column& chol = add_numeric("chol");
        Column& fbs = add_numeric("fbs");
        Column& restecg = add_numeric("restecg");
        Column& thalach = add_numeric("thalach");
        Column& exang = add_numeric("exang");
        Column& oldpeak = add_numeric("oldpeak");
        Column& slope = add_numeric("slope");
        Column& ca = add_numeric("ca");
        Column& thal = add_numeric("thal");
        Column& num = add_numeric("num");

        for (int i = 0; i < n; ++i) {
            const std::size_t r = static_cast<std::size_t>(i);
            age.num[r] = std::round(clipd(54.0 + 9.0 * rng.normal(), 29.0, 77.0));
            sex.num[r] = rng.uniform01() < 0.68 ? 1.0 : 0.0;
            const double cp_draw = rng.uniform01();
            cp.num[r] = cp_draw < 0.08 ? 1.0 : (cp_draw < 0.25 ? 2.0 : (cp_draw < 0.54 ? 3.0 : 4.0));
            trestbps.num[r] = std::round(clipd(131.0 + 17.0 * rng.normal(), 94.0, 200.0));
            chol.num[r] = std::round(clipd(246.0 + 51.0 * rng.normal(), 120.0, 564.0));
            fbs.num[r] = rng.uniform01() < 0.15 ? 1.0 : 0.0;
            restecg.num[r] = static_cast<double>(rng.bounded(3));
            thalach.num[r] = std::round(clipd(149.0 + 23.0 * rng.normal(), 71.0, 202.0));
            exang.num[r] = rng.uniform01() < 0.33 ? 1.0 : 0.0;
            oldpeak.num[r] = std::round(clipd(1.05 + 1.1 * rng.normal(), 0.0, 6.2) * 10.0) / 10.0;
            slope.num[r] = static_cast<double>(1 + rng.bounded(3));
            ca.num[r] = static_cast<double>(rng.bounded(4));
            thal.num[r] = rng.uniform01() < 0.55 ? 3.0 : (rng.uniform01() < 0.5 ? 6.0 : 7.0);

            // generating model: oldpeak dominates, with a site-specific slope
            const double f = profile.base_logit +
                             (0.95 + profile.oldpeak_slope) * (oldpeak.num[r] - 1.0) +
                             (cp.num[r] == 4.0 ? 0.9 : (cp.num[r] == 3.0 ? 0.15 : -0.35)) +
                             0.55 * sex.num[r] + 0.6 * exang.num[r] -
                             0.018 * (thalach.num[r] - 149.0) + 0.012 * (age.num[r] - 54.0);
            const double prob = 1.0 / (1.0 + std::exp(-f));
            const bool disease = rng.uniform01() < prob;
            num.num[r] = disease ? static_cast<double>(1 + rng.bounded(4)) : 0.0;

            // auxiliary columns lose values at site-specific rates
            if (rng.uniform01() < profile.missing_aux) slope.missing[r] = 1;
            if (rng.uniform01() < profile.missing_aux) ca.missing[r] = 1;
            if (rng.uniform01() < profile.missing_aux) thal.missing[r] = 1;
        }
        // the dirty tail loses one retained covariate per row
        for (int i = profile.clean_rows; i < n; ++i) {
            const std::size_t r = static_cast<std::size_t>(i);
            switch (rng.bounded(3)) {
                case 0: chol.missing[r] = 1; break;
                case 1: trestbps.missing[r] = 1; break;
                default: oldpeak.missing[r] = 1; break;
            }
        }

        sites.push_back({profile.name, std::move(raw)});
    }
    return sites;
}

Dataset generate_heart_pooled(std::uint64_t seed) {
    auto sites = generate_heart_sites(seed);
    std::vector<Dataset> tagged;
    for (auto& site : sites) {
        Dataset d = std::move(site.raw);
        Column tag;
        tag.name = "site";
        tag.type = ColumnType::categorical;
        tag.cat.assign(d.n_rows(), site.name);
        tag.missing.assign(d.n_rows(), 0);
        d.columns.push_back(std::move(tag));
        d.site_column = "site";
        tagged.push_back(std::move(d));
    }
    return Dataset::concat(tagged);
}

}  // namespace cwb
