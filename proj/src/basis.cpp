#include "cwb/basis.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace cwb {

using json = nlohmann::json;

const char* kind_name(LearnerKind kind) {
    switch (kind) {
        case LearnerKind::linear: return "linear";
        case LearnerKind::pspline: return "pspline";
        case LearnerKind::categorical: return "categorical";
        case LearnerKind::row_tensor: return "row_tensor";
    }
    return "unknown";
}

LearnerKind parse_kind(const std::string& name) {
    if (name == "linear") return LearnerKind::linear;
    if (name == "pspline") return LearnerKind::pspline;
    if (name == "categorical") return LearnerKind::categorical;
    if (name == "row_tensor") return LearnerKind::row_tensor;
    throw InputError("unknown base learner kind: " + name);
}

// ------------------------------------------------------------ row builders

Matrix build_linear_basis(const Vector& column, bool include_intercept) {
    for (Eigen::Index i = 0; i < column.size(); ++i) {
        if (!std::isfinite(column[i])) {
            throw InputError("non-finite value at row " + std::to_string(i));
        }
    }
    const Eigen::Index n = column.size();
    Matrix Z(n, include_intercept ? 2 : 1);
    if (include_intercept) {
        Z.col(0).setOnes();
        Z.col(1) = column;
    } else {
        Z.col(0) = column;
    }
    return Z;
}

namespace {

// Knot span index for x in [lo, hi]; x == hi falls into the last interval so
// the basis stays a partition of unity at the right boundary.
int find_span(double x, const std::vector<double>& knots, int degree, int n_basis) {
    if (x >= knots[static_cast<std::size_t>(n_basis)]) return n_basis - 1;
    int lo = degree;
    int hi = n_basis;
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        if (x < knots[static_cast<std::size_t>(mid)]) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return lo;
}

}  // namespace

Matrix build_bspline_basis(const Vector& column, int degree, int n_basis, double lo, double hi) {
    if (degree < 0) throw InputError("spline degree must be >= 0");
    if (n_basis < degree + 1) {
        throw InputError("need at least degree+1 basis functions, got " +
                         std::to_string(n_basis));
    }
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
        throw InputError("degenerate knot range [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "]");
    }
    const int n_seg = n_basis - degree;
    const double h = (hi - lo) / static_cast<double>(n_seg);
    // Equidistant knots with `degree` extensions on each side at the same
    // spacing; knots[degree] == lo, knots[n_basis] == hi.
    std::vector<double> knots(static_cast<std::size_t>(n_basis + degree + 1));
    for (int i = 0; i <= n_basis + degree; ++i) {
        knots[static_cast<std::size_t>(i)] = lo + static_cast<double>(i - degree) * h;
    }

    const Eigen::Index n = column.size();
    Matrix Z = Matrix::Zero(n, n_basis);
    std::vector<double> left(static_cast<std::size_t>(degree) + 1);
    std::vector<double> right(static_cast<std::size_t>(degree) + 1);
    std::vector<double> vals(static_cast<std::size_t>(degree) + 1);
    for (Eigen::Index r = 0; r < n; ++r) {
        double x = column[r];
        if (!std::isfinite(x)) {
            throw InputError("non-finite value at row " + std::to_string(r));
        }
        x = std::clamp(x, lo, hi);
        const int span = find_span(x, knots, degree, n_basis);
        vals[0] = 1.0;
        for (int j = 1; j <= degree; ++j) {
            left[static_cast<std::size_t>(j)] = x - knots[static_cast<std::size_t>(span + 1 - j)];
            right[static_cast<std::size_t>(j)] = knots[static_cast<std::size_t>(span + j)] - x;
            double saved = 0.0;
            for (int k = 0; k < j; ++k) {
                const double denom = right[static_cast<std::size_t>(k + 1)] +
                                     left[static_cast<std::size_t>(j - k)];
                const double temp = vals[static_cast<std::size_t>(k)] / denom;
                vals[static_cast<std::size_t>(k)] =
                    saved + right[static_cast<std::size_t>(k + 1)] * temp;
                saved = left[static_cast<std::size_t>(j - k)] * temp;
            }
            vals[static_cast<std::size_t>(j)] = saved;
        }
        for (int k = 0; k <= degree; ++k) {
            Z(r, span - degree + k) = vals[static_cast<std::size_t>(k)];
        }
    }
    return Z;
}

Matrix build_categorical_basis(const std::vector<std::string>& column,
                               const std::vector<std::string>& levels) {
    const int G = static_cast<int>(levels.size());
    if (G < 1) throw InputError("categorical basis needs at least one level");
    Matrix Z = Matrix::Zero(static_cast<Eigen::Index>(column.size()), G);
    for (std::size_t r = 0; r < column.size(); ++r) {
        const auto it = std::find(levels.begin(), levels.end(), column[r]);
        if (it == levels.end()) {
            throw InputError("level '" + column[r] + "' at row " + std::to_string(r) +
                             " is not in the global level set");
        }
        Z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(it - levels.begin())) = 1.0;
    }
    return Z;
}

Matrix build_row_tensor(const Matrix& left, const Matrix& right) {
    if (left.rows() != right.rows()) {
        throw InputError("row tensor: row counts differ (" + std::to_string(left.rows()) +
                         " vs " + std::to_string(right.rows()) + ")");
    }
    const Eigen::Index n = left.rows();
    const Eigen::Index dj = left.cols();
    const Eigen::Index dk = right.cols();
    Matrix Z(n, dj * dk);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index j = 0; j < dj; ++j) {
            Z.row(r).segment(j * dk, dk) = left(r, j) * right.row(r);
        }
    }
    return Z;
}

// ---------------------------------------------------------------- penalties

Matrix build_difference_matrix(int d, int v) {
    if (v < 1 || v >= d) {
        throw InputError("difference order " + std::to_string(v) +
                         " must satisfy 1 <= v < " + std::to_string(d));
    }
    Matrix D = Matrix::Zero(d - v, d);
    // Signed binomial coefficients of the v-th forward difference.
    std::vector<double> coef(static_cast<std::size_t>(v) + 1);
    for (int j = 0; j <= v; ++j) {
        double c = 1.0;
        for (int k = 0; k < j; ++k) c = c * static_cast<double>(v - k) / static_cast<double>(k + 1);
        coef[static_cast<std::size_t>(j)] = (((v - j) % 2) ? -1.0 : 1.0) * c;
    }
    for (int r = 0; r < d - v; ++r) {
        for (int j = 0; j <= v; ++j) {
            D(r, r + j) = coef[static_cast<std::size_t>(j)];
        }
    }
    return D;
}

Matrix kronecker_product(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

PenaltyMatrix build_kronecker_sum_penalty(const Matrix& K0, double lambda0, const Matrix& Kl,
                                          double lambdal, int S, int d) {
    if (K0.rows() != S || K0.cols() != S || !K0.isIdentity(0.0)) {
        throw InputError("site penalty K0 must be the S-dimensional identity");
    }
    if (Kl.rows() != d || Kl.cols() != d) {
        throw InputError("inner penalty dimension mismatch: expected " + std::to_string(d) +
                         ", got " + std::to_string(Kl.rows()));
    }
    PenaltyMatrix K;
    K.structure = PenaltyMatrix::Structure::kronecker_sum;
    K.entries = Matrix::Zero(static_cast<Eigen::Index>(S) * d, static_cast<Eigen::Index>(S) * d);
    const Matrix block = lambda0 * Matrix::Identity(d, d) + lambdal * Kl;
    for (int s = 0; s < S; ++s) {
        K.entries.block(static_cast<Eigen::Index>(s) * d, static_cast<Eigen::Index>(s) * d, d, d) =
            block;
    }
    return K;
}

// ------------------------------------------------------------ spec helpers

namespace {

const std::pair<double, double>& feature_range(const FeatureMetadata& meta,
                                               const std::string& name) {
    const auto it = meta.ranges.find(name);
    if (it == meta.ranges.end()) {
        throw InputError("no global range for feature " + name);
    }
    return it->second;
}

const std::vector<std::string>& feature_levels(const FeatureMetadata& meta,
                                               const std::string& name) {
    const auto it = meta.levels.find(name);
    if (it == meta.levels.end()) {
        throw InputError("no global level set for feature " + name);
    }
    return it->second;
}

const Vector numeric_column(const Dataset& ds, const std::string& name) {
    const Column& c = ds.col(name);
    if (c.type != ColumnType::numeric) {
        throw InputError("feature " + name + " is not numeric");
    }
    Vector v(static_cast<Eigen::Index>(c.num.size()));
    for (std::size_t i = 0; i < c.num.size(); ++i) {
        if (c.missing[i]) {
            throw InputError("missing value in feature " + name + " at row " + std::to_string(i));
        }
        v[static_cast<Eigen::Index>(i)] = c.num[i];
    }
    return v;
}

}  // namespace

int inner_dimension(const BaseLearnerSpec& spec, const FeatureMetadata& meta) {
    switch (spec.kind) {
        case LearnerKind::linear:
            return 1 + static_cast<int>(spec.features.size());
        case LearnerKind::pspline:
            return spec.n_basis;
        case LearnerKind::categorical:
            return static_cast<int>(feature_levels(meta, spec.features.at(0)).size());
        case LearnerKind::row_tensor:
            return spec.n_basis * spec.n_basis;
    }
    throw InputError("unreachable");
}

int spec_dimension(const BaseLearnerSpec& spec, const FeatureMetadata& meta) {
    const int d = inner_dimension(spec, meta);
    return spec.site_specific ? meta.n_sites() * d : d;
}

PenaltyMatrix unit_penalty(const BaseLearnerSpec& spec, const FeatureMetadata& meta) {
    PenaltyMatrix K;
    const int d = inner_dimension(spec, meta);
    switch (spec.kind) {
        case LearnerKind::linear:
            if (spec.df_target) {
                K.structure = PenaltyMatrix::Structure::ridge;
                K.entries = Matrix::Identity(d, d);
            } else {
                K.structure = PenaltyMatrix::Structure::zero;
                K.entries = Matrix::Zero(d, d);
            }
            return K;
        case LearnerKind::categorical:
            K.structure = PenaltyMatrix::Structure::ridge;
            K.entries = Matrix::Identity(d, d);
            return K;
        case LearnerKind::pspline: {
            const Matrix D = build_difference_matrix(spec.n_basis, spec.diff_order);
            K.structure = PenaltyMatrix::Structure::difference;
            K.entries = D.transpose() * D;
            return K;
        }
        case LearnerKind::row_tensor: {
            // Isotropic Kronecker-sum of the two identical margins.
            const Matrix D = build_difference_matrix(spec.n_basis, spec.diff_order);
            const Matrix Km = D.transpose() * D;
            const Matrix I = Matrix::Identity(spec.n_basis, spec.n_basis);
            K.structure = PenaltyMatrix::Structure::kronecker_sum;
            K.entries = kronecker_product(Km, I) + kronecker_product(I, Km);
            return K;
        }
    }
    throw InputError("unreachable");
}

Matrix build_inner_design(const BaseLearnerSpec& spec, const Dataset& ds,
                          const FeatureMetadata& meta) {
    switch (spec.kind) {
        case LearnerKind::linear: {
            const Eigen::Index n = static_cast<Eigen::Index>(ds.n_rows());
            Matrix Z(n, 1 + static_cast<Eigen::Index>(spec.features.size()));
            Z.col(0).setOnes();
            for (std::size_t j = 0; j < spec.features.size(); ++j) {
                Z.col(static_cast<Eigen::Index>(j + 1)) = numeric_column(ds, spec.features[j]);
            }
            return Z;
        }
        case LearnerKind::pspline: {
            const auto& range = feature_range(meta, spec.features.at(0));
            return build_bspline_basis(numeric_column(ds, spec.features.at(0)), spec.degree,
                                       spec.n_basis, range.first, range.second);
        }
        case LearnerKind::categorical: {
            const Column& c = ds.col(spec.features.at(0));
            if (c.type != ColumnType::categorical) {
                throw InputError("feature " + spec.features.at(0) + " is not categorical");
            }
            return build_categorical_basis(c.cat, feature_levels(meta, spec.features.at(0)));
        }
        case LearnerKind::row_tensor: {
            if (spec.features.size() != 2) {
                throw InputError("row_tensor spec needs exactly two features");
            }
            const auto& ra = feature_range(meta, spec.features[0]);
            const auto& rb = feature_range(meta, spec.features[1]);
            const Matrix left = build_bspline_basis(numeric_column(ds, spec.features[0]),
                                                    spec.degree, spec.n_basis, ra.first, ra.second);
            const Matrix right = build_bspline_basis(numeric_column(ds, spec.features[1]),
                                                     spec.degree, spec.n_basis, rb.first, rb.second);
            return build_row_tensor(left, right);
        }
    }
    throw InputError("unreachable");
}

Matrix build_site_indicator(const Dataset& ds, const FeatureMetadata& meta) {
    if (ds.site_column.empty()) {
        throw InputError("site-specific base learner requires a site column");
    }
    const Column& c = ds.col(ds.site_column);
    return build_categorical_basis(c.cat, meta.site_labels);
}

Matrix build_design(const BaseLearnerSpec& spec, const Dataset& ds, const FeatureMetadata& meta) {
    Matrix inner = build_inner_design(spec, ds, meta);
    if (!spec.site_specific) return inner;
    return build_row_tensor(build_site_indicator(ds, meta), inner);
}

FeatureMetadata compute_feature_metadata(const Dataset& ds,
                                         const std::vector<BaseLearnerSpec>& specs) {
    FeatureMetadata meta;
    bool any_site = false;
    for (const auto& spec : specs) {
        any_site = any_site || spec.site_specific;
        for (const auto& f : spec.features) {
            const Column& c = ds.col(f);
            if (c.type == ColumnType::numeric) {
                if (meta.ranges.count(f)) continue;
                double lo = std::numeric_limits<double>::infinity();
                double hi = -lo;
                for (std::size_t r = 0; r < c.num.size(); ++r) {
                    if (c.missing[r]) continue;
                    lo = std::min(lo, c.num[r]);
                    hi = std::max(hi, c.num[r]);
                }
                if (!(lo < hi)) {
                    throw InputError("feature " + f + " has degenerate range");
                }
                meta.ranges.emplace(f, std::make_pair(lo, hi));
            } else {
                if (meta.levels.count(f)) continue;
                std::set<std::string> distinct;
                for (std::size_t r = 0; r < c.cat.size(); ++r) {
                    if (!c.missing[r]) distinct.insert(c.cat[r]);
                }
                meta.levels.emplace(f, std::vector<std::string>(distinct.begin(), distinct.end()));
            }
        }
    }
    if (any_site) {
        if (ds.site_column.empty()) {
            throw InputError("site-specific base learners require a site column");
        }
        const Column& c = ds.col(ds.site_column);
        std::set<std::string> distinct(c.cat.begin(), c.cat.end());
        meta.site_labels.assign(distinct.begin(), distinct.end());
    }
    return meta;
}

void validate_specs(const std::vector<BaseLearnerSpec>& specs) {
    if (specs.empty()) throw InputError("spec list is empty");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& s = specs[i];
        if (s.id != static_cast<int>(i)) {
            throw InputError("spec ids must be dense and ordered: position " + std::to_string(i) +
                             " holds id " + std::to_string(s.id));
        }
        if (s.df_target && !(*s.df_target > 0.0)) {
            throw InputError("df_target must be positive for spec " + std::to_string(s.id));
        }
        switch (s.kind) {
            case LearnerKind::linear:
                break;
            case LearnerKind::pspline:
                if (s.features.size() != 1) {
                    throw InputError("pspline spec " + std::to_string(s.id) +
                                     " needs exactly one feature");
                }
                if (s.n_basis < s.degree + 1) {
                    throw InputError("pspline spec " + std::to_string(s.id) +
                                     ": n_basis must be at least degree+1");
                }
                if (s.diff_order < 1 || s.diff_order >= s.n_basis) {
                    throw InputError("pspline spec " + std::to_string(s.id) +
                                     ": need 1 <= diff_order < n_basis");
                }
                break;
            case LearnerKind::categorical:
                if (s.features.size() != 1) {
                    throw InputError("categorical spec " + std::to_string(s.id) +
                                     " needs exactly one feature");
                }
                break;
            case LearnerKind::row_tensor:
                if (s.features.size() != 2) {
                    throw InputError("row_tensor spec " + std::to_string(s.id) +
                                     " needs exactly two features");
                }
                if (s.n_basis < s.degree + 1 || s.diff_order < 1 || s.diff_order >= s.n_basis) {
                    throw InputError("row_tensor spec " + std::to_string(s.id) +
                                     ": invalid margin hyperparameters");
                }
                break;
        }
    }
}

const BaseLearnerSpec* shared_twin(const BaseLearnerSpec& site_spec,
                                   const std::vector<BaseLearnerSpec>& specs) {
    if (!site_spec.site_specific) return nullptr;
    for (const auto& s : specs) {
        if (s.site_specific || s.kind != site_spec.kind || s.features != site_spec.features) {
            continue;
        }
        const bool splined =
            site_spec.kind == LearnerKind::pspline || site_spec.kind == LearnerKind::row_tensor;
        if (splined && (s.degree != site_spec.degree || s.n_basis != site_spec.n_basis ||
                        s.diff_order != site_spec.diff_order)) {
            continue;
        }
        return &s;
    }
    return nullptr;
}

// ----------------------------------------------------------- auto spec sets

std::vector<BaseLearnerSpec> build_auto_specs(const FeatureSchema& schema,
                                              const AutoSpecConfig& config) {
    std::vector<BaseLearnerSpec> specs;
    int id = 0;
    auto shared_for = [&](const std::string& name, bool numeric, int levels) {
        BaseLearnerSpec s;
        s.id = id++;
        s.features = {name};
        if (numeric) {
            s.kind = LearnerKind::pspline;
            s.degree = config.degree;
            s.n_basis = config.n_basis;
            s.diff_order = config.diff_order;
            s.df_target = config.df;
        } else {
            s.kind = LearnerKind::categorical;
            s.df_target = std::min(config.df, static_cast<double>(levels));
        }
        return s;
    };
    for (const auto& [name, info] : schema) {
        specs.push_back(shared_for(name, info.first, info.second));
    }
    if (config.site_effects) {
        BaseLearnerSpec intercept;
        intercept.id = id++;
        intercept.kind = LearnerKind::linear;
        intercept.features = {};
        intercept.df_target = config.df_intercept;
        intercept.site_specific = true;
        specs.push_back(intercept);
        for (const auto& [name, info] : schema) {
            BaseLearnerSpec twin = shared_for(name, info.first, info.second);
            twin.site_specific = true;
            twin.df_target = info.first
                                 ? config.df_site
                                 : std::min(config.df_site, static_cast<double>(info.second));
            specs.push_back(twin);
        }
    }
    validate_specs(specs);
    return specs;
}

FeatureSchema schema_from_dataset(const Dataset& ds) {
    FeatureSchema schema;
    for (const auto& col : ds.columns) {
        if (col.name == ds.response || col.name == ds.site_column) continue;
        int levels = 0;
        if (col.type == ColumnType::categorical) {
            std::set<std::string> distinct;
            for (std::size_t r = 0; r < col.cat.size(); ++r) {
                if (!col.missing[r]) distinct.insert(col.cat[r]);
            }
            levels = static_cast<int>(distinct.size());
        }
        schema.emplace(col.name, std::make_pair(col.type == ColumnType::numeric, levels));
    }
    return schema;
}

// -------------------------------------------------------- canonical format

json specs_to_json(const std::vector<BaseLearnerSpec>& specs) {
    json arr = json::array();
    for (const auto& s : specs) {
        json j;
        j["id"] = s.id;
        j["kind"] = kind_name(s.kind);
        j["features"] = s.features;
        const bool splined = s.kind == LearnerKind::pspline || s.kind == LearnerKind::row_tensor;
        j["degree"] = splined ? json(s.degree) : json(nullptr);
        j["n_basis"] = splined ? json(s.n_basis) : json(nullptr);
        j["diff_order"] = splined ? json(s.diff_order) : json(nullptr);
        j["df_target"] = s.df_target ? json(*s.df_target) : json(nullptr);
        j["site_specific"] = s.site_specific;
        arr.push_back(std::move(j));
    }
    return arr;
}

std::vector<BaseLearnerSpec> specs_from_json(const json& doc) {
    if (!doc.is_array()) throw InputError("spec list must be a JSON array");
    std::vector<BaseLearnerSpec> specs;
    for (const auto& j : doc) {
        BaseLearnerSpec s;
        s.id = j.at("id").get<int>();
        s.kind = parse_kind(j.at("kind").get<std::string>());
        s.features = j.at("features").get<std::vector<std::string>>();
        if (j.contains("degree") && !j["degree"].is_null()) s.degree = j["degree"].get<int>();
        if (j.contains("n_basis") && !j["n_basis"].is_null()) s.n_basis = j["n_basis"].get<int>();
        if (j.contains("diff_order") && !j["diff_order"].is_null()) {
            s.diff_order = j["diff_order"].get<int>();
        }
        if (j.contains("df_target") && !j["df_target"].is_null()) {
            s.df_target = j["df_target"].get<double>();
        }
        s.site_specific = j.at("site_specific").get<bool>();
        specs.push_back(std::move(s));
    }
    validate_specs(specs);
    return specs;
}

json metadata_to_json(const FeatureMetadata& meta) {
    json j;
    json ranges = json::object();
    for (const auto& [name, r] : meta.ranges) ranges[name] = json::array({r.first, r.second});
    json levels = json::object();
    for (const auto& [name, ls] : meta.levels) levels[name] = ls;
    j["ranges"] = std::move(ranges);
    j["levels"] = std::move(levels);
    j["site_labels"] = meta.site_labels;
    return j;
}

FeatureMetadata metadata_from_json(const json& doc) {
    FeatureMetadata meta;
    for (const auto& [name, r] : doc.at("ranges").items()) {
        meta.ranges.emplace(name, std::make_pair(r.at(0).get<double>(), r.at(1).get<double>()));
    }
    for (const auto& [name, ls] : doc.at("levels").items()) {
        meta.levels.emplace(name, ls.get<std::vector<std::string>>());
    }
    meta.site_labels = doc.at("site_labels").get<std::vector<std::string>>();
    return meta;
}

}  // namespace cwb
