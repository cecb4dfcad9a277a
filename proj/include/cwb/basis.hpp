#pragma once

#include "cwb/dataio.hpp"
#include "cwb/types.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cwb {

enum class LearnerKind { linear, pspline, categorical, row_tensor };

const char* kind_name(LearnerKind kind);
LearnerKind parse_kind(const std::string& name);

// One additive term candidate. `site_specific` marks the row-wise tensor
// product of the one-hot site basis with the inner basis described by the
// remaining fields; the inner basis is then shared across all sites.
struct BaseLearnerSpec {
    int id = 0;
    LearnerKind kind = LearnerKind::linear;
    std::vector<std::string> features;  // linear: 0..k features, pspline/categorical: 1, row_tensor: 2
    int degree = 3;       // pspline / row_tensor margins
    int n_basis = 10;     // pspline / row_tensor margins
    int diff_order = 2;   // pspline / row_tensor margins
    std::optional<double> df_target;  // absent -> unpenalized (linear only)
    bool site_specific = false;

    bool operator==(const BaseLearnerSpec&) const = default;
};

// Data-derived basis inputs shared by host, sites, and the pooled oracle:
// global numeric ranges (knot bounds), global categorical level sets, and the
// ordered site roster labels.
struct FeatureMetadata {
    std::map<std::string, std::pair<double, double>> ranges;
    std::map<std::string, std::vector<std::string>> levels;
    std::vector<std::string> site_labels;

    int n_sites() const { return static_cast<int>(site_labels.size()); }
};

struct PenaltyMatrix {
    enum class Structure { zero, ridge, difference, kronecker_sum };
    Matrix entries;
    Structure structure = Structure::zero;
    int dim() const { return static_cast<int>(entries.rows()); }
};

// ------------------------------------------------------------ row builders

Matrix build_linear_basis(const Vector& column, bool include_intercept);
Matrix build_bspline_basis(const Vector& column, int degree, int n_basis, double lo, double hi);
Matrix build_categorical_basis(const std::vector<std::string>& column,
                               const std::vector<std::string>& levels);
Matrix build_row_tensor(const Matrix& left, const Matrix& right);

// ---------------------------------------------------------------- penalties

// (d - v) x d matrix of signed binomial coefficients of the v-th difference.
Matrix build_difference_matrix(int d, int v);

Matrix kronecker_product(const Matrix& a, const Matrix& b);

// Block-diagonal penalty of Eq-style site tensors: S blocks of
// lambda0*I_d + lambdal*Kl. K0 must be the S-dim identity.
PenaltyMatrix build_kronecker_sum_penalty(const Matrix& K0, double lambda0, const Matrix& Kl,
                                          double lambdal, int S, int d);

// ------------------------------------------------------------ spec helpers

// Dimension of the inner basis (without site augmentation).
int inner_dimension(const BaseLearnerSpec& spec, const FeatureMetadata& meta);
// Full design dimension; S * inner for site-specific specs.
int spec_dimension(const BaseLearnerSpec& spec, const FeatureMetadata& meta);

// Unscaled penalty of the inner basis: zero (linear without df target),
// identity (ridge), D^T D (pspline) or the Kronecker sum of the margins.
PenaltyMatrix unit_penalty(const BaseLearnerSpec& spec, const FeatureMetadata& meta);

// Design matrix of the inner basis over the dataset rows.
Matrix build_inner_design(const BaseLearnerSpec& spec, const Dataset& ds,
                          const FeatureMetadata& meta);
// Full design; site-specific specs get the one-hot site tensor (site-major).
Matrix build_design(const BaseLearnerSpec& spec, const Dataset& ds, const FeatureMetadata& meta);

// One-hot site indicator rows from the dataset's site column.
Matrix build_site_indicator(const Dataset& ds, const FeatureMetadata& meta);

// Global metadata from pooled data: per-feature min/max, sorted level sets,
// sorted site labels.
FeatureMetadata compute_feature_metadata(const Dataset& ds,
                                         const std::vector<BaseLearnerSpec>& specs);

void validate_specs(const std::vector<BaseLearnerSpec>& specs);

// The shared spec whose calibrated penalty a site-specific spec inherits:
// same kind, features, and basis hyperparameters. Returns nullptr if none.
const BaseLearnerSpec* shared_twin(const BaseLearnerSpec& site_spec,
                                   const std::vector<BaseLearnerSpec>& specs);

// ----------------------------------------------------------- auto spec sets

// Rules for deriving a spec list from the data schema: one learner per
// feature (pspline for numeric, one-hot ridge for categorical), optionally a
// site random intercept plus one site twin per feature. Features are walked
// in sorted name order so every party derives the identical list.
struct AutoSpecConfig {
    double df = 2.2;
    double df_site = 2.2;
    double df_intercept = 3.0;
    bool site_effects = true;
    int n_basis = 10;
    int degree = 3;
    int diff_order = 2;
};

// feature name -> (is_numeric, level count for categoricals)
using FeatureSchema = std::map<std::string, std::pair<bool, int>>;

std::vector<BaseLearnerSpec> build_auto_specs(const FeatureSchema& schema,
                                              const AutoSpecConfig& config);
FeatureSchema schema_from_dataset(const Dataset& ds);

// -------------------------------------------------------- canonical format

// Ordered array with the fixed field set:
// id, kind, features, degree, n_basis, diff_order, df_target, site_specific.
nlohmann::json specs_to_json(const std::vector<BaseLearnerSpec>& specs);
std::vector<BaseLearnerSpec> specs_from_json(const nlohmann::json& doc);

nlohmann::json metadata_to_json(const FeatureMetadata& meta);
FeatureMetadata metadata_from_json(const nlohmann::json& doc);

}  // namespace cwb
