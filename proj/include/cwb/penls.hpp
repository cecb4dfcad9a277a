#pragma once

#include "cwb/basis.hpp"
#include "cwb/types.hpp"

#include <memory>
#include <shared_mutex>
#include <unordered_map>

namespace cwb {

// Which trace defines effective degrees of freedom. trace_s is
// trace((Z'Z + lambda K)^{-1} Z'Z); trace_2s_minus_ss is the
// trace(2S - S'S) convention of the hat matrix S.
enum class DfDefinition { trace_s, trace_2s_minus_ss };

const char* df_definition_name(DfDefinition def);
DfDefinition parse_df_definition(const std::string& name);

struct PenalizedFit {
    Vector coefficients;
    int spec_id = -1;
    bool factor_reused = false;
};

// Cholesky factors keyed by spec id. Single-writer during initialization,
// concurrent reads afterwards.
class FactorCache {
public:
    const Eigen::LLT<Matrix>* find(int spec_id) const;
    const Eigen::LLT<Matrix>& insert(int spec_id, Eigen::LLT<Matrix> llt);
    void clear();

private:
    mutable std::shared_mutex mutex_;
    std::unordered_map<int, std::unique_ptr<Eigen::LLT<Matrix>>> factors_;
};

// Solves (gram_sum + K + jitter*I) theta = score by symmetric factorization.
// With a cache, the factor for spec_id is computed once and reused.
PenalizedFit solve_penalized(const Matrix& gram_sum, const Matrix& K, const Vector& score,
                             int spec_id, FactorCache* cache = nullptr, double jitter = 0.0);

// trace of the penalized hat matrix (definition selected by `def`).
double effective_df(const Matrix& gram_sum, const Matrix& K,
                    DfDefinition def = DfDefinition::trace_s);

// lambda with effective_df(gram_sum, lambda*K_unit) == df_target to 1e-6,
// bisected on log lambda over [1e-10, 1e10]. A target at the unpenalized
// supremum returns the lower bound.
double calibrate_lambda(const Matrix& gram_sum, const Matrix& K_unit, double df_target,
                        DfDefinition def = DfDefinition::trace_s);

// lambda0 with S * effective_df(avg_gram, lambda0*I + K_inner) == df_target:
// the degrees of freedom of a site-tensor block system built from S copies of
// the averaged per-site Gram.
double calibrate_lambda0_block(const Matrix& avg_gram, const Matrix& K_inner, int n_sites,
                               double df_target, DfDefinition def = DfDefinition::trace_s);

}  // namespace cwb
