#include "cwb/penls.hpp"

#include <cmath>
#include <functional>
#include <mutex>

namespace cwb {

const char* df_definition_name(DfDefinition def) {
    return def == DfDefinition::trace_s ? "trace_s" : "trace_2s_minus_ss";
}

DfDefinition parse_df_definition(const std::string& name) {
    if (name == "trace_s") return DfDefinition::trace_s;
    if (name == "trace_2s_minus_ss") return DfDefinition::trace_2s_minus_ss;
    throw InputError("unknown df definition: " + name);
}

const Eigen::LLT<Matrix>* FactorCache::find(int spec_id) const {
    std::shared_lock lock(mutex_);
    const auto it = factors_.find(spec_id);
    return it == factors_.end() ? nullptr : it->second.get();
}

const Eigen::LLT<Matrix>& FactorCache::insert(int spec_id, Eigen::LLT<Matrix> llt) {
    std::unique_lock lock(mutex_);
    auto& slot = factors_[spec_id];
    slot = std::make_unique<Eigen::LLT<Matrix>>(std::move(llt));
    return *slot;
}

void FactorCache::clear() {
    std::unique_lock lock(mutex_);
    factors_.clear();
}

namespace {

Eigen::LLT<Matrix> factorize(const Matrix& gram_sum, const Matrix& K, int spec_id,
                             double jitter) {
    Matrix system = gram_sum + K;
    if (jitter != 0.0) system.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(system);
    if (llt.info() != Eigen::Success) {
        throw SingularSystemError(spec_id);
    }
    return llt;
}

}  // namespace

PenalizedFit solve_penalized(const Matrix& gram_sum, const Matrix& K, const Vector& score,
                             int spec_id, FactorCache* cache, double jitter) {
    if (gram_sum.rows() != gram_sum.cols() || K.rows() != gram_sum.rows() ||
        K.cols() != gram_sum.cols() || score.size() != gram_sum.rows()) {
        throw InputError("solve_penalized: dimension mismatch for spec " + std::to_string(spec_id));
    }
    PenalizedFit fit;
    fit.spec_id = spec_id;
    if (cache) {
        if (const auto* llt = cache->find(spec_id)) {
            fit.factor_reused = true;
            fit.coefficients = llt->solve(score);
            return fit;
        }
        const auto& llt = cache->insert(spec_id, factorize(gram_sum, K, spec_id, jitter));
        fit.coefficients = llt.solve(score);
        return fit;
    }
    fit.coefficients = factorize(gram_sum, K, spec_id, jitter).solve(score);
    return fit;
}

double effective_df(const Matrix& gram_sum, const Matrix& K, DfDefinition def) {
    Eigen::LLT<Matrix> llt(Matrix(gram_sum + K));
    if (llt.info() != Eigen::Success) {
        throw SingularSystemError(-1);
    }
    const Matrix M = llt.solve(gram_sum);  // (G+K)^{-1} G
    const double tr = M.trace();
    if (def == DfDefinition::trace_s) {
        return tr;
    }
    // trace(2H - H'H) with hat matrix H = Z (G+K)^{-1} Z'; by the cyclic
    // property trace(H'H) = trace(M M).
    return 2.0 * tr - (M * M).trace();
}

namespace {

// Bisection on log-lambda for a continuous decreasing df function. Runs the
// bracket down to machine width so both fitting paths land on the same root.
double bisect_decreasing(const std::function<double(double)>& df_of_lambda, double df_target) {
    const double lambda_lo = 1e-10;
    const double lambda_hi = 1e10;
    const double df_tol = 1e-6;

    const double df_max = df_of_lambda(lambda_lo);
    const double df_min = df_of_lambda(lambda_hi);
    if (df_target > df_max + df_tol || df_target < df_min - df_tol) {
        throw CalibrationError(df_target, df_min, df_max);
    }
    if (df_target >= df_max - df_tol) return lambda_lo;
    if (df_target <= df_min + df_tol) return lambda_hi;

    double lo = std::log(lambda_lo);
    double hi = std::log(lambda_hi);
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (df_of_lambda(std::exp(mid)) >= df_target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double lambda = std::exp(0.5 * (lo + hi));
    if (std::abs(df_of_lambda(lambda) - df_target) > df_tol) {
        throw CalibrationError(df_target, df_min, df_max);
    }
    return lambda;
}

}  // namespace

double calibrate_lambda(const Matrix& gram_sum, const Matrix& K_unit, double df_target,
                        DfDefinition def) {
    return bisect_decreasing(
        [&](double lambda) { return effective_df(gram_sum, Matrix(lambda * K_unit), def); },
        df_target);
}

double calibrate_lambda0_block(const Matrix& avg_gram, const Matrix& K_inner, int n_sites,
                               double df_target, DfDefinition def) {
    const Matrix I = Matrix::Identity(avg_gram.rows(), avg_gram.cols());
    return bisect_decreasing(
        [&](double lambda0) {
            return static_cast<double>(n_sites) *
                   effective_df(avg_gram, Matrix(lambda0 * I + K_inner), def);
        },
        df_target);
}

}  // namespace cwb
