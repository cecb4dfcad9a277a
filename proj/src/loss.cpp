#include "cwb/loss.hpp"

#include <cmath>

namespace cwb {

namespace {

double sigmoid(double f) {
    if (f >= 0.0) {
        return 1.0 / (1.0 + std::exp(-f));
    }
    const double e = std::exp(f);
    return e / (1.0 + e);
}

// log(1 + exp(f)) without overflow.
double softplus(double f) {
    if (f > 0.0) {
        return f + std::log1p(std::exp(-f));
    }
    return std::log1p(std::exp(f));
}

}  // namespace

const char* loss_name(LossFamily family) {
    switch (family) {
        case LossFamily::gaussian_l2: return "gaussian_l2";
        case LossFamily::binomial_logit: return "binomial_logit";
    }
    return "unknown";
}

LossFamily parse_loss(const std::string& name) {
    if (name == "gaussian_l2") return LossFamily::gaussian_l2;
    if (name == "binomial_logit") return LossFamily::binomial_logit;
    throw InputError("unknown loss family: " + name);
}

void validate_response(const LossSpec& loss, const Vector& y) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (!std::isfinite(y[i])) {
            throw InputError("non-finite response value at row " + std::to_string(i));
        }
        if (loss.family == LossFamily::binomial_logit && y[i] != 0.0 && y[i] != 1.0) {
            throw InputError("binomial response must be 0 or 1, got " +
                             std::to_string(y[i]) + " at row " + std::to_string(i));
        }
    }
}

double inverse_link(const LossSpec& loss, double f) {
    return loss.family == LossFamily::binomial_logit ? sigmoid(f) : f;
}

Vector pseudo_residuals(const LossSpec& loss, const Vector& y, const Vector& f) {
    if (y.size() != f.size()) {
        throw InputError("pseudo_residuals: response and predictor lengths differ");
    }
    Vector r(y.size());
    if (loss.family == LossFamily::gaussian_l2) {
        for (Eigen::Index i = 0; i < y.size(); ++i) r[i] = y[i] - f[i];
    } else {
        for (Eigen::Index i = 0; i < y.size(); ++i) r[i] = y[i] - sigmoid(f[i]);
    }
    return r;
}

double sum_loss(const LossSpec& loss, const Vector& y, const Vector& f) {
    if (y.size() != f.size()) {
        throw InputError("sum_loss: response and predictor lengths differ");
    }
    double total = 0.0;
    if (loss.family == LossFamily::gaussian_l2) {
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            const double d = y[i] - f[i];
            total += 0.5 * d * d;
        }
    } else {
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            total += softplus(f[i]) - y[i] * f[i];
        }
    }
    return total;
}

double empirical_risk(const LossSpec& loss, const Vector& y, const Vector& f) {
    if (y.size() == 0) throw InputError("empirical_risk: empty sample");
    return sum_loss(loss, y, f) / static_cast<double>(y.size());
}

double init_constant(const LossSpec& loss, const std::vector<ResponseAggregate>& sites) {
    double sum_y = 0.0;
    long n = 0;
    for (const auto& s : sites) {
        sum_y += s.sum_y;
        n += s.n;
    }
    if (n < 1) throw InputError("init_constant: no observations");
    const double mean = sum_y / static_cast<double>(n);
    if (loss.family == LossFamily::gaussian_l2) {
        return mean;
    }
    if (mean <= 0.0 || mean >= 1.0) {
        throw DegenerateResponseError("binomial response mean " + std::to_string(mean) +
                                      " admits no finite loss-optimal constant");
    }
    return std::log(mean / (1.0 - mean));
}

}  // namespace cwb
