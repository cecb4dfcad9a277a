#pragma once

#include "cwb/types.hpp"

#include <vector>

namespace cwb {

enum class LossFamily { gaussian_l2, binomial_logit };

struct LossSpec {
    LossFamily family = LossFamily::gaussian_l2;
};

// Per-site response aggregate used for the loss-optimal intercept. Only
// (sum_y, n) ever leaves a site.
struct ResponseAggregate {
    double sum_y = 0.0;
    long n = 0;
};

const char* loss_name(LossFamily family);
LossFamily parse_loss(const std::string& name);

// Throws InputError if a binomial response is not strictly {0,1}.
void validate_response(const LossSpec& loss, const Vector& y);

double inverse_link(const LossSpec& loss, double f);

// Negative gradient of the loss at the current additive predictor.
// gaussian: y - f, binomial: y - logit^{-1}(f).
Vector pseudo_residuals(const LossSpec& loss, const Vector& y, const Vector& f);

// Sum of per-observation losses; overflow-safe for |f| beyond ~30.
double sum_loss(const LossSpec& loss, const Vector& y, const Vector& f);

// Mean loss over the sample.
double empirical_risk(const LossSpec& loss, const Vector& y, const Vector& f);

// Loss-optimal constant from per-site (sum_y, n) aggregates, summed in the
// order given (callers pass sites in ascending id order so the pooled and
// distributed paths add in the same sequence).
double init_constant(const LossSpec& loss, const std::vector<ResponseAggregate>& sites);

}  // namespace cwb
