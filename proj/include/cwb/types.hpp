#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace cwb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error taxonomy. The CLI maps these onto exit codes:
//   usage/config -> 2, privacy refusal -> 3, anything else -> 1.

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateResponseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SingularSystemError : std::runtime_error {
    int spec_id;
    explicit SingularSystemError(int id)
        : std::runtime_error("singular penalized system for base learner id " +
                             std::to_string(id)),
          spec_id(id) {}
};

struct CalibrationError : std::runtime_error {
    double attainable_min;
    double attainable_max;
    CalibrationError(double target, double lo, double hi)
        : std::runtime_error("degrees-of-freedom target " + std::to_string(target) +
                             " outside attainable range (" + std::to_string(lo) + ", " +
                             std::to_string(hi) + ")"),
          attainable_min(lo),
          attainable_max(hi) {}
};

struct PrivacyRefusal : std::runtime_error {
    int site_id;
    std::string payload_kind;
    long n_contributing;
    int level;
    PrivacyRefusal(int site, std::string kind, long n, int lvl)
        : std::runtime_error("privacy refusal at site " + std::to_string(site) + ": " +
                             kind + " aggregates only " + std::to_string(n) +
                             " observations, policy level is " + std::to_string(lvl)),
          site_id(site),
          payload_kind(std::move(kind)),
          n_contributing(n),
          level(lvl) {}
};

}  // namespace cwb
