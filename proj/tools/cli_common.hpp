#pragma once

#include <cstdio>
#include <exception>
#include <functional>

#include "cwb/types.hpp"

namespace cwb::cli {

// Exit codes: 0 success, 1 runtime/numeric, 2 usage/config, 3 privacy refusal.
inline int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const PrivacyRefusal& e) {
        std::fprintf(stderr, "privacy refusal: %s\n", e.what());
        return 3;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace cwb::cli
