#pragma once

#include "cwb/dataio.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cwb {

// Deterministic synthetic stand-in for the four-site UCI heart-disease data.
// Produces the raw 14-column schema with '?' missings; after clean_heart each
// site holds exactly the documented row counts (303 / 292 / 116 / 140).
struct HeartSite {
    std::string name;
    Dataset raw;
};

std::vector<HeartSite> generate_heart_sites(std::uint64_t seed = 20240501);

// Pooled raw dataset with a categorical site tag column.
Dataset generate_heart_pooled(std::uint64_t seed = 20240501);

}  // namespace cwb
