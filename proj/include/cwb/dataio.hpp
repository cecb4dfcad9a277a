#pragma once

#include "cwb/types.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace cwb {

enum class ColumnType { numeric, categorical };

struct Column {
    std::string name;
    ColumnType type = ColumnType::numeric;
    std::vector<double> num;        // numeric payload, 0.0 where missing
    std::vector<std::string> cat;   // categorical payload, "" where missing
    std::vector<std::uint8_t> missing;

    std::size_t size() const {
        return type == ColumnType::numeric ? num.size() : cat.size();
    }
};

struct Dataset {
    std::vector<Column> columns;
    std::string response;      // name of the (numeric) response column
    std::string site_column;   // optional categorical site tag column, "" if absent

    std::size_t n_rows() const { return columns.empty() ? 0 : columns.front().size(); }
    const Column* find(const std::string& name) const;
    const Column& col(const std::string& name) const;
    Column& col(const std::string& name);
    bool has_column(const std::string& name) const { return find(name) != nullptr; }

    // Response as a dense vector; throws if any response cell is missing.
    Vector response_vector() const;

    Dataset select_rows(const std::vector<std::size_t>& rows) const;
    void drop_column(const std::string& name);
    static Dataset concat(const std::vector<Dataset>& parts);
};

struct ColumnSchema {
    std::string name;
    ColumnType type = ColumnType::numeric;
};

struct CsvSchema {
    std::vector<ColumnSchema> columns;  // empty -> header-driven with type inference
    std::string response;
    std::string site_column;
};

// RFC-4180 subset reader: UTF-8, optional quoted fields, '?' or empty = missing.
Dataset load_csv(const std::string& path, const CsvSchema& schema);
void write_csv(const Dataset& ds, const std::string& path);

// UCI heart-disease cleaning: derives the binary response (num > 0), keeps a
// configured covariate list, drops rows with missing retained values.
struct HeartSchema {
    std::vector<std::string> retained_numeric{"age", "trestbps", "chol", "thalach", "oldpeak"};
    std::vector<std::string> retained_categorical{"sex", "cp", "exang"};
    std::string raw_response = "num";
    std::string derived_response = "disease";
};
HeartSchema load_heart_schema(const std::string& path);
Dataset clean_heart(const Dataset& raw, const HeartSchema& schema = HeartSchema());

// Deterministic seeded split; fraction of rows -> validation, rounded half-up.
// Stratification splits each response class separately (binary responses).
struct SplitResult {
    Dataset train;
    Dataset validation;
    bool stratified = false;
};
SplitResult split_validation(const Dataset& ds, double fraction, std::uint64_t seed,
                             bool stratify);

enum class PartitionScheme { by_site_tag, random, contiguous };

std::vector<Dataset> partition_horizontal(const Dataset& ds, int n_sites,
                                          PartitionScheme scheme, std::uint64_t seed = 0);

// Tags each partition with an ascending site label ("1".."S") and concatenates;
// used to build the pooled twin of a distributed run.
Dataset pool_partitions(const std::vector<Dataset>& parts);

// Deterministic cross-platform RNG used by the split/partition helpers and
// the fixture generators (std::shuffle ordering is implementation-defined).
struct SplitMix64 {
    std::uint64_t state;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    // uniform in [0, bound)
    std::uint64_t bounded(std::uint64_t bound) { return next() % bound; }
    double uniform01() { return (next() >> 11) * 0x1.0p-53; }
    double normal();  // Box-Muller, fixed algorithm
};

void shuffle_indices(std::vector<std::size_t>& idx, SplitMix64& rng);

}  // namespace cwb
