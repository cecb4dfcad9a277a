#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "cwb/dataio.hpp"

using namespace cwb;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

Dataset tiny_dataset() {
    Dataset ds;
    Column y{"y", ColumnType::numeric, {1.0, 0.0, 1.0}, {}, {0, 0, 0}};
    Column x{"x", ColumnType::numeric, {0.5, -1.25, 3.0}, {}, {0, 0, 0}};
    Column g{"g", ColumnType::categorical, {}, {"a", "b", "a"}, {0, 0, 0}};
    ds.columns = {y, x, g};
    ds.response = "y";
    return ds;
}

}  // namespace

TEST_CASE("csv round-trip is value-identical") {
    const std::string path = temp_path("cwb_test_roundtrip.csv");
    const Dataset ds = tiny_dataset();
    write_csv(ds, path);
    CsvSchema schema;
    schema.response = "y";
    const Dataset back = load_csv(path, schema);
    REQUIRE(back.n_rows() == 3);
    CHECK(back.col("y").num == ds.col("y").num);
    CHECK(back.col("x").num == ds.col("x").num);
    CHECK(back.col("g").cat == ds.col("g").cat);
    // load -> serialize -> load is idempotent
    const std::string path2 = temp_path("cwb_test_roundtrip2.csv");
    write_csv(back, path2);
    const Dataset again = load_csv(path2, schema);
    CHECK(again.col("x").num == back.col("x").num);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("question marks and empty cells become missing") {
    const std::string path = temp_path("cwb_test_missing.csv");
    {
        std::ofstream out(path);
        out << "a,b\n1.5,x\n?,\n";
    }
    CsvSchema schema;
    const Dataset ds = load_csv(path, schema);
    CHECK(ds.col("a").missing[0] == 0);
    CHECK(ds.col("a").missing[1] == 1);
    CHECK(ds.col("b").missing[1] == 1);
    std::remove(path.c_str());
}

TEST_CASE("type coercion failures name row and column") {
    const std::string path = temp_path("cwb_test_badtype.csv");
    {
        std::ofstream out(path);
        out << "a\n1.5\nbogus\n";
    }
    CsvSchema schema;
    schema.columns = {{"a", ColumnType::numeric}};
    try {
        load_csv(path, schema);
        FAIL("expected InputError");
    } catch (const InputError& e) {
        const std::string what = e.what();
        CHECK(what.find("bogus") != std::string::npos);
        CHECK(what.find("row 3") != std::string::npos);
        CHECK(what.find("a") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("heart cleaning derives the binary response and drops incomplete rows") {
    Dataset raw;
    auto numcol = [](std::string name, std::vector<double> v, std::vector<std::uint8_t> m) {
        Column c;
        c.name = std::move(name);
        c.type = ColumnType::numeric;
        c.num = std::move(v);
        c.missing = std::move(m);
        return c;
    };
    raw.columns = {
        numcol("age", {60, 61, 62}, {0, 0, 0}),
        numcol("trestbps", {120, 130, 140}, {0, 0, 0}),
        numcol("chol", {200, 210, 220}, {0, 1, 0}),  // row 1 incomplete
        numcol("thalach", {150, 151, 152}, {0, 0, 0}),
        numcol("oldpeak", {1.0, 2.0, 0.5}, {0, 0, 0}),
        numcol("sex", {1, 0, 1}, {0, 0, 0}),
        numcol("cp", {1, 2, 4}, {0, 0, 0}),
        numcol("exang", {0, 0, 1}, {0, 0, 0}),
        numcol("num", {0, 2, 3}, {0, 0, 0}),
    };
    const Dataset clean = clean_heart(raw);
    REQUIRE(clean.n_rows() == 2);
    CHECK(clean.response == "disease");
    CHECK(clean.col("disease").num == std::vector<double>{0.0, 1.0});
    CHECK(clean.col("sex").type == ColumnType::categorical);
    CHECK(clean.col("sex").cat == std::vector<std::string>{"1", "1"});

    // all-complete input drops nothing
    raw.col("chol").missing = {0, 0, 0};
    CHECK(clean_heart(raw).n_rows() == 3);
}

TEST_CASE("cleaning is order-insensitive up to row multiset") {
    Dataset raw;
    Column age{"age", ColumnType::numeric, {50, 51, 52, 53}, {}, {0, 1, 0, 0}};
    Column num{"num", ColumnType::numeric, {0, 1, 2, 0}, {}, {0, 0, 0, 0}};
    raw.columns = {age, num};
    HeartSchema schema;
    schema.retained_numeric = {"age"};
    schema.retained_categorical = {};
    const Dataset a = clean_heart(raw, schema);

    Dataset shuffled = raw.select_rows({3, 1, 0, 2});
    const Dataset b = clean_heart(shuffled, schema);
    auto key = [](const Dataset& d) {
        std::multiset<std::pair<double, double>> rows;
        for (std::size_t r = 0; r < d.n_rows(); ++r) {
            rows.emplace(d.col("age").num[r], d.col("disease").num[r]);
        }
        return rows;
    };
    CHECK(key(a) == key(b));
}

TEST_CASE("validation split sizes and determinism") {
    Dataset ds;
    Column y{"y", ColumnType::numeric, {}, {}, {}};
    for (int i = 0; i < 10; ++i) {
        y.num.push_back(i < 5 ? 0.0 : 1.0);
        y.missing.push_back(0);
    }
    ds.columns = {y};
    ds.response = "y";

    const auto split = split_validation(ds, 0.2, 7, false);
    CHECK(split.validation.n_rows() == 2);
    CHECK(split.train.n_rows() == 8);

    const auto again = split_validation(ds, 0.2, 7, false);
    CHECK(again.validation.col("y").num == split.validation.col("y").num);
    CHECK(again.train.col("y").num == split.train.col("y").num);

    CHECK_THROWS_AS(split_validation(ds, 0.0, 7, false), InputError);
}

TEST_CASE("stratified split preserves the class ratio") {
    Dataset ds;
    Column y{"y", ColumnType::numeric, {}, {}, {}};
    for (int i = 0; i < 100; ++i) {
        y.num.push_back(i < 30 ? 1.0 : 0.0);
        y.missing.push_back(0);
    }
    ds.columns = {y};
    ds.response = "y";
    const auto split = split_validation(ds, 0.2, 3, true);
    CHECK(split.stratified);
    const auto& val = split.validation.col("y").num;
    const double ones = std::count(val.begin(), val.end(), 1.0);
    const double ratio = ones / static_cast<double>(val.size());
    CHECK(std::abs(ratio - 0.3) <= 1.0 / static_cast<double>(val.size()));

    // single-class response falls back to unstratified
    Dataset flat = ds;
    std::fill(flat.col("y").num.begin(), flat.col("y").num.end(), 1.0);
    const auto fallback = split_validation(flat, 0.2, 3, true);
    CHECK_FALSE(fallback.stratified);
    CHECK(fallback.validation.n_rows() == 20);
}

TEST_CASE("horizontal partitions are exhaustive and exclusive") {
    Dataset ds;
    Column x{"x", ColumnType::numeric, {}, {}, {}};
    for (int i = 0; i < 23; ++i) {
        x.num.push_back(static_cast<double>(i));
        x.missing.push_back(0);
    }
    ds.columns = {x};

    for (PartitionScheme scheme : {PartitionScheme::contiguous, PartitionScheme::random}) {
        const auto parts = partition_horizontal(ds, 4, scheme, 19);
        REQUIRE(parts.size() == 4);
        std::multiset<double> together;
        for (const auto& p : parts) {
            CHECK(p.n_rows() > 0);
            together.insert(p.col("x").num.begin(), p.col("x").num.end());
        }
        std::multiset<double> original(x.num.begin(), x.num.end());
        CHECK(together == original);
    }

    const auto identity = partition_horizontal(ds, 1, PartitionScheme::contiguous);
    CHECK(identity.size() == 1);
    CHECK(identity[0].col("x").num == x.num);

    CHECK_THROWS_AS(partition_horizontal(ds, 24, PartitionScheme::contiguous), InputError);
}

TEST_CASE("by-site-tag partitioning groups rows by tag") {
    Dataset ds;
    Column x{"x", ColumnType::numeric, {1, 2, 3, 4, 5}, {}, {0, 0, 0, 0, 0}};
    Column site{"site", ColumnType::categorical, {}, {"b", "a", "b", "a", "b"}, {0, 0, 0, 0, 0}};
    ds.columns = {x, site};
    ds.site_column = "site";
    const auto parts = partition_horizontal(ds, 0, PartitionScheme::by_site_tag);
    REQUIRE(parts.size() == 2);
    // tags sorted: "a" first
    CHECK(parts[0].col("x").num == std::vector<double>{2, 4});
    CHECK(parts[1].col("x").num == std::vector<double>{1, 3, 5});
}

TEST_CASE("pooling partitions tags sites in ascending order") {
    Dataset a;
    Column xa{"x", ColumnType::numeric, {1, 2}, {}, {0, 0}};
    a.columns = {xa};
    Dataset b;
    Column xb{"x", ColumnType::numeric, {3}, {}, {0}};
    b.columns = {xb};
    const Dataset pooled = pool_partitions({a, b});
    CHECK(pooled.site_column == "site");
    CHECK(pooled.col("site").cat == std::vector<std::string>{"1", "1", "2"});
    CHECK(pooled.col("x").num == std::vector<double>{1, 2, 3});
}
