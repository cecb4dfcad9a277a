#include <doctest.h>

#include <cmath>

#include "cwb/basis.hpp"
#include "oracles.hpp"

using namespace cwb;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

}  // namespace

TEST_CASE("linear basis rows") {
    const Matrix with = build_linear_basis(vec({3.0}), true);
    CHECK(with.rows() == 1);
    CHECK(with.cols() == 2);
    CHECK(with(0, 0) == 1.0);
    CHECK(with(0, 1) == 3.0);

    const Matrix without = build_linear_basis(vec({0.0}), false);
    CHECK(without.cols() == 1);
    CHECK(without(0, 0) == 0.0);

    const Matrix Z = build_linear_basis(vec({1.0, 2.0, 3.0}), true);
    for (int r = 0; r < 3; ++r) {
        CHECK(Z(r, 0) == 1.0);
        CHECK(Z(r, 1) == static_cast<double>(r + 1));
    }

    Vector bad(2);
    bad << 1.0, std::nan("");
    CHECK_THROWS_AS(build_linear_basis(bad, true), InputError);
}

TEST_CASE("bspline partition of unity inside the knot range") {
    SplitMix64 rng(3);
    Vector xs(200);
    for (int i = 0; i < 200; ++i) xs[i] = -1.0 + 3.0 * rng.uniform01();
    const Matrix Z = build_bspline_basis(xs, 3, 10, -1.0, 2.0);
    for (int r = 0; r < Z.rows(); ++r) {
        CHECK(std::abs(Z.row(r).sum() - 1.0) < 1e-12);
    }
}

TEST_CASE("bspline local support: at most degree+1 nonzeros per row") {
    SplitMix64 rng(5);
    Vector xs(100);
    for (int i = 0; i < 100; ++i) xs[i] = 10.0 * rng.uniform01();
    const Matrix Z = build_bspline_basis(xs, 3, 12, 0.0, 10.0);
    for (int r = 0; r < Z.rows(); ++r) {
        int nonzero = 0;
        for (int c = 0; c < Z.cols(); ++c) nonzero += Z(r, c) != 0.0 ? 1 : 0;
        CHECK(nonzero <= 4);
    }
}

TEST_CASE("degree-0 spline is the indicator basis") {
    const Matrix Z = build_bspline_basis(vec({0.5}), 0, 2, 0.0, 2.0);
    CHECK(Z(0, 0) == 1.0);
    CHECK(Z(0, 1) == 0.0);
}

TEST_CASE("cubic bspline matches the recursive Cox-de Boor oracle") {
    const int degree = 3;
    const int n_basis = 10;
    const double lo = -0.5;
    const double hi = 4.5;
    Vector xs(20);
    for (int i = 0; i < 20; ++i) {
        xs[i] = lo + (hi - lo) * static_cast<double>(i) / 19.0;  // includes both boundaries
    }
    const Matrix Z = build_bspline_basis(xs, degree, n_basis, lo, hi);
    for (int r = 0; r < 20; ++r) {
        const auto expect = oracle::bspline_row(xs[r], degree, n_basis, lo, hi);
        for (int c = 0; c < n_basis; ++c) {
            CHECK(Z(r, c) == doctest::Approx(expect[c]).epsilon(1e-12));
        }
    }
}

TEST_CASE("out-of-range values evaluate at the clamped boundary") {
    const Matrix inside = build_bspline_basis(vec({0.0, 1.0}), 3, 8, 0.0, 1.0);
    const Matrix outside = build_bspline_basis(vec({-5.0, 7.0}), 3, 8, 0.0, 1.0);
    CHECK((inside - outside).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("degenerate knot range is rejected") {
    CHECK_THROWS_AS(build_bspline_basis(vec({1.0}), 3, 10, 2.0, 2.0), InputError);
    CHECK_THROWS_AS(build_bspline_basis(vec({1.0}), 3, 3, 0.0, 1.0), InputError);
}

TEST_CASE("categorical one-hot encoding") {
    const Matrix Z = build_categorical_basis({"b"}, {"a", "b", "c"});
    CHECK(Z(0, 0) == 0.0);
    CHECK(Z(0, 1) == 1.0);
    CHECK(Z(0, 2) == 0.0);

    const Matrix single = build_categorical_basis({"a"}, {"a"});
    CHECK(single(0, 0) == 1.0);

    const Matrix perm = build_categorical_basis({"a", "c", "b"}, {"a", "b", "c"});
    Matrix expect(3, 3);
    expect << 1, 0, 0, 0, 0, 1, 0, 1, 0;
    CHECK((perm - expect).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(build_categorical_basis({"d"}, {"a", "b", "c"}), InputError);
}

TEST_CASE("row tensor follows the left-major Kronecker layout") {
    Matrix left(1, 2), right(1, 2);
    left << 1, 2;
    right << 3, 4;
    const Matrix Z = build_row_tensor(left, right);
    CHECK(Z(0, 0) == 3.0);
    CHECK(Z(0, 1) == 4.0);
    CHECK(Z(0, 2) == 6.0);
    CHECK(Z(0, 3) == 8.0);

    Matrix onehot(1, 2), inner(1, 2);
    onehot << 0, 1;
    inner << 5, 7;
    const Matrix site = build_row_tensor(onehot, inner);
    CHECK(site(0, 0) == 0.0);
    CHECK(site(0, 1) == 0.0);
    CHECK(site(0, 2) == 5.0);
    CHECK(site(0, 3) == 7.0);
}

TEST_CASE("row tensor matches the nested-loop oracle exactly") {
    SplitMix64 rng(17);
    Matrix a(3, 2), b(3, 3);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 2; ++c) a(r, c) = rng.normal();
        for (int c = 0; c < 3; ++c) b(r, c) = rng.normal();
    }
    const Matrix Z = build_row_tensor(a, b);
    const Matrix expect = oracle::row_tensor(a, b);
    CHECK((Z - expect).cwiseAbs().maxCoeff() == 0.0);

    Matrix short_rows(2, 2);
    CHECK_THROWS_AS(build_row_tensor(a, short_rows), InputError);
}

TEST_CASE("difference matrices carry signed binomial coefficients") {
    const Matrix d1 = build_difference_matrix(4, 1);
    Matrix e1(3, 4);
    e1 << -1, 1, 0, 0, 0, -1, 1, 0, 0, 0, -1, 1;
    CHECK((d1 - e1).cwiseAbs().maxCoeff() == 0.0);

    const Matrix d2 = build_difference_matrix(4, 2);
    Matrix e2(2, 4);
    e2 << 1, -2, 1, 0, 0, 1, -2, 1;
    CHECK((d2 - e2).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(build_difference_matrix(4, 4), InputError);
}

TEST_CASE("second-difference penalty annihilates constant and linear vectors") {
    for (int d : {4, 7, 12}) {
        const Matrix D = build_difference_matrix(d, 2);
        const Matrix K = D.transpose() * D;
        Vector ones = Vector::Ones(d);
        Vector ramp(d);
        for (int i = 0; i < d; ++i) ramp[i] = static_cast<double>(i + 1);
        CHECK((K * ones).cwiseAbs().maxCoeff() == 0.0);
        CHECK((K * ramp).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("kronecker sum penalty block structure") {
    Matrix K0 = Matrix::Identity(2, 2);
    Matrix Kl(1, 1);
    Kl << 2.0;
    const PenaltyMatrix K = build_kronecker_sum_penalty(K0, 1.0, Kl, 3.0, 2, 1);
    CHECK(K.entries(0, 0) == 7.0);
    CHECK(K.entries(1, 1) == 7.0);
    CHECK(K.entries(0, 1) == 0.0);

    const PenaltyMatrix ridge_only =
        build_kronecker_sum_penalty(Matrix::Identity(2, 2), 2.5, Matrix::Zero(2, 2), 0.0, 2, 2);
    CHECK((ridge_only.entries - 2.5 * Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kronecker sum penalty equals the generic Kronecker oracle") {
    SplitMix64 rng(23);
    const int S = 3;
    const int d = 4;
    Matrix root(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) root(i, j) = rng.normal();
    }
    const Matrix Kl = root.transpose() * root;
    const double lambda0 = 0.7;
    const double lambdal = 1.9;
    const PenaltyMatrix K =
        build_kronecker_sum_penalty(Matrix::Identity(S, S), lambda0, Kl, lambdal, S, d);
    const Matrix expect =
        lambda0 * oracle::kronecker(Matrix::Identity(S, S), Matrix::Identity(d, d)) +
        oracle::kronecker(Matrix::Identity(S, S), lambdal * Kl);
    CHECK((K.entries - expect).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(build_kronecker_sum_penalty(Matrix::Identity(S, S), 1.0, Kl, 1.0, S, d + 1),
                    InputError);
}

TEST_CASE("every unit penalty is symmetric positive semi-definite") {
    FeatureMetadata meta;
    meta.ranges["x"] = {0.0, 1.0};
    meta.ranges["z"] = {0.0, 1.0};
    meta.levels["g"] = {"a", "b", "c"};

    std::vector<BaseLearnerSpec> specs;
    BaseLearnerSpec lin;
    lin.id = 0;
    lin.kind = LearnerKind::linear;
    lin.features = {"x"};
    lin.df_target = 1.0;
    specs.push_back(lin);
    BaseLearnerSpec sp;
    sp.id = 1;
    sp.kind = LearnerKind::pspline;
    sp.features = {"x"};
    sp.degree = 3;
    sp.n_basis = 10;
    sp.diff_order = 2;
    specs.push_back(sp);
    BaseLearnerSpec cat;
    cat.id = 2;
    cat.kind = LearnerKind::categorical;
    cat.features = {"g"};
    specs.push_back(cat);
    BaseLearnerSpec rt;
    rt.id = 3;
    rt.kind = LearnerKind::row_tensor;
    rt.features = {"x", "z"};
    rt.degree = 2;
    rt.n_basis = 5;
    rt.diff_order = 1;
    specs.push_back(rt);

    for (const auto& spec : specs) {
        const PenaltyMatrix K = unit_penalty(spec, meta);
        CHECK((K.entries - K.entries.transpose()).cwiseAbs().maxCoeff() == 0.0);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(K.entries);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
    }
}

TEST_CASE("site tensor pooled gram is block-diagonal with zero cross-site blocks") {
    SplitMix64 rng(31);
    Dataset ds;
    Column x;
    x.name = "x";
    x.type = ColumnType::numeric;
    Column site;
    site.name = "site";
    site.type = ColumnType::categorical;
    for (int i = 0; i < 60; ++i) {
        x.num.push_back(rng.uniform01());
        x.missing.push_back(0);
        site.cat.push_back(std::to_string(1 + (i % 3)));
        site.missing.push_back(0);
    }
    ds.columns = {x, site};
    ds.site_column = "site";

    BaseLearnerSpec spec;
    spec.id = 0;
    spec.kind = LearnerKind::pspline;
    spec.features = {"x"};
    spec.degree = 3;
    spec.n_basis = 6;
    spec.diff_order = 2;
    spec.site_specific = true;

    FeatureMetadata meta = compute_feature_metadata(ds, {spec});
    REQUIRE(meta.n_sites() == 3);
    const Matrix Z = build_design(spec, ds, meta);
    REQUIRE(Z.cols() == 18);
    const Matrix gram = Z.transpose() * Z;
    for (int bs = 0; bs < 3; ++bs) {
        for (int bt = 0; bt < 3; ++bt) {
            if (bs == bt) continue;
            CHECK(gram.block(bs * 6, bt * 6, 6, 6).cwiseAbs().maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("spec list serialization preserves ids and order") {
    std::vector<BaseLearnerSpec> specs;
    BaseLearnerSpec a;
    a.id = 0;
    a.kind = LearnerKind::pspline;
    a.features = {"oldpeak"};
    a.df_target = 2.2;
    specs.push_back(a);
    BaseLearnerSpec b;
    b.id = 1;
    b.kind = LearnerKind::categorical;
    b.features = {"cp"};
    b.df_target = 2.2;
    specs.push_back(b);
    BaseLearnerSpec c;
    c.id = 2;
    c.kind = LearnerKind::linear;
    c.features = {};
    c.site_specific = true;
    c.df_target = 3.0;
    specs.push_back(c);

    const auto doc = specs_to_json(specs);
    const auto parsed = specs_from_json(doc);
    REQUIRE(parsed.size() == specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        CHECK(parsed[i] == specs[i]);
    }
    // canonical document round-trips byte-identically
    CHECK(doc.dump() == specs_to_json(parsed).dump());
}

TEST_CASE("shared twin resolution matches on kind, features and hyperparameters") {
    std::vector<BaseLearnerSpec> specs(3);
    specs[0].id = 0;
    specs[0].kind = LearnerKind::pspline;
    specs[0].features = {"x"};
    specs[0].df_target = 2.2;
    specs[1].id = 1;
    specs[1].kind = LearnerKind::pspline;
    specs[1].features = {"x"};
    specs[1].site_specific = true;
    specs[1].df_target = 2.2;
    specs[2].id = 2;
    specs[2].kind = LearnerKind::linear;
    specs[2].features = {};
    specs[2].site_specific = true;
    specs[2].df_target = 3.0;

    CHECK(shared_twin(specs[1], specs) == &specs[0]);
    CHECK(shared_twin(specs[2], specs) == nullptr);
    CHECK(shared_twin(specs[0], specs) == nullptr);
}
