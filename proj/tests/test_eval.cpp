#include "dispel/error.hpp"
#include "dispel/eval.hpp"
#include "dispel/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

using namespace dispel;
namespace fs = std::filesystem;

namespace {

SplitModel linear_model(const Tensor& w, const Tensor& b) {
    ParamStore p;
    p.add("layer0.weight", w);
    p.add("layer0.bias", b);
    SplitModel s = identity_split(Mlp({w.rows(), w.cols()}, Activation::Identity, p));
    s.freeze();
    return s;
}

Tensor gaussian(Rng& rng, std::size_t r, std::size_t c) {
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor t = Tensor::zeros({r, c});
    for (double& v : t.data()) v = n(rng);
    return t;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

DomainDataset dataset(Tensor x, std::vector<int> y) {
    DomainDataset d;
    d.features = std::move(x);
    d.labels = std::move(y);
    return d;
}

FeatureOracle split_oracle(std::size_t shared, std::size_t total) {
    FeatureOracle o;
    for (std::size_t k = 0; k < total; ++k) (k < shared ? o.shared_dims : o.specific_dims).push_back(k);
    return o;
}

}  // namespace

TEST_CASE("accuracy with label-revealing and constant predictors") {
    Rng rng = derive_rng(1);
    const std::size_t n = 3000, c = 3;
    Tensor x = Tensor::zeros({n, c});
    std::vector<int> y(n);
    std::uniform_int_distribution<int> label(0, c - 1);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = label(rng);
        x(i, y[i]) = 1.0;
    }
    const DomainDataset d = dataset(x, y);
    Tensor eye = Tensor::zeros({c, c});
    for (std::size_t k = 0; k < c; ++k) eye(k, k) = 1.0;
    CHECK(accuracy(linear_model(eye, Tensor::zeros({1, c})), NoMask{}, d) == 1.0);

    const double chance = accuracy(linear_model(Tensor::zeros({c, c}), Tensor::zeros({1, c})), NoMask{}, d);
    const double p = 1.0 / c;
    CHECK(std::abs(chance - p) <= 4.0 * std::sqrt(p * (1 - p) / n));

    CHECK_THROWS_AS(accuracy(linear_model(eye, Tensor::zeros({1, c})), NoMask{}, dataset(Tensor::zeros({0, 3}), {})),
                    UsageError);
}

TEST_CASE("all-ones mask equals unmasked evaluation bitwise") {
    Rng rng = derive_rng(2);
    const SplitModel m = linear_model(gaussian(rng, 5, 4), gaussian(rng, 1, 4));
    const Tensor x = gaussian(rng, 200, 5);
    CHECK(masked_logits(m, ExplicitMask{Tensor::filled({200, 5}, 1.0)}, x) == masked_logits(m, NoMask{}, x));
    CHECK(masked_logits(m, GlobalMask{std::vector<double>(5, 1.0)}, x) == masked_logits(m, NoMask{}, x));
    std::vector<int> y(200);
    for (std::size_t i = 0; i < 200; ++i) y[i] = static_cast<int>(i % 4);
    const DomainDataset d = dataset(x, y);
    CHECK(accuracy(m, ExplicitMask{Tensor::filled({200, 5}, 1.0)}, d) == accuracy(m, NoMask{}, d));
    CHECK_THROWS_AS(masked_logits(m, GlobalMask{std::vector<double>(4, 1.0)}, x), DimensionError);
}

TEST_CASE("accuracy is invariant to sample order") {
    Rng rng = derive_rng(3);
    const SplitModel m = linear_model(gaussian(rng, 4, 3), gaussian(rng, 1, 3));
    const Tensor x = gaussian(rng, 150, 4);
    std::vector<int> y(150);
    for (std::size_t i = 0; i < 150; ++i) y[i] = static_cast<int>((i * 7) % 3);
    std::vector<std::size_t> order(150);
    for (std::size_t i = 0; i < 150; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> y2;
    for (auto i : order) y2.push_back(y[i]);
    CHECK(accuracy(m, NoMask{}, dataset(x, y)) == accuracy(m, NoMask{}, dataset(x.gather_rows(order), y2)));
}

TEST_CASE("bound terms on a hand-computed case") {
    const SplitModel m = linear_model(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{5, -3}}));
    const Tensor z = Tensor::matrix({{1, 2}});
    const Tensor masks = Tensor::matrix({{0.5, 0}});
    const std::vector<std::size_t> sh{0}, sp{1};
    const BoundReport l2 = bound_terms(m.predictor(), z, masks, sh, sp, DistanceKind::L2);
    CHECK(l2.ge == doctest::Approx(std::sqrt(4.25)).epsilon(1e-15));
    CHECK(l2.term_sh == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(l2.term_sp == doctest::Approx(2.0).epsilon(1e-15));
    const BoundReport l1 = bound_terms(m.predictor(), z, masks, sh, sp, DistanceKind::L1);
    CHECK(l1.ge == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(l1.term_sh + l1.term_sp == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(l1.violation_count == 0);
}

TEST_CASE("all-ones mask gives zero generalization error and zero terms") {
    Rng rng = derive_rng(4);
    const SplitModel m = linear_model(gaussian(rng, 6, 3), gaussian(rng, 1, 3));
    const Tensor z = gaussian(rng, 50, 6);
    const std::vector<std::size_t> sh{0, 2, 4}, sp{1, 3, 5};
    const BoundReport r = bound_terms(m.predictor(), z, Tensor::filled({50, 6}, 1.0), sh, sp, DistanceKind::L2);
    CHECK(r.ge == 0.0);
    CHECK(r.term_sh == 0.0);
    CHECK(r.term_sp == 0.0);
}

TEST_CASE("bound holds on random affine instances under both distances") {
    Rng rng = derive_rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto kind : {DistanceKind::L2, DistanceKind::L1}) {
        std::size_t violations = 0;
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t d = 2 + trial % 7, c = 2 + trial % 4;
            const SplitModel m = linear_model(gaussian(rng, d, c), gaussian(rng, 1, c));
            const Tensor z = gaussian(rng, 5, d);
            Tensor masks = Tensor::zeros({5, d});
            for (double& v : masks.data()) v = u(rng);
            std::vector<std::size_t> sh, sp;
            for (std::size_t k = 0; k < d; ++k) (u(rng) < 0.5 ? sh : sp).push_back(k);
            violations += bound_terms(m.predictor(), z, masks, sh, sp, kind).violation_count;
        }
        CHECK(violations == 0);
    }
}

TEST_CASE("bound contract errors") {
    const SplitModel m = linear_model(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{0, 0}}));
    const Tensor z = Tensor::matrix({{1, 2}});
    const Tensor masks = Tensor::matrix({{1, 1}});
    const std::vector<std::size_t> both{0, 1}, none{}, first{0}, overlap{0};
    CHECK_THROWS_AS(bound_terms(m.predictor(), z, masks, first, none, DistanceKind::L2), ContractError);
    CHECK_THROWS_AS(bound_terms(m.predictor(), z, masks, both, overlap, DistanceKind::L2), ContractError);

    const Mlp deep = Mlp::init({2, 3, 2}, 0);
    CHECK_THROWS_AS(bound_terms(deep, z, masks, first, std::vector<std::size_t>{1}, DistanceKind::L2), ContractError);

    const DomainDataset d = dataset(z, {0});
    FeatureOracle mixed = split_oracle(1, 2);
    mixed.mixed = true;
    CHECK_THROWS_AS(bound_terms(m, NoMask{}, d, mixed, DistanceKind::L2), ContractError);
    SplitModel encoded = split_model(deep, 1);
    encoded.freeze();
    CHECK_THROWS_AS(bound_terms(encoded, NoMask{}, d, split_oracle(1, 3), DistanceKind::L2), ContractError);
    CHECK_THROWS_AS(distance_kind_from_string("cosine"), ConfigError);
}

TEST_CASE("bound report serializes every field") {
    BoundReport r;
    r.distance = DistanceKind::L1;
    r.samples = 3;
    const auto j = r.to_json();
    CHECK(j.at("distance") == "l1");
    CHECK(j.at("samples") == 3);
    CHECK(j.contains("term_sh"));
    CHECK(j.contains("violation_count"));
}

TEST_CASE("embedding and mask export") {
    const fs::path dir = fs::temp_directory_path() / ("dispel_eval_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    Rng rng = derive_rng(6);
    const SplitModel m = linear_model(gaussian(rng, 3, 2), gaussian(rng, 1, 2));
    DomainDataset d = dataset(gaussian(rng, 7, 3), {0, 1, 0, 1, 1, 0, 0});
    d.domain_index = 4;

    export_embeddings(m, NoMask{}, d, dir / "a.csv");
    export_embeddings(m, NoMask{}, d, dir / "b.csv");
    const std::string a = read_bytes(dir / "a.csv");
    CHECK(a == read_bytes(dir / "b.csv"));
    CHECK(std::count(a.begin(), a.end(), '\n') == 8);
    CHECK(a.rfind("sample_id,label,domain,e0,e1,e2\n", 0) == 0);
    CHECK(a.find("\n6,0,4,") != std::string::npos);

    export_embeddings(m, GlobalMask{{0, 0, 0}}, d, dir / "zero.csv");
    std::istringstream rows(read_bytes(dir / "zero.csv"));
    std::string line;
    std::getline(rows, line);
    while (std::getline(rows, line)) {
        std::stringstream cells(line);
        std::string cell;
        for (int k = 0; std::getline(cells, cell, ','); ++k)
            if (k >= 3) CHECK(std::stod(cell) == 0.0);
    }

    export_masks(m, GlobalMask{{1, 0, 1}}, d, dir / "m.csv");
    const std::string masks = read_bytes(dir / "m.csv");
    CHECK(masks.rfind("sample_id,m0,m1,m2\n0,1,0,1\n", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("aggregate runs") {
    const std::uint64_t one_seed[] = {7};
    const AccuracyMap single[] = {{{"unseen", 0.8}}};
    const RunReport s = aggregate_runs(single, one_seed);
    CHECK(s.accuracy.at("unseen").mean == 0.8);
    CHECK(s.accuracy.at("unseen").std_error == 0.0);

    const std::uint64_t two_seeds[] = {0, 1};
    const AccuracyMap pair[] = {{{"unseen", 0.8}}, {{"unseen", 0.9}}};
    const RunReport p = aggregate_runs(pair, two_seeds);
    CHECK(p.accuracy.at("unseen").mean == doctest::Approx(0.85).epsilon(1e-15));
    CHECK(p.accuracy.at("unseen").std_error == doctest::Approx(0.05).epsilon(1e-12));

    const std::uint64_t three_seeds[] = {0, 1, 2};
    const AccuracyMap same[] = {{{"a", 0.3}}, {{"a", 0.3}}, {{"a", 0.3}}};
    const RunReport i = aggregate_runs(same, three_seeds);
    CHECK(i.accuracy.at("a").mean == 0.3);
    CHECK(i.accuracy.at("a").std_error == 0.0);

    const AccuracyMap mismatched[] = {{{"a", 0.3}}, {{"b", 0.3}}};
    CHECK_THROWS_AS(aggregate_runs(mismatched, two_seeds), UsageError);
    CHECK_THROWS_AS(aggregate_runs(pair, one_seed), UsageError);
    CHECK(p.to_json().at("seeds") == nlohmann::json({0, 1}));
}
