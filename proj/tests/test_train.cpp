#include "dispel/error.hpp"
#include "dispel/grad_check.hpp"
#include "dispel/losses.hpp"
#include "dispel/optimizer.hpp"
#include "dispel/rng.hpp"
#include "dispel/train.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace dispel;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Tensor t = Tensor::zeros({r, c});
    for (double& v : t.data()) v = n(rng);
    return t;
}

// Two Gaussian blobs at +-2 along the first axis, one dataset per domain.
std::vector<DomainDataset> blobs(std::size_t domains, std::size_t n, std::uint64_t seed) {
    std::vector<DomainDataset> out;
    for (std::size_t d = 0; d < domains; ++d) {
        Rng rng = derive_rng(seed, {d});
        std::normal_distribution<double> noise(0.0, 0.5);
        DomainDataset ds;
        ds.features = Tensor::zeros({n, 3});
        ds.domain_index = static_cast<int>(d);
        for (std::size_t i = 0; i < n; ++i) {
            const int y = static_cast<int>(i % 2);
            ds.labels.push_back(y);
            ds.features(i, 0) = (y ? 2.0 : -2.0) + noise(rng);
            ds.features(i, 1) = noise(rng);
            ds.features(i, 2) = 0.3 * d + noise(rng);
        }
        out.push_back(std::move(ds));
    }
    return out;
}

double entropy(std::span<const double> q) {
    double h = 0.0;
    for (double v : q)
        if (v > 0) h -= v * std::log(v);
    return h;
}

TrainConfig quick_config(std::uint64_t seed) {
    TrainConfig c;
    c.seed = seed;
    c.max_epochs = 40;
    c.patience = 5;
    c.learning_rate = 1e-2;
    return c;
}

}  // namespace

TEST_CASE("hard cross entropy") {
    const std::vector<int> y{0};
    CHECK(hard_ce(y, Tensor::matrix({{1000.0, 0.0}})) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(hard_ce(std::vector<int>{1}, Tensor::matrix({{0.0, 0.0}})) == doctest::Approx(std::log(2.0)));
    CHECK_THROWS_AS(hard_ce(std::vector<int>{2}, Tensor::matrix({{0.0, 0.0}})), UsageError);
    CHECK_THROWS_AS(hard_ce(std::vector<int>{0, 1}, Tensor::matrix({{0.0, 0.0}})), DimensionError);
}

TEST_CASE("soft cross entropy satisfies Gibbs inequality") {
    Rng rng = derive_rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const Tensor target = random_matrix(rng, 1, 5, 3.0);
        const Tensor pred = random_matrix(rng, 1, 5, 3.0);
        const Tensor q = softmax_rows(target);
        const double h = entropy(q.data());
        CHECK(soft_ce(target, pred) >= h - 1e-12);
        CHECK(std::abs(soft_ce(target, target) - h) <= 1e-12);
    }
}

TEST_CASE("soft cross entropy gradient reaches only the prediction") {
    Rng rng = derive_rng(2);
    const Tensor target = random_matrix(rng, 4, 3);
    ParamValues p{{"pred", random_matrix(rng, 4, 3)}};
    CHECK(grad_check([&](Tape& t, const ParamVars& v) { return soft_ce(t, target, v.at("pred")); }, p) < 1e-6);
    CHECK(grad_check([&](Tape& t, const ParamVars& v) { return hard_ce(t, std::vector<int>{0, 2, 1, 1}, v.at("pred")); },
                     p) < 1e-6);
}

TEST_CASE("argmax ties go to the lowest index") {
    CHECK(argmax_rows(Tensor::matrix({{1, 3, 3}, {0, 0, 0}, {5, 1, 5}})) == std::vector<int>{1, 0, 0});
}

TEST_CASE("adam first step matches the bias-corrected update") {
    ParamStore s;
    s.add("w", Tensor::row({1.0, -2.0, 0.5}));
    AdamState state;
    const Tensor g = Tensor::row({0.3, -4.0, 0.0});
    optimizer_step(s, {{"w", g}}, state, 0.1);
    const double eps = 1e-8;
    for (std::size_t i = 0; i < 3; ++i) {
        const double gi = g.data()[i];
        const double expected = (std::vector<double>{1.0, -2.0, 0.5})[i] - 0.1 * gi / (std::abs(gi) + eps);
        CHECK(s.at("w").value.data()[i] == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK(state.at("w").step == 1);
    CHECK_THROWS_AS(optimizer_step(s, {{"nope", g}}, state, 0.1), ContractError);
    CHECK_THROWS_AS(optimizer_step(s, {{"w", Tensor::row({1.0})}}, state, 0.1), DimensionError);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    c.patience = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.val_fraction = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("validation split is stratified per domain") {
    const auto domains = blobs(3, 50, 4);
    const TrainValSplit s = split_train_val(domains, 0.2, 0);
    CHECK(s.val.size() == 30);
    CHECK(s.train.size() == 120);
    const TrainValSplit again = split_train_val(domains, 0.2, 0);
    CHECK(again.val.x == s.val.x);
}

TEST_CASE("erm separates a linearly separable toy set") {
    const auto domains = blobs(2, 200, 7);
    ModelSpec spec;
    spec.hidden = {};
    const ErmResult r = train_erm(spec, quick_config(0), domains);
    const Pool pool = pool_domains(domains);
    const auto pred = argmax_rows(r.model.forward(pool.x));
    double correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == pool.y[i];
    CHECK(correct / pred.size() >= 0.99);
}

TEST_CASE("erm on shuffled labels stays at chance") {
    auto domains = blobs(3, 300, 9);
    Rng rng = derive_rng(99);
    std::uniform_int_distribution<int> label(0, 2);
    for (auto& d : domains)
        for (int& y : d.labels) y = label(rng);
    const ErmResult r = train_erm(ModelSpec{}, quick_config(1), domains);
    const double best_val = r.trace.epochs[r.trace.selected_epoch].val_loss;
    CHECK(best_val >= std::log(3.0) - 0.05);
}

TEST_CASE("erm is deterministic and selects the minimal validation epoch") {
    const auto domains = blobs(2, 100, 3);
    const ErmResult a = train_erm(ModelSpec{}, quick_config(5), domains);
    const ErmResult b = train_erm(ModelSpec{}, quick_config(5), domains);
    CHECK(a.trace.to_csv() == b.trace.to_csv());
    CHECK(a.model.params() == b.model.params());
    for (const auto& e : a.trace.epochs) CHECK(a.trace.epochs[a.trace.selected_epoch].val_loss <= e.val_loss);
    CHECK(a.trace.epochs.front().epoch == 0);
}

TEST_CASE("erm rejects single-class data") {
    auto domains = blobs(2, 20, 1);
    for (auto& d : domains)
        for (int& y : d.labels) y = 1;
    CHECK_THROWS_AS(train_erm(ModelSpec{}, quick_config(0), domains), DegenerateDataError);
}

TEST_CASE("make_frozen_split places the last layer in the predictor") {
    const auto domains = blobs(2, 60, 2);
    ModelSpec spec;
    spec.hidden = {6, 5};
    const ErmResult r = train_erm(spec, quick_config(0), domains);
    const SplitModel s = make_frozen_split(r.model, spec);
    CHECK(s.predictor_is_affine());
    CHECK(s.embedding_dim() == 5);
    CHECK_FALSE(s.any_trainable());
    spec.hidden = {};
    const SplitModel id = make_frozen_split(train_erm(spec, quick_config(0), domains).model, spec);
    CHECK(id.identity_encoder());
}

TEST_CASE("emg training contract") {
    const auto domains = blobs(3, 120, 5);
    ModelSpec spec;
    spec.hidden = {8};
    const ErmResult erm = train_erm(spec, quick_config(0), domains);
    const SplitModel frozen = make_frozen_split(erm.model, spec);
    const std::string checksum = frozen.checksum();
    EmgOptions opts;
    opts.hidden = {6};
    const TrainConfig cfg = quick_config(2);

    const EmgResult r = train_emg(frozen, init_generator(3, 8, opts, 2), domains, MaskGenConfig{}, cfg, false);
    CHECK(frozen.checksum() == checksum);
    CHECK(r.trace.epochs[r.trace.selected_epoch].val_loss <= r.trace.epochs.front().val_loss);

    SUBCASE("deterministic") {
        const EmgResult again = train_emg(frozen, init_generator(3, 8, opts, 2), domains, MaskGenConfig{}, cfg, false);
        CHECK(again.emg.generator.params() == r.emg.generator.params());
        CHECK(again.trace.to_csv() == r.trace.to_csv());
    }
    SUBCASE("domain indices are never consumed") {
        auto relabeled = domains;
        for (auto& d : relabeled) d.domain_index = 40 - d.domain_index;
        const EmgResult other =
            train_emg(frozen, init_generator(3, 8, opts, 2), relabeled, MaskGenConfig{}, cfg, false);
        CHECK(other.emg.generator.params() == r.emg.generator.params());
    }
    SUBCASE("hard targets train too") {
        const EmgResult hard = train_emg(frozen, init_generator(3, 8, opts, 2), domains, MaskGenConfig{}, cfg, true);
        CHECK(frozen.checksum() == checksum);
        CHECK(hard.trace.epochs[hard.trace.selected_epoch].val_loss <= hard.trace.epochs.front().val_loss);
    }
    SUBCASE("unfrozen model is rejected") {
        SplitModel live = split_model(erm.model, 1);
        CHECK_THROWS_AS(train_emg(live, init_generator(3, 8, opts, 2), domains, MaskGenConfig{}, cfg, false),
                        ContractError);
    }
    SUBCASE("generator width must match the embedding") {
        CHECK_THROWS_AS(train_emg(frozen, init_generator(3, 7, opts, 2), domains, MaskGenConfig{}, cfg, false),
                        ConfigError);
    }
}
