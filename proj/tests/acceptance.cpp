// Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when any
// criterion fails.

#include "dispel/commands.hpp"
#include "dispel/eval.hpp"
#include "dispel/globalmask.hpp"
#include "dispel/grad_check.hpp"
#include "dispel/losses.hpp"
#include "dispel/mask.hpp"
#include "dispel/rng.hpp"
#include "dispel/synthbench.hpp"
#include "dispel/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

using namespace dispel;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool pass, double seconds, const std::string& detail) {
    std::printf("%s criterion %d (%.2fs): %s\n", pass ? "PASS" : "FAIL", id, seconds, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Tensor gaussian(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Tensor t = Tensor::zeros({r, c});
    for (double& v : t.data()) v = n(rng);
    return t;
}

ParamValues values_of(const Mlp& m) {
    ParamValues out;
    for (const auto& [name, e] : m.params().entries()) out[name] = e.value;
    return out;
}

// Forward pass of an MLP written against named tape variables, so grad_check
// can perturb every parameter.
Var mlp_on_tape(Tape& t, const std::vector<std::size_t>& sizes, Activation out_act, const ParamVars& p,
                const std::string& prefix, Var x) {
    const std::size_t layers = sizes.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        x = t.add_row(t.matmul(x, p.at(prefix + Mlp::weight_name(l))), p.at(prefix + Mlp::bias_name(l)));
        if (l + 1 < layers) x = t.relu(x);
    }
    if (out_act == Activation::Sigmoid) x = t.sigmoid(x);
    if (out_act == Activation::Relu) x = t.relu(x);
    return x;
}

// True when any hidden pre-activation lies within `margin` of the relu kink.
bool near_kink(const Mlp& m, const Tensor& x, double margin) {
    Tensor h = x;
    for (std::size_t l = 0; l + 1 < m.num_layers(); ++l) {
        h = matmul_values(h, m.params().at(Mlp::weight_name(l)).value);
        const Tensor& b = m.params().at(Mlp::bias_name(l)).value;
        for (std::size_t i = 0; i < h.rows(); ++i)
            for (std::size_t j = 0; j < h.cols(); ++j) {
                h(i, j) += b(0, j);
                if (std::abs(h(i, j)) < margin) return true;
                h(i, j) = std::max(h(i, j), 0.0);
            }
    }
    return false;
}

void criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = derive_rng(2024, {1});
    std::uniform_int_distribution<std::size_t> width(2, 6);
    double worst = 0.0;
    int networks = 0, emg_networks = 0;
    while (networks < 50) {
        const std::size_t in = width(rng), hidden = width(rng), emb = width(rng), classes = width(rng);
        const std::size_t n = 4;
        const Tensor x = gaussian(rng, n, in);
        const std::uint64_t seed = rng();
        if (networks % 2 == 0) {
            // Plain classifier: hard cross-entropy through a 2- or 3-layer net.
            std::vector<std::size_t> sizes{in, hidden};
            if (networks % 4 == 0) sizes.push_back(emb);
            sizes.push_back(classes);
            const Mlp model = Mlp::init(sizes, seed);
            if (near_kink(model, x, 1e-3)) continue;
            std::vector<int> y(n);
            for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % classes);
            const double err = grad_check(
                [&](Tape& t, const ParamVars& p) {
                    return hard_ce(t, y, mlp_on_tape(t, sizes, Activation::Identity, p, "", t.constant(x)));
                },
                values_of(model));
            worst = std::max(worst, err);
        } else {
            // Full mask pipeline: frozen encoder/predictor, trainable generator,
            // Gumbel noise held fixed, soft cross-entropy against c(z).
            const Mlp base = Mlp::init({in, emb, classes}, seed);
            const SplitModel split = [&] {
                SplitModel s = split_model(base, 1);
                s.freeze();
                return s;
            }();
            const std::vector<std::size_t> gsizes{in, hidden, emb};
            const Mlp gen = Mlp::init(gsizes, seed + 1, Activation::Sigmoid);
            if (near_kink(gen, x, 1e-3)) continue;
            const Tensor z = split.embed(x);
            const Tensor target = split.predict_logits(z);
            const Tensor h = gumbel_sample(rng, {n, emb});
            const Tensor hp = gumbel_sample(rng, {n, emb});
            const double tau = networks % 3 == 0 ? 0.5 : 1.0;
            const double err = grad_check(
                [&](Tape& t, const ParamVars& p) {
                    Var probs = mlp_on_tape(t, gsizes, Activation::Sigmoid, p, "", t.constant(x));
                    Var m = gumbel_softmax_mask(t, probs, h, hp, tau);
                    Var logits = split.predict_logits(t, apply_mask(t, m, t.constant(z)));
                    return soft_ce(t, target, logits);
                },
                values_of(gen));
            worst = std::max(worst, err);
            ++emg_networks;
        }
        ++networks;
    }
    const double secs = elapsed(t0);
    report(1, worst < 1e-4 && secs < 30.0, secs,
           fmt("%d networks (%d mask pipelines), max relative error %.3g (< 1e-4)", networks, emg_networks, worst));
}

void criterion_gumbel_max() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = derive_rng(2024, {2});
    const std::size_t n = 100000;
    bool ok = true;
    std::string detail;
    for (double p : {0.1, 0.5, 0.9}) {
        const Tensor probs = Tensor::filled({n}, p);
        const Tensor m = gumbel_softmax_mask(probs, gumbel_sample(rng, {n}), gumbel_sample(rng, {n}), 0.01);
        double kept = 0.0;
        for (double v : m.data()) kept += v > 0.5;
        const double rate = kept / n;
        const double tol = 3.0 * std::sqrt(p * (1.0 - p) / n);
        ok = ok && std::abs(rate - (1.0 - p)) <= tol;
        detail += fmt("p=%.1f keep %.5f (target %.1f +- %.5f); ", p, rate, 1.0 - p, tol);
    }
    const double secs = elapsed(t0);
    report(2, ok && secs < 30.0, secs, detail);
}

void criterion_closed_forms() {
    const auto t0 = std::chrono::steady_clock::now();
    auto mask = [](double p, double tau) {
        MaskGenConfig c;
        c.tau = tau;
        return inference_mask(Tensor::row({p}), c).data()[0];
    };
    bool ok = true;
    int checked = 0;
    for (int i = 1; i < 1000; ++i) {
        const double p = i / 1000.0;
        ok = ok && mask(p, 1.0) == 1.0 - p;
        ++checked;
    }
    for (double tau : {1e-4, 1e-3, 0.01, 0.1, 0.5, 1.0, 2.0, 10.0}) {
        ok = ok && mask(0.5, tau) == 0.5;
        ++checked;
    }
    const double v = mask(0.2, 0.5);
    ok = ok && std::abs(v - 0.64 / 0.68) <= 1e-12 && std::abs(v - 0.9411764705882353) <= 1e-12;
    report(3, ok, elapsed(t0),
           fmt("%d exact identities checked; tau=0.5, p=0.2 gives %.16f", checked, v));
}

void criterion_bound() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = derive_rng(2024, {4});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> width(2, 12);
    std::size_t violations[2] = {0, 0}, samples = 0;
    double max_slack = -1e300;
    for (int inst = 0; inst < 1000; ++inst) {
        const std::size_t d = width(rng), c = width(rng), n = 8;
        ParamStore p;
        p.add("layer0.weight", gaussian(rng, d, c));
        p.add("layer0.bias", gaussian(rng, 1, c));
        const Mlp predictor({d, c}, Activation::Identity, p);
        const Tensor z = gaussian(rng, n, d, 2.0);
        Tensor m = Tensor::zeros({n, d});
        for (double& v : m.data()) v = u(rng);
        std::vector<std::size_t> sh, sp;
        for (std::size_t k = 0; k < d; ++k) (u(rng) < 0.5 ? sh : sp).push_back(k);
        for (int k = 0; k < 2; ++k) {
            const BoundReport r = bound_terms(predictor, z, m, sh, sp, k == 0 ? DistanceKind::L2 : DistanceKind::L1);
            violations[k] += r.violation_count;
            max_slack = std::max(max_slack, r.max_slack_used);
        }
        samples += n;
    }
    const double secs = elapsed(t0);
    report(4, violations[0] == 0 && violations[1] == 0 && secs < 10.0, secs,
           fmt("1000 instances, %zu samples per distance; violations L2=%zu L1=%zu; max GE-(sh+sp) %.3g",
               samples, violations[0], violations[1], max_slack));
}

struct SeedRun {
    double erm_train, erm_unseen, emg_train, emg_unseen;
    double mean_mask;
};

void criterion_emg_gain() {
    const auto t0 = std::chrono::steady_clock::now();
    const Benchmark b = generate_benchmark(BenchmarkSpec{}, 0);
    const Pool train_pool = pool_domains(b.train);
    const ModelSpec spec;
    const EmgOptions opts;
    std::vector<SeedRun> runs;
    for (std::uint64_t s : {0u, 1u, 2u}) {
        TrainConfig cfg;
        cfg.seed = s;
        const ErmResult erm = train_erm(spec, cfg, b.train);
        const SplitModel split = make_frozen_split(erm.model, spec);
        const EmgResult emg = train_emg(split, init_generator(split.input_dim(), split.embedding_dim(), opts, s),
                                        b.train, MaskGenConfig{}, cfg, opts.hard_target);
        const Tensor masks = emg.emg.inference_masks(b.unseen.features);
        double mean_mask = 0.0;
        for (double v : masks.data()) mean_mask += v;
        mean_mask /= static_cast<double>(masks.numel());
        runs.push_back({accuracy(split, NoMask{}, train_pool), accuracy(split, NoMask{}, b.unseen),
                        accuracy(split, EmgMask{emg.emg}, train_pool), accuracy(split, EmgMask{emg.emg}, b.unseen),
                        mean_mask});
    }
    double gap = 0, gain = 0, drop = 0;
    bool gap_each = true;
    std::string per_seed;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i];
        gap_each = gap_each && r.erm_unseen < r.erm_train;
        gap += (r.erm_train - r.erm_unseen) / 3.0;
        gain += (r.emg_unseen - r.erm_unseen) / 3.0;
        drop += (r.erm_train - r.emg_train) / 3.0;
        per_seed += fmt(" [seed %zu: train %.4f->%.4f unseen %.4f->%.4f mean mask %.6f]", i, r.erm_train,
                        r.emg_train, r.erm_unseen, r.emg_unseen, r.mean_mask);
    }
    const bool a = gap_each, bb = gain >= 0.02, c = drop <= 0.02;
    const double secs = elapsed(t0);
    report(5, a && bb && c && secs < 300.0, secs,
           fmt("(a) domain gap %.4f %s; (b) mean unseen gain %.4f (>= 0.02) %s; (c) mean train drop %.4f (<= 0.02) %s;",
               gap, a ? "ok" : "missing", gain, bb ? "ok" : "not met", drop, c ? "ok" : "not met") +
               per_seed);
}

void criterion_global_sweep() {
    const auto t0 = std::chrono::steady_clock::now();
    const Benchmark b = generate_benchmark(BenchmarkSpec{}, 0);
    const ModelSpec spec;
    TrainConfig cfg;
    cfg.seed = 0;
    const SplitModel split = make_frozen_split(train_erm(spec, cfg, b.train).model, spec);
    const auto grid = default_percent_grid();
    const SweepTable t = sweep_mask_percent(split, b.train, b.unseen, grid, 5, 0);
    const double unmasked = accuracy(split, NoMask{}, b.unseen);
    const std::vector<double> ones(split.embedding_dim(), 1.0);
    const bool bitwise = t.rows.front().percent == 0.0 && t.rows.front().unseen_accuracy == unmasked &&
                         masked_logits(split, GlobalMask{ones}, b.unseen.features) ==
                             masked_logits(split, NoMask{}, b.unseen.features);
    double best = -1, best_p = 0;
    for (const auto& r : t.rows)
        if (r.percent > 0 && r.unseen_accuracy > best) {
            best = r.unseen_accuracy;
            best_p = r.percent;
        }
    const bool improves = best > t.rows.front().unseen_accuracy;
    report(6, bitwise && improves, elapsed(t0),
           fmt("p=0 unseen %.4f (bitwise equal to unmasked: %s); best p>0 is %g%% with %.4f", unmasked,
               bitwise ? "yes" : "no", best_p, best));
}

void criterion_freeze() {
    const auto t0 = std::chrono::steady_clock::now();
    const Benchmark b = generate_benchmark(BenchmarkSpec{}, 0);
    const ModelSpec spec;
    TrainConfig cfg;
    const SplitModel split = make_frozen_split(train_erm(spec, cfg, b.train).model, spec);
    bool ok = true;
    std::string first_before;
    for (std::uint64_t s = 0; s < 5; ++s) {
        cfg.seed = s;
        const std::string before = split.checksum();
        const ParamStore params_before = split.merged_params();
        train_emg(split, init_generator(split.input_dim(), split.embedding_dim(), EmgOptions{}, s), b.train,
                  MaskGenConfig{}, cfg, false);
        ok = ok && before == split.checksum() && params_before == split.merged_params();
        if (s == 0) first_before = before;
        ok = ok && before == first_before;
    }
    report(7, ok, elapsed(t0), "g and c checksum " + first_before.substr(0, 16) + "... unchanged across 5 seeds");
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_determinism() {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path root = fs::temp_directory_path() / ("dispel_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const char* steps[][2] = {{"gen-data", "data"},      {"train-erm", "base"},     {"train-emg", "emg"},
                              {"eval", "eval_none"},     {"eval", "eval_emg"},      {"sweep-global", "sweep"},
                              {"export-embeddings", "export"}};
    auto pipeline = [&](const fs::path& dir) {
        for (const auto& [cmd, out] : steps) {
            CommandContext ctx;
            ctx.config = RunConfig::parse("seed = 0\n");
            ctx.config.set("data.dir=" + (dir / "data").string());
            ctx.config.set("base.dir=" + (dir / "base").string());
            ctx.config.set("emg.dir=" + (dir / "emg").string());
            ctx.config.set("out.dir=" + (dir / out).string());
            if (std::string(out) != "eval_none") ctx.config.set("eval.mode=emg");
            ctx.config.set("export.masks=true");
            std::ostringstream err;
            if (run_command_guarded(cmd, ctx, err) != 0) throw std::runtime_error(err.str());
        }
    };
    bool ok = true;
    std::size_t compared = 0;
    std::string detail;
    try {
        pipeline(root / "a");
        pipeline(root / "b");
        for (const auto& [cmd, out] : steps) {
            const auto files = artifact_checksums(root / "a" / out);
            ok = ok && verify_manifest(root / "a" / out) && verify_manifest(root / "b" / out);
            for (const auto& [name, _] : files) {
                if (name.rfind("config.", 0) == 0) continue;  // echoes the run's own paths
                ++compared;
                if (read_bytes(root / "a" / out / name) != read_bytes(root / "b" / out / name)) {
                    ok = false;
                    detail += " differs: " + std::string(out) + "/" + name;
                }
            }
        }
    } catch (const std::exception& e) {
        ok = false;
        detail += std::string(" pipeline error: ") + e.what();
    }
    fs::remove_all(root);
    report(8, ok && compared > 0, elapsed(t0),
           fmt("%zu metric and artifact files compared across two identical runs", compared) + detail);
}

}  // namespace

int main() {
    const std::pair<const char*, std::function<void()>> criteria[] = {
        {"gradients", criterion_gradients},   {"gumbel-max", criterion_gumbel_max},
        {"closed forms", criterion_closed_forms}, {"bound", criterion_bound},
        {"emg gain", criterion_emg_gain},     {"global sweep", criterion_global_sweep},
        {"freeze", criterion_freeze},         {"determinism", criterion_determinism},
    };
    int id = 0;
    for (const auto& [name, fn] : criteria) {
        ++id;
        try {
            fn();
        } catch (const std::exception& e) {
            report(id, false, 0.0, std::string(name) + " raised: " + e.what());
        }
    }
    std::printf("%d of %zu criteria failed\n", failures, std::size(criteria));
    return failures == 0 ? 0 : 1;
}
