#include "dispel/train.hpp"

#include "dispel/error.hpp"
#include "dispel/losses.hpp"
#include "dispel/rng.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

namespace dispel {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
}

std::string TrainTrace::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,train_loss,val_loss\n";
    for (const auto& e : epochs) os << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
    return os.str();
}

void TrainTrace::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_csv();
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::size_t> ModelSpec::layer_sizes(std::size_t input_dim, std::size_t num_classes) const {
    std::vector<std::size_t> sizes{input_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(num_classes);
    return sizes;
}

namespace {

using BatchLoss = std::function<Var(Tape&, const Mlp&, std::span<const std::size_t>)>;
using EvalLoss = std::function<double(const Mlp&)>;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Mini-batch loop with patience-based early stopping. On return `model`
// holds the parameters of the selected (best validation) epoch.
TrainTrace fit(Mlp& model, std::size_t n_train, const BatchLoss& batch_loss, const EvalLoss& train_eval,
               const EvalLoss& val_eval, const TrainConfig& cfg, std::uint64_t stream) {
    if (n_train == 0) throw DegenerateDataError("no training rows left after the validation split");
    TrainTrace trace;
    auto t0 = std::chrono::steady_clock::now();
    trace.epochs.push_back({0, train_eval(model), val_eval(model), seconds_since(t0)});
    double best_val = trace.epochs.front().val_loss;
    ParamStore best_params = model.params();
    std::size_t since_best = 0;
    AdamState state;

    std::vector<std::size_t> order(n_train);
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        t0 = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = derive_rng(cfg.seed, {stream, 0x736875ULL, epoch});
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            const std::size_t end = std::min(n_train, start + cfg.batch_size);
            std::span<const std::size_t> rows(order.data() + start, end - start);
            Tape tape;
            Var loss = batch_loss(tape, model, rows);
            const GradMap grads = tape.backward(loss);
            optimizer_step(model.params(), grads, state, cfg.learning_rate, cfg.adam);
            loss_sum += loss.value().item() * static_cast<double>(rows.size());
        }
        const double val = val_eval(model);
        trace.epochs.push_back({epoch, loss_sum / static_cast<double>(n_train), val, seconds_since(t0)});
        if (val < best_val) {
            best_val = val;
            best_params = model.params();
            trace.selected_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    model.params() = best_params;
    return trace;
}

}  // namespace

ErmResult train_erm(const ModelSpec& spec, const TrainConfig& cfg, std::span<const DomainDataset> domains) {
    cfg.validate();
    if (domains.empty()) throw UsageError("train_erm needs at least one training domain");
    std::set<int> classes;
    for (const auto& d : domains) classes.insert(d.labels.begin(), d.labels.end());
    if (classes.size() < 2)
        throw DegenerateDataError("training data holds " + std::to_string(classes.size()) +
                                  " distinct class(es); need at least 2");
    const std::size_t num_classes = infer_num_classes(domains);
    const std::size_t input_dim = domains.front().num_features();

    const TrainValSplit split = split_train_val(domains, cfg.val_fraction, cfg.seed);
    Mlp model = Mlp::init(spec.layer_sizes(input_dim, num_classes), derive_rng(cfg.seed, {0x65726dULL})());

    const Pool& tr = split.train;
    const Pool& va = split.val;
    BatchLoss batch_loss = [&](Tape& tape, const Mlp& m, std::span<const std::size_t> rows) {
        std::vector<int> yb;
        yb.reserve(rows.size());
        for (auto r : rows) yb.push_back(tr.y[r]);
        Var logits = m.forward(tape, tape.constant(tr.x.gather_rows(rows)));
        return hard_ce(tape, yb, logits);
    };
    EvalLoss train_eval = [&](const Mlp& m) { return hard_ce(tr.y, m.forward(tr.x)); };
    EvalLoss val_eval = [&](const Mlp& m) {
        return va.size() ? hard_ce(va.y, m.forward(va.x)) : hard_ce(tr.y, m.forward(tr.x));
    };
    TrainTrace trace = fit(model, tr.size(), batch_loss, train_eval, val_eval, cfg, 0x65726dULL);
    return {std::move(model), std::move(trace)};
}

SplitModel make_frozen_split(const Mlp& model, const ModelSpec& spec) {
    SplitModel split = model.num_layers() == 1
                           ? identity_split(model)
                           : split_model(model, spec.split_index.value_or(model.num_layers() - 1));
    split.freeze();
    return split;
}

Mlp init_generator(std::size_t input_dim, std::size_t embedding_dim, const EmgOptions& opts, std::uint64_t seed) {
    std::vector<std::size_t> sizes{input_dim};
    sizes.insert(sizes.end(), opts.hidden.begin(), opts.hidden.end());
    sizes.push_back(embedding_dim);
    return Mlp::init(std::move(sizes), derive_rng(seed, {0x656d67ULL})(), Activation::Sigmoid);
}

EmgResult train_emg(const SplitModel& frozen, Mlp generator, std::span<const DomainDataset> domains,
                    const MaskGenConfig& mask_cfg, const TrainConfig& cfg, bool hard_target) {
    cfg.validate();
    mask_cfg.validate();
    if (frozen.any_trainable())
        throw ContractError("encoder/predictor must be frozen before training the mask generator");
    if (domains.empty()) throw UsageError("train_emg needs at least one training domain");
    const std::size_t d = frozen.embedding_dim();
    if (generator.output_dim() != d)
        throw ConfigError("mask generator emits " + std::to_string(generator.output_dim()) +
                          " dimensions but the embedding has " + std::to_string(d));
    if (generator.input_dim() != frozen.input_dim())
        throw ConfigError("mask generator input width does not match the encoder input");
    const std::string checksum_before = frozen.checksum();

    const TrainValSplit split = split_train_val(domains, cfg.val_fraction, cfg.seed);
    const Pool& tr = split.train;
    const Pool& va = split.val;

    // g and c are fixed, so embeddings and unmasked logits are computed once.
    const Tensor z_tr = frozen.embed(tr.x);
    const Tensor y_tr = frozen.predict_logits(z_tr);
    const Tensor z_va = va.size() ? frozen.embed(va.x) : z_tr;
    const Tensor y_va = va.size() ? frozen.predict_logits(z_va) : y_tr;
    const Tensor& x_va = va.size() ? va.x : tr.x;

    auto objective = [&](Tape& tape, Var pred, const Tensor& target) {
        return hard_target ? hard_ce(tape, argmax_rows(target), pred) : soft_ce(tape, target, pred);
    };
    auto masked_loss = [&](Tape& tape, const Mlp& g, const Tensor& x, const Tensor& z, const Tensor& target,
                           Rng& rng) {
        MaskSample s = training_mask(tape, g, tape.constant(x), d, mask_cfg, rng);
        Var zm = apply_mask(tape, s.m, tape.constant(z));
        return objective(tape, frozen.predict_logits(tape, zm), target);
    };

    Rng noise_rng = derive_rng(cfg.seed, {0x6e6f697365ULL});
    BatchLoss batch_loss = [&](Tape& tape, const Mlp& g, std::span<const std::size_t> rows) {
        return masked_loss(tape, g, tr.x.gather_rows(rows), z_tr.gather_rows(rows), y_tr.gather_rows(rows),
                           noise_rng);
    };
    // Evaluation reuses one fixed noise draw so epochs are compared on equal terms.
    auto fixed_noise_eval = [&](const Tensor& x, const Tensor& z, const Tensor& target, std::uint64_t tag) {
        return [&masked_loss, &cfg, px = &x, pz = &z, pt = &target, tag](const Mlp& g) {
            Rng rng = derive_rng(cfg.seed, {0x6576616cULL, tag});
            Tape tape;
            return masked_loss(tape, g, *px, *pz, *pt, rng).value().item();
        };
    };
    EvalLoss train_eval = fixed_noise_eval(tr.x, z_tr, y_tr, 1);
    EvalLoss val_eval = fixed_noise_eval(x_va, z_va, y_va, 2);

    TrainTrace trace = fit(generator, tr.size(), batch_loss, train_eval, val_eval, cfg, 0x656d67ULL);

    if (frozen.checksum() != checksum_before)
        throw ContractError("frozen encoder/predictor changed during mask generator training");
    return {EmgModel{std::move(generator), mask_cfg}, std::move(trace)};
}

}  // namespace dispel
