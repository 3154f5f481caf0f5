#include "dispel/commands.hpp"

#include "dispel/checksum.hpp"
#include "dispel/globalmask.hpp"
#include "dispel/synthbench.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <sstream>

namespace dispel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("missing artifact: " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw CorruptFileError("cannot parse " + path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

fs::path required_dir(const RunConfig& cfg, const std::string& key) {
    if (!cfg.is_set(key)) throw MissingArtifactError("'" + key + "' is not set");
    fs::path dir = cfg.get(key);
    if (!fs::is_directory(dir)) throw MissingArtifactError(key + " does not exist: " + dir.string());
    return dir;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

constexpr const char* kManifest = "manifest.json";
constexpr const char* kLog = "log.txt";

// Output side of a command. Created only after every input has been loaded.
class RunDir {
public:
    RunDir(fs::path dir, std::string command, const RunConfig& cfg)
        : dir_(std::move(dir)), command_(std::move(command)), cfg_(cfg),
          t0_(std::chrono::steady_clock::now()) {
        fs::create_directories(dir_);
        write_manifest("incomplete");
        log("start");
    }

    fs::path path(const std::string& name) const { return dir_ / name; }
    void write(const std::string& name, const std::string& text) const { write_text(path(name), text); }

    void finish() {
        write("config." + command_ + ".txt", cfg_.snapshot());
        write_manifest("complete");
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
        char buf[64];
        std::snprintf(buf, sizeof buf, "done seconds=%.3f", secs);
        log(buf);
    }

    void log(const std::string& msg) const {
        std::ofstream out(path(kLog), std::ios::binary | std::ios::app);
        out << utc_now() << " command=" << command_ << ' ' << msg << '\n';
    }

private:
    void write_manifest(const std::string& status) const {
        json m = {{"format", "dispel-run-v1"},
                  {"status", status},
                  {"command", command_},
                  {"artifacts", status == "complete" ? json(artifact_checksums(dir_)) : json::object()}};
        write(kManifest, dump(m));
    }

    fs::path dir_;
    std::string command_;
    const RunConfig& cfg_;
    std::chrono::steady_clock::time_point t0_;
};

BenchmarkSpec bench_spec(const RunConfig& c) {
    BenchmarkSpec s;
    s.num_classes = c.get_uint("bench.num_classes");
    s.shared_dims = c.get_uint("bench.shared_dims");
    s.specific_dims = c.get_uint("bench.specific_dims");
    s.num_train_domains = c.get_uint("bench.num_train_domains");
    s.samples_per_domain = c.get_uint("bench.samples_per_domain");
    s.unseen_samples = c.get_uint("bench.unseen_samples");
    s.spurious_strength = c.get_double("bench.spurious_strength");
    s.noise_sigma = c.get_double("bench.noise_sigma");
    s.mixing = c.get_bool("bench.mixing");
    s.validate();
    return s;
}

TrainConfig train_config(const RunConfig& c, std::uint64_t seed) {
    TrainConfig t;
    t.batch_size = c.get_uint("train.batch_size");
    t.learning_rate = c.get_double("train.learning_rate");
    t.max_epochs = c.get_uint("train.max_epochs");
    t.patience = c.get_uint("train.patience");
    t.val_fraction = c.get_double("train.val_fraction");
    t.seed = seed;
    t.validate();
    return t;
}

ModelSpec model_spec(const RunConfig& c) {
    ModelSpec m;
    m.hidden = c.get_uint_list("model.hidden");
    if (c.is_set("model.split_index")) m.split_index = c.get_uint("model.split_index");
    return m;
}

MaskGenConfig mask_config(const RunConfig& c, std::uint64_t seed) {
    MaskGenConfig m;
    m.tau = c.get_double("mask.tau");
    m.inference_mode = inference_mode_from_string(c.get("mask.inference_mode"));
    m.samples = c.get_uint("mask.samples");
    m.uniform_clamp_eps = c.get_double("mask.uniform_clamp_eps");
    m.sample_seed = seed;
    m.validate();
    return m;
}

EmgOptions emg_options(const RunConfig& c) {
    EmgOptions o;
    o.hidden = c.get_uint_list("emg.hidden");
    o.hard_target = c.get_bool("emg.hard_target");
    return o;
}

// Report-facing config: directory keys are dropped so metrics do not depend
// on where a run was written.
json metrics_config(const RunConfig& c) {
    json j = json::object();
    for (const auto& key : RunConfig::known_keys())
        if (key.size() < 4 || key.compare(key.size() - 4, 4, ".dir") != 0) j[key] = c.get(key);
    return j;
}

std::string train_name(std::size_t i) { return "train_" + std::to_string(i); }

AccuracyMap accuracy_map(const SplitModel& model, const MaskSource& source, const LoadedData& data) {
    AccuracyMap acc;
    for (std::size_t i = 0; i < data.train.size(); ++i) acc[train_name(i)] = accuracy(model, source, data.train[i]);
    acc["train_pooled"] = accuracy(model, source, pool_domains(data.train));
    acc["unseen"] = accuracy(model, source, data.unseen);
    return acc;
}

json accuracy_json(const AccuracyMap& acc) {
    json j = json::object();
    for (const auto& [k, v] : acc) j[k] = v;
    return j;
}

void write_benchmark(const RunDir& rd, const Benchmark& b, const BenchmarkSpec& spec, std::uint64_t seed) {
    json index = {{"format", "dispel-data-v1"}, {"train", json::array()}, {"unseen", "unseen.csv"},
                  {"oracle", "oracle.json"}};
    for (std::size_t i = 0; i < b.train.size(); ++i) {
        const std::string name = train_name(i) + ".csv";
        write_csv_dataset(b.train[i], rd.path(name));
        index["train"].push_back(name);
    }
    write_csv_dataset(b.unseen, rd.path("unseen.csv"));
    write_oracle(b.oracle, rd.path("oracle.json"));
    rd.write("data.json", dump(index));
    json meta = {{"seed", seed},
                 {"num_classes", spec.num_classes},
                 {"shared_dims", spec.shared_dims},
                 {"specific_dims", spec.specific_dims},
                 {"num_train_domains", spec.num_train_domains},
                 {"samples_per_domain", spec.samples_per_domain},
                 {"unseen_samples", spec.unseen_samples},
                 {"spurious_strength", spec.spurious_strength},
                 {"noise_sigma", spec.noise_sigma},
                 {"mixing", spec.mixing}};
    rd.write("benchmark.json", dump(meta));
}

void write_base(const fs::path& dir, const Mlp& model, const SplitModel& split) {
    save_params(model.params(), dir / "base");
    const std::size_t split_index = split.identity_encoder() ? 0 : split.encoder()->num_layers();
    json meta = {{"format", "dispel-base-v1"},
                 {"layer_sizes", model.layer_sizes()},
                 {"split_index", split_index},
                 {"checksum", split.checksum()}};
    write_text(dir / "base.json", dump(meta));
}

void write_emg(const fs::path& dir, const EmgModel& emg, const SplitModel& base) {
    save_params(emg.generator.params(), dir / "emg");
    json meta = {{"format", "dispel-emg-v1"},
                 {"layer_sizes", emg.generator.layer_sizes()},
                 {"mask",
                  {{"tau", emg.mask.tau},
                   {"inference_mode", to_string(emg.mask.inference_mode)},
                   {"samples", emg.mask.samples},
                   {"uniform_clamp_eps", emg.mask.uniform_clamp_eps},
                   {"sample_seed", emg.mask.sample_seed}}},
                 {"base_checksum", base.checksum()}};
    write_text(dir / "emg.json", dump(meta));
}

std::string scores_csv(std::span<const double> scores) {
    std::ostringstream os;
    os << "dim,score\n";
    char buf[64];
    for (std::size_t k = 0; k < scores.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", k, scores[k]);
        os << buf;
    }
    return os.str();
}

struct MaskChoice {
    MaskSource source;
    json info = json::object();
};

// eval.mode: none | global | emg
MaskChoice mask_choice(const CommandContext& ctx, const SplitModel& base, const LoadedData& data) {
    const RunConfig& c = ctx.config;
    const std::string mode = c.get("eval.mode");
    MaskChoice out;
    out.info["mode"] = mode;
    if (mode == "none") {
        out.source = NoMask{};
    } else if (mode == "emg") {
        EmgModel emg = load_emg_model(required_dir(c, "emg.dir"), base);
        out.info["emg_checksum"] = emg.generator.params().checksum();
        out.source = EmgMask{std::move(emg)};
    } else if (mode == "global") {
        if (!c.is_set("global.percent")) throw ConfigError("eval.mode=global needs global.percent");
        const auto report = permutation_importance(base, data.train, c.get_uint("importance.repeats"), c.seed(),
                                                   ctx.jobs);
        auto mask = global_mask_from_scores(report.scores, c.get_double("global.percent"));
        out.info["global_mask"] = mask;
        out.info["importance"] = report.scores;
        out.source = GlobalMask{std::move(mask)};
    } else {
        throw ConfigError("unknown eval.mode '" + mode + "' (none|global|emg)");
    }
    return out;
}

const DomainDataset& pick_domain(const LoadedData& data, const std::string& name) {
    if (name == "unseen") return data.unseen;
    for (std::size_t i = 0; i < data.train.size(); ++i)
        if (name == train_name(i)) return data.train[i];
    throw ConfigError("unknown domain '" + name + "' (unseen|train_<i>)");
}

void cmd_gen_data(const CommandContext& ctx) {
    const RunConfig& c = ctx.config;
    const BenchmarkSpec spec = bench_spec(c);
    const Benchmark b = generate_benchmark(spec, c.seed());
    RunDir rd(resolve_out_dir(c), "gen-data", c);
    write_benchmark(rd, b, spec, c.seed());
    rd.finish();
}

void cmd_train_erm(const CommandContext& ctx) {
    const RunConfig& c = ctx.config;
    const LoadedData data = load_data_dir(required_dir(c, "data.dir"));
    const ModelSpec spec = model_spec(c);
    const ErmResult erm = train_erm(spec, train_config(c, c.seed()), data.train);
    const SplitModel split = make_frozen_split(erm.model, spec);
    const AccuracyMap acc = accuracy_map(split, NoMask{}, data);

    RunDir rd(resolve_out_dir(c), "train-erm", c);
    write_base(resolve_out_dir(c), erm.model, split);
    erm.trace.write_csv(rd.path("erm_trace.csv"));
    rd.write("erm_metrics.json", dump({{"accuracy", accuracy_json(acc)},
                                       {"selected_epoch", erm.trace.selected_epoch},
                                       {"config", metrics_config(c)}}));
    rd.finish();
}

void cmd_train_emg(const CommandContext& ctx) {
    const RunConfig& c = ctx.config;
    const SplitModel base = load_base_model(required_dir(c, "base.dir"));
    const LoadedData data = load_data_dir(required_dir(c, "data.dir"));
    const EmgOptions opts = emg_options(c);
    const std::string before = base.checksum();
    Mlp generator = init_generator(base.input_dim(), base.embedding_dim(), opts, c.seed());
    const EmgResult res =
        train_emg(base, std::move(generator), data.train, mask_config(c, c.seed()), train_config(c, c.seed()),
                  opts.hard_target);
    const AccuracyMap acc = accuracy_map(base, EmgMask{res.emg}, data);

    RunDir rd(resolve_out_dir(c), "train-emg", c);
    write_emg(resolve_out_dir(c), res.emg, base);
    res.trace.write_csv(rd.path("emg_trace.csv"));
    rd.write("freeze.json", dump({{"before", before}, {"after", base.checksum()}}));
    rd.write("emg_metrics.json", dump({{"accuracy", accuracy_json(acc)},
                                       {"selected_epoch", res.trace.selected_epoch},
                                       {"config", metrics_config(c)}}));
    rd.finish();
}

void cmd_eval(const CommandContext& ctx) {
    const RunConfig& c = ctx.config;
    const SplitModel base = load_base_model(required_dir(c, "base.dir"));
    const LoadedData data = load_data_dir(required_dir(c, "data.dir"));
    const MaskChoice choice = mask_choice(ctx, base, data);
    const AccuracyMap acc = accuracy_map(base, choice.source, data);
    const std::uint64_t seed = c.seed();
    RunReport report = aggregate_runs(std::span(&acc, 1), std::span(&seed, 1));
    report.config = metrics_config(c);
    report.artifacts["base_checksum"] = base.checksum();
    if (choice.info.contains("emg_checksum")) report.artifacts["emg_checksum"] = choice.info["emg_checksum"];

    RunDir rd(resolve_out_dir(c), "eval", c);
    report.write(rd.path("report.json"));
    if (choice.info.contains("global_mask")) rd.write("global_mask.json", dump(choice.info));
    rd.finish();
}

void cmd_sweep_global(const CommandContext& ctx) {
    const RunConfig& c = ctx.config;
    const SplitModel base = load_base_model(required_dir(c, "base.dir"));
    const LoadedData data = load_data_dir(required_dir(c, "data.dir"));
    const std::vector<double> grid = c.get_double_list("sweep.grid");
    const SweepTable table =
        sweep_mask_percent(base, data.train, data.unseen, grid, c.get_uint("importance.repeats"), c.seed(), ctx.jobs);

    RunDir rd(resolve_out_dir(c), "sweep-global", c);
    table.write_csv(rd.path("sweep.csv"));
    rd.write("importance.csv", scores_csv(table.importance.scores));
    rd.finish();
}

void cmd_bound_check(const CommandContext& ctx) {
    const RunConfig& c = ctx.config;
    const SplitModel base = load_base_model(required_dir(c, "base.dir"));
    const LoadedData data = load_data_dir(required_dir(c, "data.dir"));
    if (!data.oracle) throw ContractError("bound-check needs a dataset with a feature oracle");
    const MaskChoice choice = mask_choice(ctx, base, data);
    const DomainDataset& domain = pick_domain(data, c.get("bound.domain"));
    const BoundReport report = bound_terms(base, choice.source, domain, *data.oracle,
                                           distance_kind_from_string(c.get("bound.distance")));
    json out = report.to_json();
    out["domain"] = c.get("bound.domain");
    out["mask_mode"] = c.get("eval.mode");

    RunDir rd(resolve_out_dir(c), "bound-check", c);
    rd.write("bound.json", dump(out));
    rd.finish();
}

void cmd_export_embeddings(const CommandContext& ctx) {
    const RunConfig& c = ctx.config;
    const SplitModel base = load_base_model(required_dir(c, "base.dir"));
    const LoadedData data = load_data_dir(required_dir(c, "data.dir"));
    const MaskChoice choice = mask_choice(ctx, base, data);
    std::vector<std::pair<std::string, const DomainDataset*>> targets;
    if (c.get("export.domain") == "all") {
        for (std::size_t i = 0; i < data.train.size(); ++i) targets.emplace_back(train_name(i), &data.train[i]);
        targets.emplace_back("unseen", &data.unseen);
    } else {
        targets.emplace_back(c.get("export.domain"), &pick_domain(data, c.get("export.domain")));
    }

    RunDir rd(resolve_out_dir(c), "export-embeddings", c);
    for (const auto& [name, ds] : targets) {
        export_embeddings(base, choice.source, *ds, rd.path("embeddings_" + name + ".csv"));
        if (c.get_bool("export.masks")) export_masks(base, choice.source, *ds, rd.path("masks_" + name + ".csv"));
    }
    rd.finish();
}

// gen-data followed by train-erm, train-emg and eval (none and emg) for each
// training seed, plus the seed-aggregated reports.
void cmd_pipeline(const CommandContext& ctx) {
    const RunConfig& c = ctx.config;
    const BenchmarkSpec spec = bench_spec(c);
    const Benchmark b = generate_benchmark(spec, c.seed());
    const LoadedData data{b.train, b.unseen, b.oracle};
    const std::vector<std::uint64_t> seeds = [&] {
        std::vector<std::uint64_t> s;
        for (auto v : c.get_uint_list("pipeline.train_seeds")) s.push_back(v);
        if (s.empty()) throw ConfigError("pipeline.train_seeds must not be empty");
        return s;
    }();
    const ModelSpec mspec = model_spec(c);
    const EmgOptions opts = emg_options(c);

    RunDir rd(resolve_out_dir(c), "pipeline", c);
    write_benchmark(rd, b, spec, c.seed());
    std::vector<AccuracyMap> plain, masked;
    json per_seed = json::array();
    for (std::uint64_t s : seeds) {
        const fs::path sub = rd.path("seed_" + std::to_string(s));
        fs::create_directories(sub);
        const TrainConfig tc = train_config(c, s);
        const ErmResult erm = train_erm(mspec, tc, data.train);
        const SplitModel split = make_frozen_split(erm.model, mspec);
        write_base(sub, erm.model, split);
        erm.trace.write_csv(sub / "erm_trace.csv");

        Mlp generator = init_generator(split.input_dim(), split.embedding_dim(), opts, s);
        const EmgResult res =
            train_emg(split, std::move(generator), data.train, mask_config(c, s), tc, opts.hard_target);
        write_emg(sub, res.emg, split);
        res.trace.write_csv(sub / "emg_trace.csv");

        plain.push_back(accuracy_map(split, NoMask{}, data));
        masked.push_back(accuracy_map(split, EmgMask{res.emg}, data));
        per_seed.push_back({{"seed", s},
                            {"none", accuracy_json(plain.back())},
                            {"emg", accuracy_json(masked.back())}});
        rd.log("seed " + std::to_string(s) + " finished");
    }
    RunReport none_report = aggregate_runs(plain, seeds);
    RunReport emg_report = aggregate_runs(masked, seeds);
    none_report.config = emg_report.config = metrics_config(c);
    none_report.write(rd.path("report_none.json"));
    emg_report.write(rd.path("report_emg.json"));

    double gain = 0.0, drop = 0.0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        gain += masked[i].at("unseen") - plain[i].at("unseen");
        drop += plain[i].at("train_pooled") - masked[i].at("train_pooled");
    }
    const double n = static_cast<double>(seeds.size());
    rd.write("summary.json", dump({{"per_seed", per_seed},
                                   {"mean_unseen_gain", gain / n},
                                   {"mean_train_drop", drop / n},
                                   {"config", metrics_config(c)}}));
    rd.finish();
}

using CommandFn = std::function<void(const CommandContext&)>;

const std::vector<std::pair<std::string, CommandFn>>& command_table() {
    static const std::vector<std::pair<std::string, CommandFn>> table = {
        {"gen-data", cmd_gen_data},
        {"train-erm", cmd_train_erm},
        {"train-emg", cmd_train_emg},
        {"eval", cmd_eval},
        {"sweep-global", cmd_sweep_global},
        {"bound-check", cmd_bound_check},
        {"export-embeddings", cmd_export_embeddings},
        {"pipeline", cmd_pipeline},
    };
    return table;
}

}  // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& [n, _] : command_table()) out.push_back(n);
        return out;
    }();
    return names;
}

fs::path resolve_out_dir(const RunConfig& config) {
    if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
    return config.get("out.dir");
}

std::map<std::string, std::string> artifact_checksums(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), dir).generic_string();
        if (rel == kManifest || rel == kLog) continue;
        out[rel] = sha256_file(entry.path());
    }
    return out;
}

bool verify_manifest(const fs::path& dir) {
    const fs::path path = dir / kManifest;
    if (!fs::exists(path)) return false;
    const json m = read_json(path);
    if (m.value("status", "") != "complete") return false;
    return m.at("artifacts").get<std::map<std::string, std::string>>() == artifact_checksums(dir);
}

SplitModel load_base_model(const fs::path& dir) {
    const json meta = read_json(dir / "base.json");
    try {
        if (meta.at("format") != "dispel-base-v1") throw CorruptFileError("unexpected base model format");
        const auto sizes = meta.at("layer_sizes").get<std::vector<std::size_t>>();
        const std::size_t split_index = meta.at("split_index").get<std::size_t>();
        Mlp model(sizes, Activation::Identity, load_params(dir / "base"));
        SplitModel split = split_index == 0 ? identity_split(model) : split_model(model, split_index);
        split.freeze();
        if (split.checksum() != meta.at("checksum").get<std::string>())
            throw CorruptFileError("base model checksum mismatch in " + dir.string());
        return split;
    } catch (const json::exception& e) {
        throw CorruptFileError("malformed base.json: " + std::string(e.what()));
    }
}

EmgModel load_emg_model(const fs::path& dir, const SplitModel& base) {
    const json meta = read_json(dir / "emg.json");
    try {
        if (meta.at("format") != "dispel-emg-v1") throw CorruptFileError("unexpected mask generator format");
        if (meta.at("base_checksum").get<std::string>() != base.checksum())
            throw ContractError("mask generator in " + dir.string() + " was trained against a different base model");
        const auto sizes = meta.at("layer_sizes").get<std::vector<std::size_t>>();
        const json& m = meta.at("mask");
        MaskGenConfig cfg;
        cfg.tau = m.at("tau").get<double>();
        cfg.inference_mode = inference_mode_from_string(m.at("inference_mode").get<std::string>());
        cfg.samples = m.at("samples").get<std::size_t>();
        cfg.uniform_clamp_eps = m.at("uniform_clamp_eps").get<double>();
        cfg.sample_seed = m.at("sample_seed").get<std::uint64_t>();
        cfg.validate();
        Mlp generator(sizes, Activation::Sigmoid, load_params(dir / "emg"));
        generator.params().freeze_all();
        return EmgModel{std::move(generator), cfg};
    } catch (const json::exception& e) {
        throw CorruptFileError("malformed emg.json: " + std::string(e.what()));
    }
}

LoadedData load_data_dir(const fs::path& dir) {
    const json index = read_json(dir / "data.json");
    LoadedData out;
    try {
        const auto train = index.at("train").get<std::vector<std::string>>();
        if (train.empty()) throw CorruptFileError("data.json lists no training domains");
        auto load = [&](const std::string& name, int domain) {
            const fs::path p = dir / name;
            if (!fs::exists(p)) throw MissingArtifactError("missing artifact: " + p.string());
            DomainDataset ds = load_csv_dataset(p);
            ds.domain_index = domain;
            return ds;
        };
        for (std::size_t i = 0; i < train.size(); ++i) out.train.push_back(load(train[i], static_cast<int>(i)));
        out.unseen = load(index.at("unseen").get<std::string>(), static_cast<int>(train.size()));
        if (index.contains("oracle")) {
            const fs::path p = dir / index.at("oracle").get<std::string>();
            if (!fs::exists(p)) throw MissingArtifactError("missing artifact: " + p.string());
            out.oracle = read_oracle(p);
            for (auto& d : out.train) d.oracle = out.oracle;
            out.unseen.oracle = out.oracle;
        }
    } catch (const json::exception& e) {
        throw CorruptFileError("malformed data.json: " + std::string(e.what()));
    }
    const std::size_t width = out.train.front().num_features();
    for (const auto& d : out.train)
        if (d.num_features() != width) throw DimensionError("training domains disagree on feature count");
    if (out.unseen.num_features() != width) throw DimensionError("unseen domain feature count differs");
    return out;
}

void run_command(const std::string& name, const CommandContext& ctx) {
    for (const auto& [n, fn] : command_table())
        if (n == name) {
            ctx.config.seed();
            fn(ctx);
            return;
        }
    throw UsageError("unknown command '" + name + "'");
}

int exit_code_for(const Error& e) {
    if (dynamic_cast<const ConfigParseError*>(&e)) return kExitConfigParse;
    if (dynamic_cast<const MissingArtifactError*>(&e)) return kExitMissingArtifact;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UsageError*>(&e)) return kExitConfig;
    return kExitFailure;
}

std::string error_line(int code, const std::string& kind, const std::string& message) {
    return "error code=" + std::to_string(code) + " kind=" + kind + " message=" + json(message).dump();
}

int run_command_guarded(const std::string& name, const CommandContext& ctx, std::ostream& err) {
    try {
        run_command(name, ctx);
        return kExitOk;
    } catch (const Error& e) {
        const int code = exit_code_for(e);
        err << error_line(code, e.kind(), e.what()) << '\n';
        return code;
    } catch (const std::exception& e) {
        err << error_line(kExitInternal, "internal", e.what()) << '\n';
        return kExitInternal;
    }
}

}  // namespace dispel
