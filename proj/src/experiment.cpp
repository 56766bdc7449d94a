#include "xbn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "xbn/error.hpp"

namespace xbn {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, "'" + key + "' expects a number, got '" + v + "'");
    }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
        const unsigned long long x = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, "'" + key + "' expects a nonnegative integer, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw Error(ErrorCode::InvalidConfig, "'" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<std::size_t> to_widths(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    if (v.empty() || v == "none") return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_uint(key, trim(item)));
    return out;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out.empty() ? "none" : out;
}

struct Setting {
    std::string key;
    std::function<void(RunSettings&, const std::string&)> set;
    std::function<std::string(const RunSettings&)> get;
};

const std::vector<Setting>& settings_table() {
    static const std::vector<Setting> table = [] {
        std::vector<Setting> t;
        auto add = [&](std::string key, std::function<void(RunSettings&, const std::string&)> set,
                       std::function<std::string(const RunSettings&)> get) {
            t.push_back({std::move(key), std::move(set), std::move(get)});
        };
        add("variant", [](RunSettings& s, const std::string& v) { MethodVariant::parse(v); s.variant = v; },
            [](const RunSettings& s) { return s.variant; });
        add("seed", [](RunSettings& s, const std::string& v) { s.train.seed = to_uint("seed", v); },
            [](const RunSettings& s) { return std::to_string(s.train.seed); });
        add("batch-size", [](RunSettings& s, const std::string& v) { s.train.batch_size = to_uint("batch-size", v); },
            [](const RunSettings& s) { return std::to_string(s.train.batch_size); });
        add("samples-per-class",
            [](RunSettings& s, const std::string& v) { s.train.samples_per_class = to_uint("samples-per-class", v); },
            [](const RunSettings& s) { return std::to_string(s.train.samples_per_class); });
        add("memory-fraction",
            [](RunSettings& s, const std::string& v) {
                s.train.memory_fraction = to_double("memory-fraction", v);
                s.train.memory_capacity.reset();
            },
            [](const RunSettings& s) { return fmt(s.train.memory_fraction); });
        add("memory-capacity",
            [](RunSettings& s, const std::string& v) {
                if (v == "auto") {
                    s.train.memory_capacity.reset();
                } else {
                    s.train.memory_capacity = to_uint("memory-capacity", v);
                }
            },
            [](const RunSettings& s) {
                return s.train.memory_capacity ? std::to_string(*s.train.memory_capacity) : std::string("auto");
            });
        add("epochs", [](RunSettings& s, const std::string& v) { s.train.epochs = to_uint("epochs", v); },
            [](const RunSettings& s) { return std::to_string(s.train.epochs); });
        add("warmup-epochs",
            [](RunSettings& s, const std::string& v) { s.train.warmup_epochs = to_uint("warmup-epochs", v); },
            [](const RunSettings& s) { return std::to_string(s.train.warmup_epochs); });
        add("optimizer",
            [](RunSettings& s, const std::string& v) {
                if (v == "sgd") {
                    s.train.optimizer.kind = OptimizerKind::Sgd;
                } else if (v == "adamw") {
                    s.train.optimizer.kind = OptimizerKind::AdamW;
                } else {
                    throw Error(ErrorCode::InvalidConfig, "optimizer must be sgd or adamw");
                }
            },
            [](const RunSettings& s) { return std::string(s.train.optimizer.kind == OptimizerKind::Sgd ? "sgd" : "adamw"); });
        add("lr", [](RunSettings& s, const std::string& v) { s.train.optimizer.learning_rate = to_double("lr", v); },
            [](const RunSettings& s) { return fmt(s.train.optimizer.learning_rate); });
        add("momentum", [](RunSettings& s, const std::string& v) { s.train.optimizer.momentum = to_double("momentum", v); },
            [](const RunSettings& s) { return fmt(s.train.optimizer.momentum); });
        add("weight-decay",
            [](RunSettings& s, const std::string& v) { s.train.optimizer.weight_decay = to_double("weight-decay", v); },
            [](const RunSettings& s) { return fmt(s.train.optimizer.weight_decay); });
        add("lr-gamma", [](RunSettings& s, const std::string& v) { s.train.optimizer.gamma = to_double("lr-gamma", v); },
            [](const RunSettings& s) { return fmt(s.train.optimizer.gamma); });
        add("lr-step", [](RunSettings& s, const std::string& v) { s.train.optimizer.step_epochs = to_uint("lr-step", v); },
            [](const RunSettings& s) { return std::to_string(s.train.optimizer.step_epochs); });
        add("warmup-lr",
            [](RunSettings& s, const std::string& v) { s.train.warmup_optimizer.learning_rate = to_double("warmup-lr", v); },
            [](const RunSettings& s) { return fmt(s.train.warmup_optimizer.learning_rate); });
        add("q", [](RunSettings& s, const std::string& v) { s.train.kalman.q = to_double("q", v); },
            [](const RunSettings& s) { return fmt(s.train.kalman.q); });
        add("r", [](RunSettings& s, const std::string& v) { s.train.kalman.r = to_double("r", v); },
            [](const RunSettings& s) { return fmt(s.train.kalman.r); });
        add("p0", [](RunSettings& s, const std::string& v) { s.train.kalman.p0 = to_double("p0", v); },
            [](const RunSettings& s) { return fmt(s.train.kalman.p0); });
        add("gain-interval",
            [](RunSettings& s, const std::string& v) { s.train.kalman.gain_interval = to_uint("gain-interval", v); },
            [](const RunSettings& s) { return std::to_string(s.train.kalman.gain_interval); });
        add("ema-momentum",
            [](RunSettings& s, const std::string& v) {
                const double m = to_double("ema-momentum", v);
                if (!(m >= 0.0 && m <= 1.0)) throw Error(ErrorCode::InvalidConfig, "ema-momentum must lie in [0, 1]");
                s.ema_momentum = m;
            },
            [](const RunSettings& s) { return fmt(s.ema_momentum); });
        add("loss",
            [](RunSettings& s, const std::string& v) {
                if (v == "contrastive") {
                    s.train.loss.kind = LossKind::Contrastive;
                } else if (v == "triplet") {
                    s.train.loss.kind = LossKind::Triplet;
                } else {
                    throw Error(ErrorCode::InvalidConfig, "loss must be contrastive or triplet");
                }
            },
            [](const RunSettings& s) {
                return std::string(s.train.loss.kind == LossKind::Contrastive ? "contrastive" : "triplet");
            });
        add("pos-margin", [](RunSettings& s, const std::string& v) { s.train.loss.miner.pos_margin = to_double("pos-margin", v); },
            [](const RunSettings& s) { return fmt(s.train.loss.miner.pos_margin); });
        add("neg-margin", [](RunSettings& s, const std::string& v) { s.train.loss.miner.neg_margin = to_double("neg-margin", v); },
            [](const RunSettings& s) { return fmt(s.train.loss.miner.neg_margin); });
        add("triplet-margin",
            [](RunSettings& s, const std::string& v) { s.train.loss.triplet_margin = to_double("triplet-margin", v); },
            [](const RunSettings& s) { return fmt(s.train.loss.triplet_margin); });
        add("hidden", [](RunSettings& s, const std::string& v) { s.train.hidden = to_widths("hidden", v); },
            [](const RunSettings& s) { return join(s.train.hidden); });
        add("dim", [](RunSettings& s, const std::string& v) { s.train.embed_dim = to_uint("dim", v); },
            [](const RunSettings& s) { return std::to_string(s.train.embed_dim); });
        add("probe-drift", [](RunSettings& s, const std::string& v) { s.train.probe_drift = to_bool("probe-drift", v); },
            [](const RunSettings& s) { return std::string(s.train.probe_drift ? "true" : "false"); });
        add("data",
            [](RunSettings& s, const std::string& v) {
                if (v.empty() || v == "synthetic") {
                    s.data.reset();
                } else {
                    s.data = v;
                }
            },
            [](const RunSettings& s) { return s.data ? s.data->string() : std::string("synthetic"); });
        add("classes", [](RunSettings& s, const std::string& v) { s.synthetic.num_classes = to_uint("classes", v); },
            [](const RunSettings& s) { return std::to_string(s.synthetic.num_classes); });
        add("val-classes", [](RunSettings& s, const std::string& v) { s.synthetic.val_classes = to_uint("val-classes", v); },
            [](const RunSettings& s) { return std::to_string(s.synthetic.val_classes); });
        add("per-class",
            [](RunSettings& s, const std::string& v) { s.synthetic.samples_per_class = to_uint("per-class", v); },
            [](const RunSettings& s) { return std::to_string(s.synthetic.samples_per_class); });
        add("input-dim", [](RunSettings& s, const std::string& v) { s.synthetic.input_dim = to_uint("input-dim", v); },
            [](const RunSettings& s) { return std::to_string(s.synthetic.input_dim); });
        add("spread", [](RunSettings& s, const std::string& v) { s.synthetic.spread = to_double("spread", v); },
            [](const RunSettings& s) { return fmt(s.synthetic.spread); });
        add("separation", [](RunSettings& s, const std::string& v) { s.synthetic.separation = to_double("separation", v); },
            [](const RunSettings& s) { return fmt(s.synthetic.separation); });
        add("query-gallery",
            [](RunSettings& s, const std::string& v) { s.synthetic.query_gallery = to_bool("query-gallery", v); },
            [](const RunSettings& s) { return std::string(s.synthetic.query_gallery ? "true" : "false"); });
        add("data-seed", [](RunSettings& s, const std::string& v) { s.synthetic.seed = to_uint("data-seed", v); },
            [](const RunSettings& s) { return std::to_string(s.synthetic.seed); });
        return t;
    }();
    return table;
}

}  // namespace

MethodVariant RunSettings::method() const {
    MethodVariant v = MethodVariant::parse(variant);
    if (v.method == Method::Ema && variant.find(':') == std::string::npos) v.ema_momentum = ema_momentum;
    return v;
}

FeatureDataset RunSettings::load_or_generate() const {
    if (data) return load_dataset(*data);
    return generate_synthetic(synthetic);
}

const std::vector<std::string>& setting_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& s : settings_table()) k.push_back(s.key);
        return k;
    }();
    return keys;
}

void apply_setting(RunSettings& settings, const std::string& key, const std::string& value) {
    for (const auto& s : settings_table()) {
        if (s.key == key) {
            s.set(settings, trim(value));
            settings.explicit_keys.insert(key);
            return;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown setting '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::stringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::InvalidConfig, "config line " + std::to_string(line_no) + " has no '='");
        }
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

void apply_config_file(RunSettings& settings, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    for (const auto& [k, v] : parse_key_values(buf.str())) apply_setting(settings, k, v);
}

namespace {

// Method that a variant-specific key belongs to, if any.
std::optional<Method> owner_of(const std::string& key) {
    if (key == "q" || key == "r" || key == "p0" || key == "gain-interval") return Method::Axbn;
    if (key == "ema-momentum") return Method::Ema;
    return std::nullopt;
}

}  // namespace

std::string render_settings(const RunSettings& settings) {
    const Method m = settings.method().method;
    std::string out;
    for (const auto& s : settings_table()) {
        if (const auto owner = owner_of(s.key); owner && *owner != m) continue;
        out += s.key + " = " + s.get(settings) + "\n";
    }
    return out;
}

void check_variant_specific_keys(const RunSettings& settings) {
    const MethodVariant v = settings.method();
    for (const auto& key : settings.explicit_keys) {
        const auto owner = owner_of(key);
        if (owner && *owner != v.method) {
            throw Error(ErrorCode::InvalidConfig, "'" + key + "' applies only to " +
                                                      MethodVariant{*owner}.name() + ", not " + v.name());
        }
    }
}

std::string record_to_json(const IterationRecord& rec) {
    nlohmann::json j;
    j["epoch"] = rec.epoch;
    j["step"] = rec.step;
    j["warmup"] = rec.warmup;
    j["loss"] = rec.loss;
    j["gain"] = rec.gain ? nlohmann::json(*rec.gain) : nlohmann::json(nullptr);
    j["mean_drift"] = rec.mean_drift ? nlohmann::json(*rec.mean_drift) : nlohmann::json(nullptr);
    j["max_drift"] = rec.max_drift ? nlohmann::json(*rec.max_drift) : nlohmann::json(nullptr);
    j["lr"] = rec.learning_rate;
    j["bank_size"] = rec.bank_size;
    return j.dump();
}

IterationRecord record_from_json(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        IterationRecord rec;
        rec.epoch = j.at("epoch").get<std::size_t>();
        rec.step = j.at("step").get<std::size_t>();
        rec.warmup = j.at("warmup").get<bool>();
        rec.loss = j.at("loss").get<double>();
        if (!j.at("gain").is_null()) rec.gain = j.at("gain").get<double>();
        if (!j.at("mean_drift").is_null()) rec.mean_drift = j.at("mean_drift").get<double>();
        if (!j.at("max_drift").is_null()) rec.max_drift = j.at("max_drift").get<double>();
        rec.learning_rate = j.at("lr").get<double>();
        rec.bank_size = j.at("bank_size").get<std::size_t>();
        return rec;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, std::string("bad metrics record: ") + e.what());
    }
}

std::vector<IterationRecord> read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<IterationRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) out.push_back(record_from_json(line));
    }
    return out;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot create " + path.string());
    return out;
}

std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path, const std::string& header) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line) != header) {
        throw Error(ErrorCode::FormatError, "unexpected header in " + path.string(), 0);
    }
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (line.back() == ',') fields.emplace_back();
        rows.push_back(std::move(fields));
    }
    return rows;
}

constexpr const char* kRunsHeader = "axis_value,variant,seed,r1,r10,best_epoch,status";
constexpr const char* kAggregateHeader = "axis_value,variant,runs,r1_mean,r1_std,r10_mean,r10_std";
constexpr const char* kDriftHeader = "epoch,variant,mean_drift,max_drift,val_r1";

}  // namespace

RunSummary run_and_record(const RunSettings& settings, const FeatureDataset& dataset,
                          const std::filesystem::path& out_dir, TrainResult* result) {
    RunSummary summary;
    summary.variant = settings.variant;
    summary.seed = settings.train.seed;
    try {
        const MethodVariant variant = settings.method();
        summary.variant = variant.name();
        std::filesystem::create_directories(out_dir);
        open_out(out_dir / "config.txt") << render_settings(settings);
        auto metrics = open_out(out_dir / "metrics.jsonl");
        TrainResult res = run_training(settings.train, dataset, variant,
                                       [&](const IterationRecord& rec) { metrics << record_to_json(rec) << '\n'; });
        metrics.close();
        summary.r1 = res.best_recall.count(1) ? res.best_recall.at(1) : 0.0;
        summary.r10 = res.best_recall.count(10) ? res.best_recall.at(10) : 0.0;
        summary.best_epoch = res.best_epoch;
        save_checkpoint(res.best_model, out_dir / "checkpoint.xbnc");
        write_runs_csv({summary}, out_dir / "summary.csv");
        if (result) *result = std::move(res);
    } catch (const std::exception& e) {
        summary.ok = false;
        summary.error = e.what();
        try {
            write_runs_csv({summary}, out_dir / "summary.csv");
        } catch (const std::exception&) {
        }
    }
    return summary;
}

std::vector<AggregateRow> aggregate(const std::vector<RunSummary>& runs) {
    std::vector<AggregateRow> rows;
    std::vector<std::vector<const RunSummary*>> members;
    for (const auto& run : runs) {
        if (!run.ok) continue;
        auto it = std::find_if(rows.begin(), rows.end(), [&](const AggregateRow& r) {
            return r.axis_value == run.axis_value && r.variant == run.variant;
        });
        if (it == rows.end()) {
            rows.push_back({run.axis_value, run.variant});
            members.emplace_back();
            it = rows.end() - 1;
        }
        members[static_cast<std::size_t>(it - rows.begin())].push_back(&run);
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& m = members[i];
        const auto n = static_cast<double>(m.size());
        rows[i].runs = m.size();
        for (const auto* r : m) {
            rows[i].r1_mean += r->r1;
            rows[i].r10_mean += r->r10;
        }
        rows[i].r1_mean /= n;
        rows[i].r10_mean /= n;
        for (const auto* r : m) {
            rows[i].r1_std += (r->r1 - rows[i].r1_mean) * (r->r1 - rows[i].r1_mean);
            rows[i].r10_std += (r->r10 - rows[i].r10_mean) * (r->r10 - rows[i].r10_mean);
        }
        rows[i].r1_std = std::sqrt(rows[i].r1_std / n);
        rows[i].r10_std = std::sqrt(rows[i].r10_std / n);
    }
    return rows;
}

void write_runs_csv(const std::vector<RunSummary>& runs, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << kRunsHeader << '\n';
    for (const auto& r : runs) {
        std::string status = r.ok ? "ok" : "failed:" + r.error;
        std::replace(status.begin(), status.end(), ',', ';');
        std::replace(status.begin(), status.end(), '\n', ' ');
        out << r.axis_value << ',' << r.variant << ',' << r.seed << ',' << fmt(r.r1) << ',' << fmt(r.r10) << ','
            << r.best_epoch << ',' << status << '\n';
    }
}

std::vector<RunSummary> read_runs_csv(const std::filesystem::path& path) {
    std::vector<RunSummary> out;
    for (const auto& f : read_csv_rows(path, kRunsHeader)) {
        if (f.size() != 7) throw Error(ErrorCode::FormatError, "runs row with " + std::to_string(f.size()) + " fields");
        RunSummary r;
        r.axis_value = f[0];
        r.variant = f[1];
        r.seed = to_uint("seed", f[2]);
        r.r1 = to_double("r1", f[3]);
        r.r10 = to_double("r10", f[4]);
        r.best_epoch = to_uint("best_epoch", f[5]);
        r.ok = f[6] == "ok";
        if (!r.ok) r.error = f[6].rfind("failed:", 0) == 0 ? f[6].substr(7) : f[6];
        out.push_back(std::move(r));
    }
    return out;
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << kAggregateHeader << '\n';
    for (const auto& r : rows) {
        out << r.axis_value << ',' << r.variant << ',' << r.runs << ',' << fmt(r.r1_mean) << ',' << fmt(r.r1_std)
            << ',' << fmt(r.r10_mean) << ',' << fmt(r.r10_std) << '\n';
    }
}

std::vector<AggregateRow> read_aggregate_csv(const std::filesystem::path& path) {
    std::vector<AggregateRow> out;
    for (const auto& f : read_csv_rows(path, kAggregateHeader)) {
        if (f.size() != 7) throw Error(ErrorCode::FormatError, "aggregate row with wrong field count");
        out.push_back({f[0], f[1], static_cast<std::size_t>(to_uint("runs", f[2])), to_double("r1_mean", f[3]),
                       to_double("r1_std", f[4]), to_double("r10_mean", f[5]), to_double("r10_std", f[6])});
    }
    return out;
}

void write_drift_csv(const std::vector<DriftRow>& rows, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << kDriftHeader << '\n';
    for (const auto& r : rows) {
        out << r.epoch << ',' << r.variant << ',' << fmt(r.mean_drift) << ',' << fmt(r.max_drift) << ','
            << fmt(r.val_r1) << '\n';
    }
}

std::vector<DriftRow> read_drift_csv(const std::filesystem::path& path) {
    std::vector<DriftRow> out;
    for (const auto& f : read_csv_rows(path, kDriftHeader)) {
        if (f.size() != 5) throw Error(ErrorCode::FormatError, "drift row with wrong field count");
        out.push_back({static_cast<std::size_t>(to_uint("epoch", f[0])), f[1], to_double("mean_drift", f[2]),
                       to_double("max_drift", f[3]), to_double("val_r1", f[4])});
    }
    return out;
}

SweepAxis parse_sweep_axis(const std::string& text) {
    if (text == "batch-size") return SweepAxis::BatchSize;
    if (text == "memory-fraction") return SweepAxis::MemoryFraction;
    throw Error(ErrorCode::InvalidConfig, "sweep axis must be batch-size or memory-fraction");
}

std::vector<RunSummary> run_sweep(const RunSettings& base, const SweepSpec& spec, const FeatureDataset& dataset,
                                  const std::filesystem::path& out_root) {
    if (spec.values.empty() || spec.variants.empty() || spec.seeds.empty()) {
        throw Error(ErrorCode::InvalidConfig, "sweep needs at least one value, variant and seed");
    }
    const std::string axis_key = spec.axis == SweepAxis::BatchSize ? "batch-size" : "memory-fraction";
    struct Cell {
        RunSettings settings;
        std::filesystem::path dir;
        std::string value;
        std::string error;
    };
    std::vector<Cell> cells;
    for (const auto& value : spec.values) {
        for (const auto& variant : spec.variants) {
            for (const auto seed : spec.seeds) {
                Cell cell{base, {}, value, {}};
                try {
                    apply_setting(cell.settings, "variant", variant);
                    apply_setting(cell.settings, axis_key, value);
                    apply_setting(cell.settings, "seed", std::to_string(seed));
                } catch (const std::exception& e) {
                    cell.error = e.what();
                }
                cell.dir = out_root / (axis_key + "-" + value) / variant / std::to_string(seed);
                cells.push_back(std::move(cell));
            }
        }
    }

    std::vector<RunSummary> results(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            Cell& c = cells[i];
            if (!c.error.empty()) {
                results[i] = RunSummary{c.value, c.settings.variant, c.settings.train.seed, 0, 0, 0, false, c.error};
                continue;
            }
            results[i] = run_and_record(c.settings, dataset, c.dir);
            results[i].axis_value = c.value;
        }
    };
    const std::size_t n_workers = std::clamp<std::size_t>(spec.workers, 1, cells.size());
    std::vector<std::thread> threads;
    for (std::size_t w = 1; w < n_workers; ++w) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();

    write_runs_csv(results, out_root / "runs.csv");
    write_aggregate_csv(aggregate(results), out_root / "aggregate.csv");
    return results;
}

std::vector<DriftRow> run_drift(const RunSettings& base, const std::vector<std::string>& variants,
                                const FeatureDataset& dataset, const std::filesystem::path& out_root,
                                std::vector<RunSummary>* summaries) {
    std::vector<DriftRow> rows;
    for (const auto& v : variants) {
        RunSettings s = base;
        apply_setting(s, "variant", v);
        s.train.probe_drift = true;
        TrainResult res;
        const RunSummary summary =
            run_and_record(s, dataset, out_root / v / std::to_string(s.train.seed), &res);
        if (summaries) summaries->push_back(summary);
        if (!summary.ok) throw Error(ErrorCode::InvalidConfig, "drift run " + v + " failed: " + summary.error);
        for (const auto& e : res.epochs) {
            rows.push_back({e.epoch, summary.variant, e.mean_drift.value_or(0.0), e.max_drift.value_or(0.0),
                            e.recall.at(1)});
        }
    }
    write_drift_csv(rows, out_root / "drift.csv");
    return rows;
}

}  // namespace xbn
