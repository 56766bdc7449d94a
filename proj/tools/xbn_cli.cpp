// Experiment runner: train, sweep, drift, eval and gen-data subcommands.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xbn/dataset.hpp"
#include "xbn/embedder.hpp"
#include "xbn/error.hpp"
#include "xbn/experiment.hpp"
#include "xbn/retrieval.hpp"

namespace fs = std::filesystem;

namespace {

struct SettingFlags {
    std::string config;
    std::map<std::string, std::string> values;
};

void add_setting_flags(CLI::App* cmd, SettingFlags& flags) {
    cmd->add_option("--config", flags.config, "key=value config file (flags override it)");
    for (const auto& key : xbn::setting_keys()) cmd->add_option("--" + key, flags.values[key], "same as config key " + key);
}

xbn::RunSettings resolve(CLI::App* cmd, const SettingFlags& flags) {
    xbn::RunSettings settings;
    if (!flags.config.empty()) xbn::apply_config_file(settings, flags.config);
    for (const auto& key : xbn::setting_keys()) {
        if (cmd->count("--" + key) > 0) xbn::apply_setting(settings, key, flags.values.at(key));
    }
    return settings;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

fs::path default_out_root() {
    if (const char* env = std::getenv("XBN_OUT_ROOT"); env && *env) return env;
    return "runs";
}

void print_summary(const std::vector<xbn::RunSummary>& runs) {
    std::printf("%-10s %-10s %6s %8s %8s\n", "axis", "variant", "seed", "R@1", "R@10");
    for (const auto& r : runs) {
        if (r.ok) {
            std::printf("%-10s %-10s %6llu %8.4f %8.4f\n", r.axis_value.empty() ? "-" : r.axis_value.c_str(),
                        r.variant.c_str(), static_cast<unsigned long long>(r.seed), r.r1, r.r10);
        } else {
            std::printf("%-10s %-10s %6llu   FAILED %s\n", r.axis_value.empty() ? "-" : r.axis_value.c_str(),
                        r.variant.c_str(), static_cast<unsigned long long>(r.seed), r.error.c_str());
        }
    }
}

int report_failures(const std::vector<xbn::RunSummary>& runs) {
    int failed = 0;
    for (const auto& r : runs) {
        if (!r.ok) {
            std::cerr << "error: run " << r.variant << "/" << r.seed << " failed: " << r.error << "\n";
            ++failed;
        }
    }
    return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-batch memory metric learning with moment-matched memory adaptation"};
    app.require_subcommand(1);
    std::string out_root = default_out_root().string();

    SettingFlags train_flags, sweep_flags, drift_flags, eval_flags, gen_flags;

    auto* train = app.add_subcommand("train", "Run one training job");
    add_setting_flags(train, train_flags);
    train->add_option("--out", out_root, "output root (default $XBN_OUT_ROOT or ./runs)");

    auto* sweep = app.add_subcommand("sweep", "Batch-size or memory-size sweep over variants and seeds");
    add_setting_flags(sweep, sweep_flags);
    std::string axis = "batch-size", values, variants = "xbm,xbn,axbn", seeds = "0,1,2";
    std::size_t workers = 1;
    sweep->add_option("--axis", axis, "batch-size | memory-fraction");
    sweep->add_option("--values", values, "comma-separated axis values")->required();
    sweep->add_option("--variants", variants, "comma-separated variants");
    sweep->add_option("--seeds", seeds, "comma-separated seeds");
    sweep->add_option("--workers", workers, "parallel runs");
    sweep->add_option("--out", out_root, "output root");

    auto* drift = app.add_subcommand("drift", "Per-epoch feature drift curves for several variants");
    add_setting_flags(drift, drift_flags);
    std::string drift_variants = "noxbm,xbm,xbn,axbn";
    drift->add_option("--variants", drift_variants, "comma-separated variants");
    drift->add_option("--out", out_root, "output root");

    auto* eval = app.add_subcommand("eval", "Recall@k of a checkpoint on the validation split");
    add_setting_flags(eval, eval_flags);
    std::string checkpoint, ks = "1,10";
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("--ks", ks, "comma-separated k values");

    auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset (XBNF, or CSV by extension)");
    add_setting_flags(gen, gen_flags);
    std::string output;
    bool narrow = false;
    gen->add_option("--output", output, "output path")->required();
    gen->add_flag("--f32", narrow, "store 32-bit features");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            xbn::RunSettings settings = resolve(train, train_flags);
            xbn::check_variant_specific_keys(settings);
            const auto dataset = settings.load_or_generate();
            const fs::path dir = fs::path(out_root) / settings.method().name() / std::to_string(settings.train.seed);
            const auto summary = xbn::run_and_record(settings, dataset, dir);
            print_summary({summary});
            return report_failures({summary});
        }
        if (*sweep) {
            xbn::RunSettings settings = resolve(sweep, sweep_flags);
            xbn::SweepSpec spec;
            spec.axis = xbn::parse_sweep_axis(axis);
            spec.values = split_list(values);
            spec.variants = split_list(variants);
            for (const auto& s : split_list(seeds)) spec.seeds.push_back(std::stoull(s));
            spec.workers = workers;
            const auto dataset = settings.load_or_generate();
            const auto runs = xbn::run_sweep(settings, spec, dataset, out_root);
            print_summary(runs);
            std::printf("\n%-10s %-10s %4s %8s %8s %8s %8s\n", "axis", "variant", "n", "R@1", "std", "R@10", "std");
            for (const auto& a : xbn::aggregate(runs)) {
                std::printf("%-10s %-10s %4zu %8.4f %8.4f %8.4f %8.4f\n", a.axis_value.c_str(), a.variant.c_str(),
                            a.runs, a.r1_mean, a.r1_std, a.r10_mean, a.r10_std);
            }
            return report_failures(runs);
        }
        if (*drift) {
            xbn::RunSettings settings = resolve(drift, drift_flags);
            const auto dataset = settings.load_or_generate();
            std::vector<xbn::RunSummary> summaries;
            const auto rows = xbn::run_drift(settings, split_list(drift_variants), dataset, out_root, &summaries);
            std::printf("%5s %-10s %10s %10s %8s\n", "epoch", "variant", "mean", "max", "R@1");
            for (const auto& r : rows) {
                std::printf("%5zu %-10s %10.6f %10.6f %8.4f\n", r.epoch, r.variant.c_str(), r.mean_drift, r.max_drift,
                            r.val_r1);
            }
            return report_failures(summaries);
        }
        if (*eval) {
            xbn::RunSettings settings = resolve(eval, eval_flags);
            const auto dataset = settings.load_or_generate();
            const auto model = xbn::load_checkpoint(checkpoint);
            xbn::RetrievalProtocol protocol;
            protocol.ks.clear();
            for (const auto& k : split_list(ks)) protocol.ks.push_back(std::stoull(k));
            xbn::RecallResult recall;
            if (dataset.single_set_validation()) {
                const auto rows = dataset.indices(xbn::Split::ValGallery);
                xbn::EmbeddingBatch gallery(model.embed(dataset.rows(rows)), dataset.labels_of(rows));
                recall = xbn::recall_at_k(gallery, gallery, protocol);
            } else {
                const auto q = dataset.indices(xbn::Split::ValQuery);
                const auto g = dataset.indices(xbn::Split::ValGallery);
                protocol.mode = xbn::RetrievalMode::QueryGallery;
                recall = xbn::recall_at_k(xbn::EmbeddingBatch(model.embed(dataset.rows(q)), dataset.labels_of(q)),
                                          xbn::EmbeddingBatch(model.embed(dataset.rows(g)), dataset.labels_of(g)),
                                          protocol);
            }
            for (const auto& [k, v] : recall) std::printf("R@%zu %.6f\n", k, v);
            return 0;
        }
        if (*gen) {
            xbn::RunSettings settings = resolve(gen, gen_flags);
            auto dataset = xbn::generate_synthetic(settings.synthetic);
            if (fs::path(output).extension() == ".csv") {
                xbn::save_features_csv(dataset, output, true);
            } else {
                dataset.precision = narrow ? xbn::Precision::F32 : xbn::Precision::F64;
                xbn::save_features(dataset, output);
            }
            std::printf("wrote %zu rows x %zu to %s\n", dataset.size(), dataset.input_dim(), output.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
