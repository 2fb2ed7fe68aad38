// Command-line front end: synth, train, eval, threshold, report, run.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

#include "uqlab/errors.hpp"
#include "uqlab/harness.hpp"
#include "uqlab/io.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string methods;
    std::string format = "table";
    std::vector<std::string> files;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

uqlab::ExperimentConfig resolve_config(const Options& o) {
    uqlab::ExperimentConfig cfg =
        o.config.empty() ? uqlab::ExperimentConfig{} : uqlab::load_config(o.config);
    if (o.seed) cfg.seeds = {*o.seed};
    if (!o.methods.empty()) {
        std::vector<uqlab::MethodConfig> picked;
        for (const auto& name : split_list(o.methods)) {
            auto it = std::find_if(cfg.methods.begin(), cfg.methods.end(),
                                   [&](const auto& m) { return m.name == name; });
            if (it != cfg.methods.end()) {
                picked.push_back(*it);
            } else {
                uqlab::MethodConfig m;
                m.name = name;
                picked.push_back(m);
            }
        }
        cfg.methods = std::move(picked);
    }
    if (!o.out.empty()) cfg.output_dir = o.out;
    for (const auto& f : o.files) cfg.prediction_files.emplace_back(f);
    cfg.validate();
    return cfg;
}

void print_or_write(const Options& o, const std::string& name, const std::string& text) {
    if (o.out.empty()) {
        std::cout << text;
    } else {
        uqlab::write_text_file(std::filesystem::path(o.out) / name, text);
    }
}

void print_transfer(const Options& o, const uqlab::ExperimentResult& r) {
    const bool csv = o.format == "csv";
    for (const auto& m : r.transfer) {
        print_or_write(o, "transfer_" + m.method + (csv ? ".csv" : ".txt"),
                       csv ? uqlab::transfer_csv(m) : uqlab::transfer_table(m) + "\n");
    }
    print_or_write(o, csv ? "fraction_retained.csv" : "fraction_retained.txt",
                   csv ? uqlab::fraction_retained_csv(r) : uqlab::fraction_retained_table(r));
}

void need_files(const uqlab::ExperimentConfig& cfg) {
    if (cfg.prediction_files.empty()) {
        throw uqlab::ConfigError("no prediction files given (positional or config prediction_files)");
    }
}

int run_command(const std::string& cmd, const Options& o) {
    auto cfg = resolve_config(o);
    const bool csv = o.format == "csv";
    if (cmd == "synth") {
        if (o.out.empty()) throw uqlab::ConfigError("synth needs --out");
        for (const auto seed : cfg.seeds) {
            for (const auto& d : uqlab::experiment_datasets(cfg, seed)) {
                uqlab::save_dataset(d, std::filesystem::path(o.out) /
                                           ("seed" + std::to_string(seed)) / (d.tag + ".csv"));
            }
        }
    } else if (cmd == "train") {
        if (o.out.empty()) throw uqlab::ConfigError("train needs --out");
        cfg.prediction_files.clear();
        uqlab::run_experiment(cfg);
    } else if (cmd == "eval") {
        need_files(cfg);
        const auto r = uqlab::run_experiment(cfg);
        print_or_write(o, csv ? "metrics.csv" : "metrics.txt",
                       csv ? uqlab::metrics_csv(r.report) : uqlab::metrics_table(r.report));
    } else if (cmd == "threshold") {
        need_files(cfg);
        print_transfer(o, uqlab::run_experiment(cfg));
    } else if (cmd == "report") {
        need_files(cfg);
        if (o.out.empty()) throw uqlab::ConfigError("report needs --out");
        uqlab::emit_report(uqlab::run_experiment(cfg), o.out);
    } else if (cmd == "run") {
        cfg.prediction_files.clear();
        const auto r = uqlab::run_experiment(cfg);
        if (!o.out.empty()) uqlab::emit_report(r, o.out);
        std::cout << (csv ? uqlab::metrics_csv(r.report) : uqlab::metrics_table(r.report));
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty estimation benchmark on a synthetic shift ladder"};
    app.require_subcommand(1);
    Options o;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"synth", "Write the ladder datasets for each seed"},
        {"train", "Train the configured methods and write predictions"},
        {"eval", "Metrics from prediction files"},
        {"threshold", "Youden thresholds, selective evaluation and transfer matrices"},
        {"report", "Write every report file from prediction files"},
        {"run", "Full pipeline: data, training, prediction and report"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", o.config, "JSON config file");
        sub->add_option("--seed", o.seed, "Use this single seed");
        sub->add_option("--out", o.out, "Output directory");
        sub->add_option("--methods", o.methods, "Comma-separated method list");
        sub->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "table"}));
        if (name == "eval" || name == "threshold" || name == "report") {
            sub->add_option("files", o.files, "Prediction CSV files");
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        return run_command(cmd, o);
    } catch (const uqlab::NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    } catch (const uqlab::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const uqlab::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
}
