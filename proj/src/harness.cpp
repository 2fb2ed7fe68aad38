#include "uqlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "uqlab/errors.hpp"
#include "uqlab/io.hpp"

namespace uqlab {

using nlohmann::json;

namespace {

const std::set<std::string, std::less<>> kKnownMethods{
    std::string(kMethodMsp), std::string(kMethodMcDropout), std::string(kMethodEnsemble),
    std::string(kMethodSngp)};

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                         const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <class T>
void read_opt(const json& obj, const char* key, T& dst) {
    if (obj.contains(key)) dst = obj.at(key).get<T>();
}

ShiftConfig shift_from_json(const json& j, const std::string& where) {
    reject_unknown_keys(j, {"tag", "kind", "translation", "rotation", "scale", "noise_inflation",
                            "noise_width"},
                        where);
    ShiftConfig s;
    read_opt(j, "translation", s.translation);
    read_opt(j, "rotation", s.rotation);
    read_opt(j, "scale", s.scale);
    read_opt(j, "noise_inflation", s.noise_inflation);
    read_opt(j, "noise_width", s.noise_width);
    return s;
}

MethodConfig method_from_json(const json& j) {
    MethodConfig m;
    if (j.is_string()) {
        m.name = j.get<std::string>();
        return m;
    }
    reject_unknown_keys(j, {"name", "dropout_rate", "samples", "members", "replicates", "rff_dim",
                            "ridge", "length_scale", "spectral_bound", "mean_field_lambda"},
                        "method");
    m.name = j.at("name").get<std::string>();
    read_opt(j, "dropout_rate", m.dropout_rate);
    read_opt(j, "samples", m.mc_samples);
    read_opt(j, "members", m.members);
    read_opt(j, "replicates", m.replicates);
    read_opt(j, "rff_dim", m.sngp.rff_dim);
    read_opt(j, "ridge", m.sngp.ridge);
    read_opt(j, "length_scale", m.sngp.length_scale);
    read_opt(j, "spectral_bound", m.sngp.spectral_bound);
    read_opt(j, "mean_field_lambda", m.sngp.mean_field_lambda);
    return m;
}

json method_to_json(const MethodConfig& m) {
    json j{{"name", m.name}};
    if (m.name == kMethodMcDropout) {
        j["dropout_rate"] = m.dropout_rate;
        j["samples"] = m.mc_samples;
    } else if (m.name == kMethodEnsemble) {
        j["members"] = m.members;
        j["replicates"] = m.replicates;
    } else if (m.name == kMethodSngp) {
        j["rff_dim"] = m.sngp.rff_dim;
        j["ridge"] = m.sngp.ridge;
        j["length_scale"] = m.sngp.length_scale;
        j["spectral_bound"] = m.sngp.spectral_bound;
        j["mean_field_lambda"] = m.sngp.mean_field_lambda;
    }
    return j;
}

std::size_t display_width(std::string_view s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
}

std::string pad(std::string_view s, std::size_t width) {
    std::string out(s);
    const std::size_t w = display_width(s);
    if (w < width) out.append(width - w, ' ');
    return out;
}

std::string render_grid(const std::vector<std::vector<std::string>>& cells) {
    std::vector<std::size_t> widths;
    for (const auto& row : cells) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (std::size_t c = 0; c < row.size(); ++c) {
            widths[c] = std::max(widths[c], display_width(row[c]));
        }
    }
    std::string out;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        std::string line;
        for (std::size_t c = 0; c < cells[r].size(); ++c) {
            if (c) line += " | ";
            line += pad(cells[r][c], widths[c]);
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (std::size_t c = 0; c < widths.size(); ++c) total += widths[c] + (c ? 3 : 0);
            out += std::string(total, '-') + '\n';
        }
    }
    return out;
}

std::string fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

const MeanStd* column_value(const MetricRow& r, MetricColumn c) {
    switch (c) {
        case MetricColumn::accuracy: return &r.accuracy;
        case MetricColumn::average_precision:
            return r.average_precision.n ? &r.average_precision : nullptr;
        case MetricColumn::ece: return &r.ece;
        case MetricColumn::mce: return &r.mce;
        case MetricColumn::auroc_ood: return r.auroc_ood ? &*r.auroc_ood : nullptr;
    }
    return nullptr;
}

bool higher_is_better(MetricColumn c) {
    return c == MetricColumn::accuracy || c == MetricColumn::average_precision ||
           c == MetricColumn::auroc_ood;
}

std::string seed_label(std::uint64_t seed) { return "seed" + std::to_string(seed); }

// Re-raises the active error with context, keeping its category.
[[noreturn]] void rethrow_with_context(const std::string& context) {
    try {
        throw;
    } catch (const NumericalError& e) {
        throw NumericalError(context + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(context + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(context + ": " + e.what());
    } catch (const IoError& e) {
        throw IoError(context + ": " + e.what());
    } catch (const std::exception& e) {
        throw Error(context + ": " + e.what());
    }
}

std::vector<std::size_t> layer_sizes_for(const ExperimentConfig& cfg) {
    std::vector<std::size_t> sizes{cfg.data.dim};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(2);
    return sizes;
}

TrainConfig train_config_for(const ExperimentConfig& cfg, std::uint64_t seed,
                             std::string_view label, std::uint64_t index) {
    TrainConfig t = cfg.train;
    t.seed = derive_seed(seed, std::string(label) + "-train", index);
    return t;
}

}  // namespace

std::vector<MethodConfig> default_methods() {
    std::vector<MethodConfig> out;
    for (auto name : {kMethodMsp, kMethodMcDropout, kMethodEnsemble, kMethodSngp}) {
        MethodConfig m;
        m.name = std::string(name);
        out.push_back(std::move(m));
    }
    return out;
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw ConfigError("config: seeds must not be empty");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
        throw ConfigError("config: seeds must be distinct");
    }
    if (bins == 0) throw ConfigError("config: bins must be >= 1");
    if (id_val_tag.empty()) throw ConfigError("config: id_val_tag must not be empty");
    jitter.validate();
    if (!prediction_files.empty()) return;

    if (methods.empty()) throw ConfigError("config: method list must not be empty");
    train.validate();
    if (data.n_train == 0 || data.n_val == 0 || data.n_ood == 0) {
        throw ConfigError("config: dataset sizes must be positive");
    }
    if (data.dim < 2) throw ConfigError("config: data dimension must be >= 2");
    if (data.noise < 0.0) throw ConfigError("config: noise must be non-negative");
    std::set<std::string> tags{"id-train", id_val_tag};
    for (const auto& step : data.steps) {
        if (step.tag.empty() || !tags.insert(step.tag).second) {
            throw ConfigError("config: ladder tags must be non-empty and unique ('" + step.tag +
                              "')");
        }
        if (step.kind == LadderStep::Kind::shift) step.shift.validate();
    }
    if (id_val_tag != "id-val") {
        throw ConfigError("config: generated ladders always tag validation data 'id-val'");
    }
    std::set<std::string> names;
    for (const auto& m : methods) {
        if (!kKnownMethods.count(m.name)) throw ConfigError("config: unknown method '" + m.name + "'");
        if (!names.insert(m.name).second) throw ConfigError("config: duplicate method " + m.name);
        if (m.name == kMethodMcDropout) {
            if (!(m.dropout_rate > 0.0 && m.dropout_rate < 1.0)) {
                throw ConfigError("config: mc_dropout rate must lie in (0, 1)");
            }
            if (m.mc_samples == 0) throw ConfigError("config: mc_dropout samples must be >= 1");
        }
        if (m.name == kMethodEnsemble && (m.members < 2 || m.replicates == 0)) {
            throw ConfigError("config: ensembles need >= 2 members and >= 1 replicate");
        }
        if (m.name == kMethodSngp &&
            (m.sngp.rff_dim == 0 || !(m.sngp.ridge > 0.0) || !(m.sngp.length_scale > 0.0) ||
             !(m.sngp.spectral_bound > 0.0))) {
            throw ConfigError("config: invalid SNGP parameters");
        }
    }
}

ExperimentConfig parse_config(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    try {
        reject_unknown_keys(doc, {"schema_version", "seeds", "data", "prediction_files", "hidden",
                                  "train", "methods", "bins", "id_val_tag", "transfer_pairs",
                                  "jitter", "output_dir"},
                            "config");
        if (!doc.contains("schema_version")) throw ConfigError("config: missing schema_version");
        const int version = doc.at("schema_version").get<int>();
        if (version != kConfigSchemaVersion) {
            throw ConfigError("config: unsupported schema_version " + std::to_string(version));
        }

        ExperimentConfig cfg;
        read_opt(doc, "seeds", cfg.seeds);
        read_opt(doc, "hidden", cfg.hidden);
        read_opt(doc, "bins", cfg.bins);
        read_opt(doc, "id_val_tag", cfg.id_val_tag);
        if (doc.contains("output_dir")) cfg.output_dir = doc["output_dir"].get<std::string>();
        if (doc.contains("prediction_files")) {
            cfg.prediction_files.clear();
            for (const auto& p : doc["prediction_files"]) {
                cfg.prediction_files.emplace_back(p.get<std::string>());
            }
        }
        if (doc.contains("data")) {
            const auto& d = doc["data"];
            reject_unknown_keys(d, {"n_train", "n_val", "n_ood", "noise", "dim", "ladder"},
                                "data");
            read_opt(d, "n_train", cfg.data.n_train);
            read_opt(d, "n_val", cfg.data.n_val);
            read_opt(d, "n_ood", cfg.data.n_ood);
            read_opt(d, "noise", cfg.data.noise);
            read_opt(d, "dim", cfg.data.dim);
            if (d.contains("ladder")) {
                cfg.data.steps.clear();
                for (const auto& s : d["ladder"]) {
                    LadderStep step;
                    step.tag = s.at("tag").get<std::string>();
                    const auto kind = s.value("kind", std::string("shift"));
                    if (kind == "novel") {
                        reject_unknown_keys(s, {"tag", "kind"}, "ladder step '" + step.tag + "'");
                        step.kind = LadderStep::Kind::novel;
                    } else if (kind == "shift") {
                        step.shift = shift_from_json(s, "ladder step '" + step.tag + "'");
                    } else {
                        throw ConfigError("config: unknown ladder kind '" + kind + "'");
                    }
                    cfg.data.steps.push_back(std::move(step));
                }
            }
        }
        if (doc.contains("train")) {
            const auto& t = doc["train"];
            reject_unknown_keys(t, {"learning_rate", "weight_decay", "epochs", "batch_size"},
                                "train");
            read_opt(t, "learning_rate", cfg.train.learning_rate);
            read_opt(t, "weight_decay", cfg.train.weight_decay);
            read_opt(t, "epochs", cfg.train.epochs);
            read_opt(t, "batch_size", cfg.train.batch_size);
        }
        if (doc.contains("methods")) {
            cfg.methods.clear();
            for (const auto& m : doc["methods"]) cfg.methods.push_back(method_from_json(m));
        }
        if (doc.contains("transfer_pairs")) {
            cfg.transfer_pairs.clear();
            for (const auto& p : doc["transfer_pairs"]) {
                if (!p.is_array() || p.size() != 2) {
                    throw ConfigError("config: transfer_pairs entries must be [source, target]");
                }
                cfg.transfer_pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
            }
        }
        if (doc.contains("jitter")) {
            const auto& j = doc["jitter"];
            reject_unknown_keys(j, {"brightness", "contrast", "saturation", "hue"}, "jitter");
            read_opt(j, "brightness", cfg.jitter.brightness);
            read_opt(j, "contrast", cfg.jitter.contrast);
            read_opt(j, "saturation", cfg.jitter.saturation);
            read_opt(j, "hue", cfg.jitter.hue);
        }
        cfg.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const ParameterError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_text_file(path));
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json doc;
    doc["schema_version"] = kConfigSchemaVersion;
    doc["seeds"] = cfg.seeds;
    json ladder = json::array();
    for (const auto& s : cfg.data.steps) {
        if (s.kind == LadderStep::Kind::novel) {
            ladder.push_back({{"tag", s.tag}, {"kind", "novel"}});
        } else {
            ladder.push_back({{"tag", s.tag},
                              {"kind", "shift"},
                              {"translation", s.shift.translation},
                              {"rotation", s.shift.rotation},
                              {"scale", s.shift.scale},
                              {"noise_inflation", s.shift.noise_inflation},
                              {"noise_width", s.shift.noise_width}});
        }
    }
    doc["data"] = {{"n_train", cfg.data.n_train}, {"n_val", cfg.data.n_val},
                   {"n_ood", cfg.data.n_ood},     {"noise", cfg.data.noise},
                   {"dim", cfg.data.dim},         {"ladder", std::move(ladder)}};
    json files = json::array();
    for (const auto& p : cfg.prediction_files) files.push_back(p.string());
    doc["prediction_files"] = std::move(files);
    doc["hidden"] = cfg.hidden;
    doc["train"] = {{"learning_rate", cfg.train.learning_rate},
                    {"weight_decay", cfg.train.weight_decay},
                    {"epochs", cfg.train.epochs},
                    {"batch_size", cfg.train.batch_size}};
    json methods = json::array();
    for (const auto& m : cfg.methods) methods.push_back(method_to_json(m));
    doc["methods"] = std::move(methods);
    doc["bins"] = cfg.bins;
    doc["id_val_tag"] = cfg.id_val_tag;
    json pairs = json::array();
    for (const auto& [s, t] : cfg.transfer_pairs) pairs.push_back({s, t});
    doc["transfer_pairs"] = std::move(pairs);
    doc["jitter"] = {{"brightness", cfg.jitter.brightness},
                     {"contrast", cfg.jitter.contrast},
                     {"saturation", cfg.jitter.saturation},
                     {"hue", cfg.jitter.hue}};
    doc["output_dir"] = cfg.output_dir.string();
    return doc.dump(2) + "\n";
}

const MetricRow* MetricsReport::find(std::string_view method, std::string_view dataset) const {
    for (const auto& r : rows) {
        if (r.method == method && r.dataset == dataset) return &r;
    }
    return nullptr;
}

ExperimentResult build_report(std::vector<PredictionSet> predictions, const std::string& id_val_tag,
                              std::size_t bins,
                              std::vector<std::pair<std::string, std::string>> transfer_pairs) {
    if (bins == 0) throw ConfigError("build_report: bins must be >= 1");
    for (const auto& p : predictions) p.validate();

    // method -> seed -> sets, all in first-appearance order.
    std::vector<std::string> methods;
    std::map<std::string, std::vector<std::uint64_t>> seeds_of;
    std::map<std::string, std::vector<std::string>> datasets_of;
    std::map<std::tuple<std::string, std::uint64_t, std::string>, const PredictionSet*> lookup;
    for (const auto& p : predictions) {
        if (std::find(methods.begin(), methods.end(), p.method) == methods.end()) {
            methods.push_back(p.method);
        }
        auto& seeds = seeds_of[p.method];
        if (std::find(seeds.begin(), seeds.end(), p.seed) == seeds.end()) seeds.push_back(p.seed);
        auto& ds = datasets_of[p.method];
        if (std::find(ds.begin(), ds.end(), p.tag) == ds.end()) ds.push_back(p.tag);
        if (!lookup.emplace(std::make_tuple(p.method, p.seed, p.tag), &p).second) {
            throw DataError("duplicate prediction set " + p.method + "/" + p.tag + "/" +
                            seed_label(p.seed));
        }
    }

    ExperimentResult result;
    result.report.bins = bins;
    result.report.id_val_tag = id_val_tag;
    result.transfer_pairs = std::move(transfer_pairs);

    for (const auto& method : methods) {
        auto& datasets = datasets_of[method];
        const auto id_it = std::find(datasets.begin(), datasets.end(), id_val_tag);
        if (id_it == datasets.end()) {
            throw ConfigError("method '" + method + "' has no '" + id_val_tag + "' predictions");
        }
        std::rotate(datasets.begin(), id_it, id_it + 1);
        const auto& seeds = seeds_of[method];

        for (const auto& dataset : datasets) {
            MetricRow row;
            row.method = method;
            row.dataset = dataset;
            std::vector<double> acc, ap, ece_v, mce_v, mceu_v, auroc_v;
            for (const auto seed : seeds) {
                const auto it = lookup.find({method, seed, dataset});
                if (it == lookup.end()) continue;
                const PredictionSet& p = *it->second;
                if (p.empty()) {
                    throw DataError("prediction set " + method + "/" + dataset + "/" +
                                    seed_label(seed) + " is empty");
                }
                const auto id_it2 = lookup.find({method, seed, id_val_tag});
                if (id_it2 == lookup.end()) {
                    throw ConfigError("method '" + method + "' " + seed_label(seed) +
                                      " has no '" + id_val_tag + "' predictions");
                }
                const BinStats stats = bin_statistics(p, bins);
                acc.push_back(accuracy(p));
                try {
                    ap.push_back(average_precision(p));
                } catch (const UndefinedMetricError&) {
                }
                ece_v.push_back(ece(stats));
                mce_v.push_back(mce(stats));
                mceu_v.push_back(mce_unweighted(stats));
                if (dataset != id_val_tag) {
                    auroc_v.push_back(
                        auroc_ood(id_it2->second->uncertainties(), p.uncertainties()));
                }
                result.report.reliability.push_back({method, dataset, seed, stats});
            }
            row.seeds = acc.size();
            row.accuracy = mean_std(acc);
            row.average_precision = mean_std(ap);
            row.ece = mean_std(ece_v);
            row.mce = mean_std(mce_v);
            row.mce_unweighted = mean_std(mceu_v);
            if (dataset != id_val_tag) row.auroc_ood = mean_std(auroc_v);
            result.report.rows.push_back(std::move(row));
        }

        if (datasets.size() < 2) continue;
        std::vector<TransferGrid> grids;
        for (const auto seed : seeds) {
            std::vector<PredictionSet> group;
            for (const auto& dataset : datasets) {
                const auto it = lookup.find({method, seed, dataset});
                if (it == lookup.end()) {
                    throw ConfigError("method '" + method + "' " + seed_label(seed) +
                                      " lacks dataset '" + dataset + "'");
                }
                group.push_back(*it->second);
            }
            grids.push_back(transfer_matrix(group, id_val_tag));
        }
        result.transfer.push_back(aggregate_transfer(grids));
    }
    result.predictions = std::move(predictions);
    return result;
}

std::vector<Dataset> experiment_datasets(const ExperimentConfig& cfg, std::uint64_t seed) {
    return make_ladder(cfg.data, seed);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    if (!cfg.prediction_files.empty()) {
        std::vector<PredictionSet> all;
        for (const auto& path : cfg.prediction_files) {
            auto sets = load_predictions(path);
            all.insert(all.end(), std::make_move_iterator(sets.begin()),
                       std::make_move_iterator(sets.end()));
        }
        return build_report(std::move(all), cfg.id_val_tag, cfg.bins, cfg.transfer_pairs);
    }

    const auto sizes = layer_sizes_for(cfg);
    std::vector<std::size_t> feature_sizes(sizes.begin(), sizes.end() - 1);
    std::map<std::uint64_t, std::vector<Dataset>> data_cache;
    auto data_for = [&](std::uint64_t seed) -> const std::vector<Dataset>& {
        auto it = data_cache.find(seed);
        if (it == data_cache.end()) it = data_cache.emplace(seed, experiment_datasets(cfg, seed)).first;
        return it->second;
    };

    std::vector<PredictionSet> predictions;
    auto flush_partial = [&] {
        if (cfg.output_dir.empty()) return;
        try {
            save_predictions(predictions, cfg.output_dir / "predictions.partial.csv");
        } catch (const std::exception&) {
        }
    };

    // Every evaluation dataset except id-train.
    auto predict_all = [&](const std::vector<Dataset>& data, std::uint64_t set_seed, auto&& fn) {
        for (const auto& d : data) {
            if (d.tag == "id-train") continue;
            PredictionSet p = fn(d);
            p.seed = set_seed;
            predictions.push_back(std::move(p));
        }
    };

    for (const auto& method : cfg.methods) {
        const std::string& name = method.name;
        if (name == kMethodEnsemble) {
            for (std::size_t r = 0; r < method.replicates; ++r) {
                const std::uint64_t data_seed = cfg.seeds[r % cfg.seeds.size()];
                const std::uint64_t set_seed =
                    r < cfg.seeds.size() ? data_seed : derive_seed(data_seed, "ensemble-id", r);
                std::string stage = "train";
                try {
                    const auto& data = data_for(data_seed);
                    EnsembleSpec spec;
                    spec.seed = set_seed;
                    for (std::size_t j = 0; j < method.members; ++j) {
                        const std::uint64_t idx = r * method.members + j;
                        const std::uint64_t init_seed = derive_seed(data_seed, name, idx);
                        Rng init(init_seed);
                        auto model = init_mlp(sizes, 0.0, std::nullopt, init);
                        spec.members.push_back(
                            train(std::move(model), data[0], train_config_for(cfg, data_seed, name, idx)));
                        spec.member_seeds.push_back(init_seed);
                    }
                    stage = "predict";
                    predict_all(data, set_seed,
                                [&](const Dataset& d) { return ensemble_predict(spec, d); });
                } catch (...) {
                    flush_partial();
                    rethrow_with_context(seed_label(data_seed) + ", method " + name +
                                         " (replicate " + std::to_string(r) + "), stage " + stage);
                }
            }
            continue;
        }

        for (const auto seed : cfg.seeds) {
            std::string stage = "data";
            try {
                const auto& data = data_for(seed);
                stage = "train";
                Rng init(derive_seed(seed, name, 0));
                const TrainConfig tcfg = train_config_for(cfg, seed, name, 0);
                if (name == kMethodSngp) {
                    const SngpModel sngp = train_sngp(feature_sizes, method.sngp, tcfg, data[0], init);
                    stage = "predict";
                    predict_all(data, seed, [&](const Dataset& d) {
                        return sngp_predict(sngp.network, sngp.head, d);
                    });
                } else if (name == kMethodMcDropout) {
                    auto model = train(init_mlp(sizes, method.dropout_rate, std::nullopt, init),
                                       data[0], tcfg);
                    stage = "predict";
                    Rng mc_rng(derive_seed(seed, "mc_dropout-predict", 0));
                    predict_all(data, seed, [&](const Dataset& d) {
                        return mc_dropout_predict(model, d, method.mc_samples, mc_rng);
                    });
                } else {
                    auto model =
                        train(init_mlp(sizes, 0.0, std::nullopt, init), data[0], tcfg);
                    stage = "predict";
                    predict_all(data, seed, [&](const Dataset& d) { return msp_predict(model, d); });
                }
            } catch (...) {
                flush_partial();
                rethrow_with_context(seed_label(seed) + ", method " + name + ", stage " + stage);
            }
        }
    }

    ExperimentResult result =
        build_report(std::move(predictions), cfg.id_val_tag, cfg.bins, cfg.transfer_pairs);
    if (!cfg.output_dir.empty()) {
        save_predictions(result.predictions, cfg.output_dir / "predictions.csv");
        write_text_file(cfg.output_dir / "config.json", config_to_json(cfg));
    }
    return result;
}

std::string format_mean_std(const MeanStd& v) {
    return fixed3(v.mean) + " ± " + fixed3(v.std);
}

std::optional<std::size_t> best_row(const std::vector<const MetricRow*>& rows, MetricColumn column) {
    std::vector<std::pair<const MeanStd*, std::size_t>> vals;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (const MeanStd* v = column_value(*rows[i], column)) vals.emplace_back(v, i);
    }
    if (vals.size() < 2) return std::nullopt;
    const bool hi = higher_is_better(column);
    std::stable_sort(vals.begin(), vals.end(), [hi](const auto& a, const auto& b) {
        return hi ? a.first->mean > b.first->mean : a.first->mean < b.first->mean;
    });
    const double gap = std::abs(vals[0].first->mean - vals[1].first->mean);
    if (gap > vals[0].first->std) return vals[0].second;
    return std::nullopt;
}

std::string metrics_csv(const MetricsReport& report) {
    std::ostringstream out;
    out << "method,dataset,seeds,accuracy_mean,accuracy_std,ap_mean,ap_std,ece_mean,ece_std,"
           "mce_mean,mce_std,mce_unweighted_mean,mce_unweighted_std,auroc_ood_mean,auroc_ood_std\n";
    auto put = [&](const MeanStd& v, bool present) {
        if (present) {
            out << ',' << fixed3(v.mean) << ',' << fixed3(v.std);
        } else {
            out << ",-,-";
        }
    };
    for (const auto& r : report.rows) {
        out << r.method << ',' << r.dataset << ',' << r.seeds;
        put(r.accuracy, true);
        put(r.average_precision, r.average_precision.n > 0);
        put(r.ece, true);
        put(r.mce, true);
        put(r.mce_unweighted, true);
        put(r.auroc_ood.value_or(MeanStd{}), r.auroc_ood.has_value());
        out << '\n';
    }
    return out.str();
}

std::string metrics_table(const MetricsReport& report) {
    std::vector<std::string> datasets;
    for (const auto& r : report.rows) {
        if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) {
            datasets.push_back(r.dataset);
        }
    }
    std::stable_partition(datasets.begin(), datasets.end(),
                          [&](const std::string& d) { return d == report.id_val_tag; });

    std::string out;
    const MetricColumn marked[] = {MetricColumn::accuracy, MetricColumn::average_precision,
                                   MetricColumn::ece, MetricColumn::mce, MetricColumn::auroc_ood};
    for (const auto& dataset : datasets) {
        std::vector<const MetricRow*> rows;
        for (const auto& r : report.rows) {
            if (r.dataset == dataset) rows.push_back(&r);
        }
        std::vector<std::optional<std::size_t>> best;
        for (auto c : marked) best.push_back(best_row(rows, c));

        std::vector<std::vector<std::string>> grid;
        grid.push_back({"UE method", "Accuracy ↑", "AP ↑", "ECE ↓", "MCE ↓", "MCE-unw ↓",
                        "AUROC-ood ↑"});
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& r = *rows[i];
            auto cell = [&](std::size_t col, const MeanStd* v) {
                if (!v) return std::string("-");
                return format_mean_std(*v) + (best[col] == i ? " *" : "");
            };
            grid.push_back({r.method, cell(0, &r.accuracy),
                            cell(1, column_value(r, MetricColumn::average_precision)),
                            cell(2, &r.ece), cell(3, &r.mce), format_mean_std(r.mce_unweighted),
                            cell(4, column_value(r, MetricColumn::auroc_ood))});
        }
        out += "== " + dataset + " ==\n" + render_grid(grid) + "\n";
    }
    out += "mean ± std over seeds (population std, divisor n); " + std::to_string(report.bins) +
           " calibration bins.\n"
           "* best in column, ahead of the runner-up by more than its std.\n"
           "MCE is the bin-weighted maximum (n_b/N)|acc-con|; MCE-unw is the unweighted maximum.\n";
    return out;
}

std::string transfer_csv(const TransferMatrix& m) {
    std::ostringstream out;
    out << "method,source,target,seeds,all_rejected_seeds,accuracy_before_mean,"
           "accuracy_before_std,accuracy_mean,accuracy_std,ap_mean,ap_std,fraction_retained_mean,"
           "fraction_retained_std\n";
    for (std::size_t s = 0; s < m.datasets.size(); ++s) {
        for (std::size_t t = 0; t < m.datasets.size(); ++t) {
            const auto& c = m.cells[s][t];
            out << m.method << ',' << m.datasets[s] << ',' << m.datasets[t] << ',' << c.seeds
                << ',' << c.all_rejected_seeds << ',' << fixed3(c.accuracy_before.mean) << ','
                << fixed3(c.accuracy_before.std);
            if (c.has_metrics()) {
                out << ',' << fixed3(c.accuracy.mean) << ',' << fixed3(c.accuracy.std);
            } else {
                out << ",rejected,rejected";
            }
            if (c.average_precision.n) {
                out << ',' << fixed3(c.average_precision.mean) << ','
                    << fixed3(c.average_precision.std);
            } else {
                out << (c.has_metrics() ? ",-,-" : ",rejected,rejected");
            }
            out << ',' << fixed3(c.fraction_retained.mean) << ','
                << fixed3(c.fraction_retained.std) << '\n';
        }
    }
    return out.str();
}

std::string transfer_table(const TransferMatrix& m) {
    std::vector<std::string> notes;
    auto section = [&](const std::string& title, auto&& value) {
        std::vector<std::vector<std::string>> grid;
        std::vector<std::string> header{"threshold set on \\ evaluated on"};
        header.insert(header.end(), m.datasets.begin(), m.datasets.end());
        grid.push_back(header);
        for (std::size_t s = 0; s < m.datasets.size(); ++s) {
            std::vector<std::string> row{m.datasets[s]};
            for (std::size_t t = 0; t < m.datasets.size(); ++t) row.push_back(value(m.cells[s][t]));
            grid.push_back(std::move(row));
        }
        return title + "\n" + render_grid(grid) + "\n";
    };
    auto metric_cell = [](const TransferCell& c, const MeanStd& v) {
        if (!c.has_metrics()) return std::string("rejected†");
        if (v.n == 0) return std::string("-");
        return format_mean_std(v) + (c.all_rejected_seeds ? " †" : "");
    };

    std::string out = "Method: " + m.method + "\n\n";
    out += section("Accuracy", [&](const TransferCell& c) { return metric_cell(c, c.accuracy); });
    out += section("Average precision",
                   [&](const TransferCell& c) { return metric_cell(c, c.average_precision); });
    out += section("Fraction retained",
                   [&](const TransferCell& c) { return format_mean_std(c.fraction_retained); });
    for (std::size_t s = 0; s < m.datasets.size(); ++s) {
        for (std::size_t t = 0; t < m.datasets.size(); ++t) {
            const auto& c = m.cells[s][t];
            if (c.all_rejected_seeds) {
                notes.push_back("† " + m.datasets[s] + " -> " + m.datasets[t] +
                                ": all samples rejected for " +
                                std::to_string(c.all_rejected_seeds) + " of " +
                                std::to_string(c.seeds) + " seed(s)");
            }
        }
    }
    for (const auto& n : notes) out += n + "\n";
    out += "mean ± std over seeds with at least one retained sample.\n";
    return out;
}

namespace {

const TransferCell* pair_cell(const TransferMatrix& m, const std::string& source,
                              const std::string& target) {
    const auto s = std::find(m.datasets.begin(), m.datasets.end(), source);
    const auto t = std::find(m.datasets.begin(), m.datasets.end(), target);
    if (s == m.datasets.end() || t == m.datasets.end()) return nullptr;
    return &m.cells[static_cast<std::size_t>(s - m.datasets.begin())]
                   [static_cast<std::size_t>(t - m.datasets.begin())];
}

}  // namespace

std::string fraction_retained_csv(const ExperimentResult& result) {
    std::ostringstream out;
    out << "method,source,target,fraction_retained_mean,fraction_retained_std,all_rejected_seeds\n";
    for (const auto& m : result.transfer) {
        for (const auto& [source, target] : result.transfer_pairs) {
            const auto* c = pair_cell(m, source, target);
            if (!c) continue;
            out << m.method << ',' << source << ',' << target << ','
                << fixed3(c->fraction_retained.mean) << ',' << fixed3(c->fraction_retained.std)
                << ',' << c->all_rejected_seeds << '\n';
        }
    }
    return out.str();
}

std::string fraction_retained_table(const ExperimentResult& result) {
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header{"UE method"};
    for (const auto& [source, target] : result.transfer_pairs) {
        header.push_back(target + " (threshold: " + source + ")");
    }
    grid.push_back(header);
    for (const auto& m : result.transfer) {
        std::vector<std::string> row{m.method};
        for (const auto& [source, target] : result.transfer_pairs) {
            const auto* c = pair_cell(m, source, target);
            row.push_back(c ? format_mean_std(c->fraction_retained) : "-");
        }
        grid.push_back(std::move(row));
    }
    return "Fraction of samples retained after rejection\n" + render_grid(grid);
}

std::string threshold_accuracy_csv(const ExperimentResult& result) {
    std::ostringstream out;
    out << "method,source,target,accuracy_before_mean,accuracy_before_std,accuracy_after_mean,"
           "accuracy_after_std,accuracy_change,fraction_retained_mean,all_rejected_seeds\n";
    for (const auto& m : result.transfer) {
        for (const auto& [source, target] : result.transfer_pairs) {
            const auto* c = pair_cell(m, source, target);
            if (!c) continue;
            out << m.method << ',' << source << ',' << target << ','
                << fixed3(c->accuracy_before.mean) << ',' << fixed3(c->accuracy_before.std);
            if (c->has_metrics()) {
                out << ',' << fixed3(c->accuracy.mean) << ',' << fixed3(c->accuracy.std) << ','
                    << fixed3(c->accuracy.mean - c->accuracy_before.mean);
            } else {
                out << ",rejected,rejected,rejected";
            }
            out << ',' << fixed3(c->fraction_retained.mean) << ',' << c->all_rejected_seeds
                << '\n';
        }
    }
    return out.str();
}

std::vector<std::filesystem::path> emit_report(const ExperimentResult& result,
                                               const std::filesystem::path& outdir) {
    if (result.report.rows.empty()) throw DataError("emit_report: report is empty");
    std::error_code ec;
    std::filesystem::create_directories(outdir, ec);
    if (ec) throw IoError("cannot create '" + outdir.string() + "': " + ec.message());

    std::vector<std::filesystem::path> written;
    auto emit = [&](const std::filesystem::path& rel, const std::string& text) {
        write_text_file(outdir / rel, text);
        written.push_back(outdir / rel);
    };
    emit("metrics.csv", metrics_csv(result.report));
    emit("metrics.txt", metrics_table(result.report));
    for (const auto& m : result.transfer) {
        emit("transfer_" + m.method + ".csv", transfer_csv(m));
        emit("transfer_" + m.method + ".txt", transfer_table(m));
    }
    emit("fraction_retained.csv", fraction_retained_csv(result));
    emit("fraction_retained.txt", fraction_retained_table(result));
    emit("threshold_accuracy.csv", threshold_accuracy_csv(result));
    for (const auto& rec : result.report.reliability) {
        std::ostringstream ss;
        write_bins_csv(rec.bins, ss);
        emit(std::filesystem::path("reliability") /
                 (rec.method + "__" + rec.dataset + "__" + seed_label(rec.seed) + ".csv"),
             ss.str());
    }
    return written;
}

}  // namespace uqlab
