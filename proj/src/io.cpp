#include "uqlab/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "uqlab/errors.hpp"

namespace uqlab {

using nlohmann::json;

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

bool next_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

template <class Int>
Int parse_int(std::string_view field, std::size_t line, const char* what) {
    Int v{};
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) {
        throw ParseError(line, std::string("invalid ") + what + " '" + std::string(field) + "'");
    }
    return v;
}

int parse_label(std::string_view field, std::size_t line) {
    const int y = parse_int<int>(field, line, "label");
    if (y != 0 && y != 1) throw ParseError(line, "label must be 0 or 1");
    return y;
}

void check_token(const std::string& s, const char* what) {
    if (s.empty()) throw DataError(std::string(what) + " must not be empty");
    if (s.find_first_of(",\n\r") != std::string::npos) {
        throw DataError(std::string(what) + " '" + s + "' contains a comma or line break");
    }
}

json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()},
                {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix matrix_from_json(const json& j) {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
}

void check_format(const json& doc, const char* format, int version) {
    if (!doc.is_object() || doc.value("format", std::string{}) != format) {
        throw ParseError(0, std::string("not a ") + format + " document");
    }
    const int v = doc.value("version", -1);
    if (v != version) {
        throw VersionError(std::string(format) + ": unsupported version " + std::to_string(v));
    }
}

json parse_json(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(0, std::string("invalid JSON: ") + e.what());
    }
}

}  // namespace

std::string format_real(double v) {
    if (!std::isfinite(v)) throw NumericalError("cannot serialise a non-finite value");
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw NumericalError("failed to format a real value");
    return std::string(buf, ptr);
}

double parse_real(std::string_view field, std::size_t line) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty() ||
        !std::isfinite(v)) {
        throw ParseError(line, "invalid real '" + std::string(field) + "'");
    }
    return v;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// --- datasets ---------------------------------------------------------------

void write_dataset_csv(const Dataset& data, std::ostream& out) {
    data.validate();
    check_token(data.tag, "dataset tag");
    for (std::size_t k = 0; k < data.dim(); ++k) out << 'x' << k << ',';
    out << "label,tag\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data.features.row(i)) out << format_real(v) << ',';
        out << data.labels[i] << ',' << data.tag << '\n';
    }
}

Dataset read_dataset_csv(std::istream& in) {
    std::string line;
    if (!next_line(in, line)) throw ParseError(1, "missing header");
    const auto header = split_csv(line);
    if (header.size() < 3 || header[header.size() - 2] != "label" || header.back() != "tag") {
        throw ParseError(1, "dataset header must be x0,...,label,tag");
    }
    const std::size_t dim = header.size() - 2;
    for (std::size_t k = 0; k < dim; ++k) {
        if (header[k] != "x" + std::to_string(k)) {
            throw ParseError(1, "dataset header must be x0,...,label,tag");
        }
    }

    Dataset out;
    std::vector<double> values;
    std::size_t lineno = 1;
    while (next_line(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != dim + 2) {
            throw ParseError(lineno, "expected " + std::to_string(dim + 2) + " fields, got " +
                                         std::to_string(fields.size()));
        }
        for (std::size_t k = 0; k < dim; ++k) values.push_back(parse_real(fields[k], lineno));
        out.labels.push_back(parse_label(fields[dim], lineno));
        const std::string tag(fields[dim + 1]);
        if (tag.empty()) throw ParseError(lineno, "empty tag");
        if (out.tag.empty()) {
            out.tag = tag;
        } else if (tag != out.tag) {
            throw ParseError(lineno, "mixed dataset tags '" + out.tag + "' and '" + tag + "'");
        }
    }
    out.features = Matrix(out.labels.size(), dim, std::move(values));
    if (out.tag.empty()) out.tag = "unnamed";
    return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
    std::ostringstream ss;
    write_dataset_csv(data, ss);
    write_text_file(path, ss.str());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    return read_dataset_csv(in);
}

// --- predictions ------------------------------------------------------------

void write_predictions_csv(std::span<const PredictionSet> sets, std::ostream& out) {
    out << kPredictionHeader << '\n';
    for (const auto& set : sets) {
        check_token(set.tag, "dataset tag");
        check_token(set.method, "method name");
        if (set.single_pass) {
            for (const auto& r : set.rows) {
                if (r.components.size() != 1) {
                    throw DataError("single-pass set '" + set.method + "/" + set.tag +
                                    "' has a row with " + std::to_string(r.components.size()) +
                                    " components");
                }
            }
        }
        for (const auto& r : set.rows) {
            for (std::size_t k = 0; k < r.components.size(); ++k) {
                out << r.sample_id << ',' << set.tag << ',' << set.method << ',' << set.seed
                    << ',' << (set.single_pass ? std::int64_t{-1} : static_cast<std::int64_t>(k))
                    << ',' << r.label << ',' << format_real(r.components[k][0]) << ','
                    << format_real(r.components[k][1]) << '\n';
            }
        }
    }
}

std::vector<PredictionSet> read_predictions_csv(std::istream& in) {
    std::string line;
    std::size_t lineno = 1;
    if (!next_line(in, line)) throw ParseError(1, "missing header");
    constexpr std::string_view version_prefix = "# schema_version:";
    if (line.starts_with(version_prefix)) {
        std::string_view v(line);
        v.remove_prefix(version_prefix.size());
        while (!v.empty() && v.front() == ' ') v.remove_prefix(1);
        const int version = parse_int<int>(v, lineno, "schema version");
        if (version != kPredictionSchemaVersion) {
            throw VersionError("unsupported prediction schema version " + std::to_string(version));
        }
        ++lineno;
        if (!next_line(in, line)) throw ParseError(lineno, "missing header");
    }
    if (line != kPredictionHeader) {
        if (line.starts_with("sample_id,")) {
            throw VersionError("unknown prediction schema header '" + line + "'");
        }
        throw ParseError(lineno, "expected header '" + std::string(kPredictionHeader) + "'");
    }

    struct Draft {
        std::uint64_t id;
        int label;
        std::vector<Logits> components;
    };
    struct Building {
        PredictionSet set;
        std::vector<Draft> drafts;
        std::map<std::uint64_t, bool> ids;
    };
    std::vector<Building> sets;
    std::map<std::tuple<std::string, std::string, std::uint64_t>, std::size_t> index;

    while (next_line(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 8) {
            throw ParseError(lineno, "expected 8 fields, got " + std::to_string(f.size()));
        }
        const auto id = parse_int<std::uint64_t>(f[0], lineno, "sample_id");
        const std::string dataset(f[1]);
        const std::string method(f[2]);
        if (dataset.empty() || method.empty()) throw ParseError(lineno, "empty dataset or method");
        const auto seed = parse_int<std::uint64_t>(f[3], lineno, "seed");
        const auto comp = parse_int<std::int64_t>(f[4], lineno, "component_index");
        if (comp < -1) throw ParseError(lineno, "component_index must be >= -1");
        const int label = parse_label(f[5], lineno);
        const Logits z{parse_real(f[6], lineno), parse_real(f[7], lineno)};

        const auto key = std::make_tuple(dataset, method, seed);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, sets.size()).first;
            Building b;
            b.set.method = method;
            b.set.tag = dataset;
            b.set.seed = seed;
            b.set.single_pass = comp == -1;
            sets.push_back(std::move(b));
        }
        auto& b = sets[it->second];
        if (b.set.single_pass != (comp == -1)) {
            throw ParseError(lineno, "set mixes single-pass and multi-component rows");
        }
        if (comp <= 0) {
            if (b.ids.count(id)) throw ParseError(lineno, "duplicate sample_id " + std::to_string(id));
            b.ids[id] = true;
            b.drafts.push_back({id, label, {z}});
            continue;
        }
        if (b.drafts.empty() || b.drafts.back().id != id ||
            b.drafts.back().components.size() != static_cast<std::size_t>(comp)) {
            throw ParseError(lineno, "component " + std::to_string(comp) + " of sample " +
                                         std::to_string(id) + " is out of order");
        }
        if (b.drafts.back().label != label) {
            throw ParseError(lineno, "label differs between components of one sample");
        }
        b.drafts.back().components.push_back(z);
    }

    std::vector<PredictionSet> out;
    out.reserve(sets.size());
    for (auto& b : sets) {
        const ScoreKind kind = score_kind_for(b.set.method);
        b.set.rows.reserve(b.drafts.size());
        for (auto& d : b.drafts) {
            b.set.rows.push_back(make_prediction_row(d.id, d.label, std::move(d.components), kind));
        }
        out.push_back(std::move(b.set));
    }
    return out;
}

void save_predictions(std::span<const PredictionSet> sets, const std::filesystem::path& path) {
    std::ostringstream ss;
    write_predictions_csv(sets, ss);
    write_text_file(path, ss.str());
}

std::vector<PredictionSet> load_predictions(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    return read_predictions_csv(in);
}

// --- model checkpoints ------------------------------------------------------

std::string model_to_json(const MlpClassifier& model) {
    json doc;
    doc["format"] = "uqlab-mlp";
    doc["version"] = kCheckpointVersion;
    doc["layer_sizes"] = model.layer_sizes();
    json layers = json::array();
    for (const auto& l : model.layers) {
        json jl = matrix_to_json(l.weight);
        jl["bias"] = l.bias;
        jl["activation"] = l.activation == Activation::relu ? "relu" : "identity";
        layers.push_back(std::move(jl));
    }
    doc["layers"] = std::move(layers);
    if (model.random_features) {
        json rf = matrix_to_json(model.random_features->weight);
        rf["phase"] = model.random_features->phase;
        rf["length_scale"] = model.random_features->length_scale;
        doc["random_features"] = std::move(rf);
    } else {
        doc["random_features"] = nullptr;
    }
    doc["dropout_rate"] = model.dropout_rate;
    doc["spectral_bound"] = model.spectral_bound ? json(*model.spectral_bound) : json(nullptr);
    json sn = json::array();
    for (const auto& st : model.sn_state) sn.push_back(st.u);
    doc["sn_state"] = std::move(sn);
    doc["seed"] = model.seed;
    doc["trained"] = model.trained;
    return doc.dump();
}

MlpClassifier model_from_json(std::string_view text) {
    const json doc = parse_json(text);
    check_format(doc, "uqlab-mlp", kCheckpointVersion);
    try {
        MlpClassifier model;
        for (const auto& jl : doc.at("layers")) {
            DenseLayer l;
            l.weight = matrix_from_json(jl);
            l.bias = jl.at("bias").get<std::vector<double>>();
            const auto act = jl.at("activation").get<std::string>();
            if (act != "relu" && act != "identity") {
                throw ParseError(0, "unknown activation '" + act + "'");
            }
            l.activation = act == "relu" ? Activation::relu : Activation::identity;
            model.layers.push_back(std::move(l));
        }
        if (!doc.at("random_features").is_null()) {
            const auto& jr = doc["random_features"];
            model.random_features = RandomFeatureLayer{
                matrix_from_json(jr), jr.at("phase").get<std::vector<double>>(),
                jr.at("length_scale").get<double>()};
        }
        model.dropout_rate = doc.at("dropout_rate").get<double>();
        if (!doc.at("spectral_bound").is_null()) {
            model.spectral_bound = doc["spectral_bound"].get<double>();
        }
        for (const auto& u : doc.at("sn_state")) {
            model.sn_state.push_back(PowerIterationState{u.get<std::vector<double>>()});
        }
        model.seed = doc.at("seed").get<std::uint64_t>();
        model.trained = doc.at("trained").get<bool>();
        model.validate();
        if (model.layer_sizes() != doc.at("layer_sizes").get<std::vector<std::size_t>>()) {
            throw ParseError(0, "layer_sizes do not match the stored layers");
        }
        return model;
    } catch (const json::exception& e) {
        throw ParseError(0, std::string("malformed checkpoint: ") + e.what());
    } catch (const ConfigError& e) {
        throw ParseError(0, std::string("inconsistent checkpoint: ") + e.what());
    } catch (const DimensionError& e) {
        throw ParseError(0, std::string("inconsistent checkpoint: ") + e.what());
    }
}

void save_model(const MlpClassifier& model, const std::filesystem::path& path) {
    write_text_file(path, model_to_json(model) + "\n");
}

MlpClassifier load_model(const std::filesystem::path& path) {
    return model_from_json(read_text_file(path));
}

std::string sngp_head_to_json(const SngpHead& head) {
    json doc;
    doc["format"] = "uqlab-sngp-head";
    doc["version"] = kCheckpointVersion;
    doc["rff_weights"] = matrix_to_json(head.rff_weights);
    doc["rff_phases"] = head.rff_phases;
    doc["length_scale"] = head.length_scale;
    doc["beta"] = head.beta;
    doc["bias"] = head.bias;
    doc["ridge"] = head.ridge;
    doc["mean_field_lambda"] = head.mean_field_lambda;
    doc["precision"] = matrix_to_json(head.precision);
    return doc.dump();
}

SngpHead sngp_head_from_json(std::string_view text) {
    const json doc = parse_json(text);
    check_format(doc, "uqlab-sngp-head", kCheckpointVersion);
    try {
        SngpHead head;
        head.rff_weights = matrix_from_json(doc.at("rff_weights"));
        head.rff_phases = doc.at("rff_phases").get<std::vector<double>>();
        head.length_scale = doc.at("length_scale").get<double>();
        head.beta = doc.at("beta").get<std::vector<double>>();
        head.bias = doc.at("bias").get<double>();
        head.ridge = doc.at("ridge").get<double>();
        head.mean_field_lambda = doc.at("mean_field_lambda").get<double>();
        head.precision = matrix_from_json(doc.at("precision"));
        const std::size_t d = head.rff_dim();
        if (head.rff_phases.size() != d || head.beta.size() != d || head.precision.rows() != d ||
            head.precision.cols() != d) {
            throw ParseError(0, "SNGP head dimensions are inconsistent");
        }
        head.covariance = spd_inverse(head.precision);
        return head;
    } catch (const json::exception& e) {
        throw ParseError(0, std::string("malformed SNGP head: ") + e.what());
    } catch (const DimensionError& e) {
        throw ParseError(0, std::string("malformed SNGP head: ") + e.what());
    }
}

// --- reliability diagram ----------------------------------------------------

void write_bins_csv(const BinStats& stats, std::ostream& out) {
    out << "bin_lo,bin_hi,n,acc,con\n";
    for (const auto& b : stats.bins) {
        out << format_real(b.lo) << ',' << format_real(b.hi) << ',' << b.count << ','
            << format_real(b.accuracy) << ',' << format_real(b.confidence) << '\n';
    }
}

}  // namespace uqlab
