#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "uqlab/datagen.hpp"
#include "uqlab/metrics.hpp"
#include "uqlab/model.hpp"
#include "uqlab/uq.hpp"

namespace uqlab {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_real(double v);
/// Strict parse of a whole field; throws ParseError(line) on trailing junk.
double parse_real(std::string_view field, std::size_t line);

// --- datasets ---------------------------------------------------------------

/// Header `x0,x1,...,label,tag`, one row per sample, LF line endings.
void write_dataset_csv(const Dataset& data, std::ostream& out);
Dataset read_dataset_csv(std::istream& in);
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// --- predictions ------------------------------------------------------------

inline constexpr int kPredictionSchemaVersion = 1;
inline constexpr std::string_view kPredictionHeader =
    "sample_id,dataset,method,seed,component_index,label,logit0,logit1";

/// Long format: one line per (sample, component). Single-pass sets use
/// component_index -1; MC passes and ensemble members are numbered from 0.
/// An optional first line `# schema_version: N` is accepted on input.
void write_predictions_csv(std::span<const PredictionSet> sets, std::ostream& out);

/// Rebuilds sets grouped by (dataset, method, seed) in order of first
/// appearance; probabilities and uncertainties are recomputed from the logits.
/// Throws ParseError with the offending line and VersionError for an
/// unsupported schema.
std::vector<PredictionSet> read_predictions_csv(std::istream& in);

void save_predictions(std::span<const PredictionSet> sets, const std::filesystem::path& path);
std::vector<PredictionSet> load_predictions(const std::filesystem::path& path);

// --- model checkpoints ------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

/// JSON document: format tag, version, layer sizes, row-major weights,
/// biases, random-feature layer, dropout rate, spectral bound, seed and
/// power-iteration state.
std::string model_to_json(const MlpClassifier& model);
MlpClassifier model_from_json(std::string_view text);
void save_model(const MlpClassifier& model, const std::filesystem::path& path);
MlpClassifier load_model(const std::filesystem::path& path);

/// SNGP head; only the precision is stored, the covariance is recomputed.
std::string sngp_head_to_json(const SngpHead& head);
SngpHead sngp_head_from_json(std::string_view text);

// --- reliability diagram ----------------------------------------------------

/// Header `bin_lo,bin_hi,n,acc,con`.
void write_bins_csv(const BinStats& stats, std::ostream& out);

/// Reads a whole file; throws IoError when it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);
/// Creates parent directories; throws IoError on failure.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace uqlab
