#pragma once

#include "spamtree/mcmc.hpp"
#include "spamtree/model.hpp"
#include "spamtree/predict.hpp"
#include "spamtree/synthgen.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace spamtree {

/// Shortest decimal text that parses back to the same double, independent
/// of the locale. NaN is written as an empty string.
std::string format_double(double x);
/// Locale-independent parse; throws on trailing characters.
double parse_double(const std::string& s);

struct IngestOptions {
  int dim = 2;
  int num_vars = 0;  // 0 infers q from the largest variable index
};

struct IngestReport {
  std::vector<int> rows_per_var;
  std::vector<int> observed_per_var;
  int spatial_locations = 0;
  int fully_observed_locations = 0;  // every outcome recorded
  int single_outcome_locations = 0;  // exactly one outcome recorded
  std::vector<std::string> warnings;
};

/// CSV with a header; columns are d coordinates, the variable index, the
/// outcome (empty for missing), then covariates.
ModelData read_data_csv(std::istream& is, const IngestOptions& opt, IngestReport* report = nullptr);
ModelData read_data_csv(const std::string& path, const IngestOptions& opt,
                        IngestReport* report = nullptr);
void write_data_csv(std::ostream& os, const ModelData& data);
void write_data_csv(const std::string& path, const ModelData& data);
std::string describe(const IngestReport& r);

void write_truth_csv(const std::string& path, const ModelData& data, const SynthTruth& truth);

/// Rows of numbers under a header of column names.
void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<Vector>& rows);
std::vector<Vector> read_table(const std::string& path, std::vector<std::string>* header = nullptr);

/// Retained draws as samples/{w,beta,tau2,theta}.csv under `dir`.
void write_samples(const std::string& dir, const ThetaLayout& layout,
                   const std::vector<Draw>& draws);
std::vector<Draw> read_samples(const std::string& dir);

void write_predictions(const std::string& path, const LocationSet& locs,
                       const PredictionSummary& s, const std::vector<std::uint8_t>& observed);
void write_scores(const std::string& path, const std::vector<Score>& scores);

/// Flat `key = value` text with `#` comments.
using KeyValues = std::map<std::string, std::string>;
KeyValues read_key_values(const std::string& path);
void write_key_values(const std::string& path, const KeyValues& kv);

}  // namespace spamtree
