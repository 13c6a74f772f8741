#ifndef QPROP_DATASET_HPP
#define QPROP_DATASET_HPP

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "qp/likelihoods.hpp"

namespace qp {

struct DatasetProvenance {
  std::string source_path;
  int rows_dropped = 0;  // rows removed for missing values
  std::string preprocessing;
};

struct Dataset {
  std::string name;
  Eigen::MatrixXd x;    // n x d features
  std::vector<int> y;   // labels (+-1) or counts
  Task task = Task::binary;
  DatasetProvenance provenance;

  int n() const { return static_cast<int>(x.rows()); }
  int dim() const { return static_cast<int>(x.cols()); }
  void validate() const;
};

struct CsvSchema {
  std::string label_column;
  std::vector<std::string> feature_columns;  // empty: every other column
  Task task = Task::binary;
  // Binary tasks: raw label values mapped to -1 and +1, in that order. Rows
  // with other labels are excluded (pairwise tasks on multiclass sources).
  // Empty: expect exactly two distinct values and map them sorted.
  std::vector<std::string> label_values;
};

// CSV with a header row, UTF-8, comma separated. Rows containing missing
// values (empty cell, "NA", "?") are dropped and counted.
Dataset load_dataset(const std::string& path, const CsvSchema& schema);

struct FoldSplit {
  std::vector<int> train_idx;
  std::vector<int> test_idx;
};

// Seeded permutation split into k near-equal folds; fold j is the test set of
// split j. Deterministic per (seed, k, n).
std::vector<FoldSplit> make_folds(int n, std::uint64_t seed, int k);

struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // per-column sd of the train split; 1 where sd == 0
};

Standardization fit_standardizer(const Eigen::MatrixXd& x_train);
Eigen::MatrixXd apply_standardizer(const Standardization& s, const Eigen::MatrixXd& x);

// Event-time list (single "event_time" column, fractional years).
std::vector<double> load_event_times(const std::string& path);

struct CoalSplit {
  Dataset train;
  Dataset test;
  bool retried = false;        // a degenerate split forced a derived seed
  std::uint64_t seed_used = 0;
};

// Assigns every event to train or test with probability 1/2 (seeded), then
// bins each sequence into yearly counts: x = year midpoint, y = events that
// year, over the full year span of the input sequence.
CoalSplit prepare_coal_mining(const std::vector<double>& event_times, std::uint64_t seed);

}  // namespace qp

#endif
