#include "qp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "qp/detail/rng.hpp"
#include "qp/errors.hpp"

namespace qp {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "na" || cell == "?";
}

bool parse_double(const std::string& cell, double* out) {
  try {
    std::size_t pos = 0;
    *out = std::stod(cell, &pos);
    return pos == cell.size() && std::isfinite(*out);
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

void Dataset::validate() const {
  if (x.rows() == 0 || x.cols() == 0) throw ValidationError("Dataset: empty");
  if (static_cast<int>(y.size()) != x.rows()) {
    throw ValidationError("Dataset: label count != row count");
  }
  if (!x.allFinite()) throw ValidationError("Dataset: non-finite feature");
  for (int v : y) Observation{task, v}.validate();
}

Dataset load_dataset(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("load_dataset: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("load_dataset: empty file " + path);
  const std::vector<std::string> header = split_csv_line(line);

  const auto column_index = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw ValidationError("load_dataset: column '" + name + "' not in " + path);
    }
    return static_cast<int>(it - header.begin());
  };

  const int label_idx = column_index(schema.label_column);
  std::vector<int> feat_idx;
  if (schema.feature_columns.empty()) {
    for (int i = 0; i < static_cast<int>(header.size()); ++i) {
      if (i != label_idx) feat_idx.push_back(i);
    }
  } else {
    for (const auto& name : schema.feature_columns) feat_idx.push_back(column_index(name));
  }
  if (feat_idx.empty()) throw ValidationError("load_dataset: no feature columns");

  std::vector<std::vector<double>> rows;
  std::vector<std::string> raw_labels;
  int dropped = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ValidationError("load_dataset: row " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(header.size()));
    }
    bool missing = is_missing(cells[label_idx]);
    std::vector<double> feats(feat_idx.size());
    for (std::size_t j = 0; j < feat_idx.size() && !missing; ++j) {
      const std::string& cell = cells[feat_idx[j]];
      if (is_missing(cell)) {
        missing = true;
      } else if (!parse_double(cell, &feats[j])) {
        throw ValidationError("load_dataset: bad numeric cell '" + cell + "' at row " +
                              std::to_string(line_no));
      }
    }
    if (missing) {
      ++dropped;
      continue;
    }
    rows.push_back(std::move(feats));
    raw_labels.push_back(cells[label_idx]);
  }

  // Resolve labels.
  std::vector<std::string> mapping = schema.label_values;
  if (schema.task == Task::binary) {
    if (mapping.empty()) {
      std::set<std::string> distinct(raw_labels.begin(), raw_labels.end());
      if (distinct.size() != 2) {
        throw ValidationError("load_dataset: expected exactly 2 label values, found " +
                              std::to_string(distinct.size()));
      }
      mapping.assign(distinct.begin(), distinct.end());
    } else if (mapping.size() != 2) {
      throw ValidationError("load_dataset: label_values must list exactly 2 values");
    }
  }

  std::vector<int> labels;
  std::vector<int> keep;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (schema.task == Task::binary) {
      if (raw_labels[r] == mapping[0]) {
        labels.push_back(-1);
        keep.push_back(static_cast<int>(r));
      } else if (raw_labels[r] == mapping[1]) {
        labels.push_back(+1);
        keep.push_back(static_cast<int>(r));
      } else if (!schema.label_values.empty()) {
        continue;  // pairwise restriction: other classes excluded
      } else {
        throw ValidationError("load_dataset: unexpected label '" + raw_labels[r] + "'");
      }
    } else {
      double v = 0.0;
      if (!parse_double(raw_labels[r], &v) || v < 0.0 || v != std::floor(v)) {
        throw ValidationError("load_dataset: count label '" + raw_labels[r] +
                              "' is not a nonnegative integer");
      }
      labels.push_back(static_cast<int>(v));
      keep.push_back(static_cast<int>(r));
    }
  }
  if (keep.empty()) throw ValidationError("load_dataset: no usable rows in " + path);

  Dataset out;
  out.name = path;
  out.task = schema.task;
  out.x.resize(keep.size(), feat_idx.size());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    for (std::size_t j = 0; j < feat_idx.size(); ++j) out.x(r, j) = rows[keep[r]][j];
  }
  out.y = std::move(labels);
  out.provenance.source_path = path;
  out.provenance.rows_dropped = dropped;
  if (dropped > 0) {
    out.provenance.preprocessing =
        "dropped " + std::to_string(dropped) + " rows with missing values";
  }
  out.validate();
  return out;
}

std::vector<FoldSplit> make_folds(int n, std::uint64_t seed, int k) {
  if (k < 2) throw ValidationError("make_folds: k must be >= 2");
  if (k > n) throw ValidationError("make_folds: k must be <= n");
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  detail::shuffle_indices(perm, seed);

  std::vector<FoldSplit> folds(k);
  const int base = n / k;
  const int extra = n % k;
  int cursor = 0;
  std::vector<std::pair<int, int>> ranges(k);
  for (int j = 0; j < k; ++j) {
    const int size = base + (j < extra ? 1 : 0);
    ranges[j] = {cursor, cursor + size};
    cursor += size;
  }
  for (int j = 0; j < k; ++j) {
    for (int t = 0; t < n; ++t) {
      if (t >= ranges[j].first && t < ranges[j].second) {
        folds[j].test_idx.push_back(perm[t]);
      } else {
        folds[j].train_idx.push_back(perm[t]);
      }
    }
  }
  return folds;
}

Standardization fit_standardizer(const Eigen::MatrixXd& x_train) {
  Standardization s;
  s.mean = x_train.colwise().mean();
  s.scale.resize(x_train.cols());
  for (Eigen::Index j = 0; j < x_train.cols(); ++j) {
    const double var =
        (x_train.col(j).array() - s.mean[j]).square().sum() / x_train.rows();
    const double sd = std::sqrt(var);
    s.scale[j] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

Eigen::MatrixXd apply_standardizer(const Standardization& s, const Eigen::MatrixXd& x) {
  if (x.cols() != s.mean.size()) {
    throw ValidationError("apply_standardizer: dimension mismatch");
  }
  return (x.rowwise() - s.mean.transpose()).array().rowwise() /
         s.scale.transpose().array();
}

std::vector<double> load_event_times(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("load_event_times: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("load_event_times: empty file");
  std::vector<double> events;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    double t = 0.0;
    if (cells.empty() || !parse_double(cells[0], &t)) {
      throw ValidationError("load_event_times: bad value at line " +
                            std::to_string(line_no));
    }
    events.push_back(t);
  }
  if (events.empty()) throw ValidationError("load_event_times: no events");
  std::sort(events.begin(), events.end());
  return events;
}

namespace {

Dataset bin_yearly(const std::vector<double>& events, int year_lo, int year_hi,
                   const std::string& name) {
  const int n_years = year_hi - year_lo + 1;
  std::vector<int> counts(n_years, 0);
  for (double t : events) {
    const int year = static_cast<int>(std::floor(t));
    if (year >= year_lo && year <= year_hi) ++counts[year - year_lo];
  }
  Dataset out;
  out.name = name;
  out.task = Task::count;
  out.x.resize(n_years, 1);
  out.y.resize(n_years);
  for (int i = 0; i < n_years; ++i) {
    out.x(i, 0) = year_lo + i + 0.5;  // year midpoint
    out.y[i] = counts[i];
  }
  return out;
}

}  // namespace

CoalSplit prepare_coal_mining(const std::vector<double>& event_times, std::uint64_t seed) {
  if (event_times.empty()) throw ValidationError("prepare_coal_mining: no events");
  for (double t : event_times) {
    if (!std::isfinite(t)) throw ValidationError("prepare_coal_mining: non-finite event");
  }
  const int year_lo = static_cast<int>(std::floor(*std::min_element(
      event_times.begin(), event_times.end())));
  const int year_hi = static_cast<int>(std::floor(*std::max_element(
      event_times.begin(), event_times.end())));

  CoalSplit out;
  std::uint64_t use_seed = seed;
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::uint64_t state = use_seed * 0x9e3779b97f4a7c15ULL + 0x6a09e667f3bcc909ULL;
    std::vector<double> train_events, test_events;
    for (double t : event_times) {
      if (detail::uniform01(state) < 0.5) {
        train_events.push_back(t);
      } else {
        test_events.push_back(t);
      }
    }
    if (train_events.empty() || test_events.empty()) {
      out.retried = true;
      use_seed = use_seed * 6364136223846793005ULL + 1442695040888963407ULL;
      continue;
    }
    out.train = bin_yearly(train_events, year_lo, year_hi, "coal_train");
    out.test = bin_yearly(test_events, year_lo, year_hi, "coal_test");
    out.seed_used = use_seed;
    return out;
  }
  throw NumericalError("prepare_coal_mining: could not produce a non-degenerate split");
}

}  // namespace qp
