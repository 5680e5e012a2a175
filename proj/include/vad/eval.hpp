#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace vad {

// Average precision of one class over a ranked instance list: instances are
// ordered by score, descending, ties keeping input order; AP is the mean of
// precision-at-rank over the positive instances. A class with no positives
// has no defined AP and is excluded from aggregation.
struct ApResult {
  double ap = 0.0;
  std::size_t positives = 0;
  bool defined = false;
};

ApResult average_precision(std::span<const double> scores, std::span<const int> truths);

// Per-instance inputs for a multi-label evaluation. scores[i] holds one score
// per class; truths[i] lists the class ids that are actually present.
struct EvalInputs {
  std::size_t n_classes = 0;
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<int>> truths;
};

struct EvalReport {
  double map = 0.0;  // mean AP over classes with positives
  std::vector<ApResult> per_class;
  std::vector<std::string> class_category;
  std::map<std::string, double> per_category;  // category -> mean AP, same exclusion
  std::size_t n_instances = 0;
  std::size_t skipped_classes = 0;  // classes with no positives
};

// categories gives one category name per class for the breakdown.
EvalReport evaluate(const EvalInputs& in, const std::vector<std::string>& categories);

void write_report_json(const EvalReport& report, const std::filesystem::path& path);

}  // namespace vad
