#include "vad/eval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "vad/common.hpp"

namespace vad {

ApResult average_precision(std::span<const double> scores, std::span<const int> truths) {
  if (scores.size() != truths.size())
    throw DimensionError("average_precision: scores and truths lengths differ");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  ApResult res;
  double precision_sum = 0.0;
  std::size_t seen_positives = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (truths[order[rank]] != 0) {
      ++seen_positives;
      precision_sum +=
          static_cast<double>(seen_positives) / static_cast<double>(rank + 1);
    }
  }
  res.positives = seen_positives;
  if (seen_positives > 0) {
    res.defined = true;
    res.ap = precision_sum / static_cast<double>(seen_positives);
  }
  return res;
}

EvalReport evaluate(const EvalInputs& in, const std::vector<std::string>& categories) {
  if (in.n_classes == 0) throw ParameterError("evaluation needs at least one class");
  if (categories.size() != in.n_classes)
    throw ParameterError("need one category name per class");
  if (in.scores.size() != in.truths.size())
    throw DimensionError("instance score and truth counts differ");

  const std::size_t n = in.scores.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (in.scores[i].size() != in.n_classes)
      throw DimensionError("instance score vector has the wrong class count");
    for (int id : in.truths[i])
      if (id < 0 || std::size_t(id) >= in.n_classes)
        throw ParameterError("truth label id out of range");
  }

  EvalReport report;
  report.n_instances = n;
  report.class_category = categories;

  double ap_sum = 0.0;
  std::size_t defined = 0;
  std::map<std::string, std::pair<double, std::size_t>> cat_acc;
  for (std::size_t cls = 0; cls < in.n_classes; ++cls) {
    std::vector<double> scores(n);
    std::vector<int> truths(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = in.scores[i][cls];
      for (int id : in.truths[i])
        if (std::size_t(id) == cls) truths[i] = 1;
    }
    ApResult r = average_precision(scores, truths);
    report.per_class.push_back(r);
    if (r.defined) {
      ap_sum += r.ap;
      ++defined;
      auto& acc = cat_acc[categories[cls]];
      acc.first += r.ap;
      ++acc.second;
    } else {
      ++report.skipped_classes;
    }
  }
  if (defined > 0) report.map = ap_sum / static_cast<double>(defined);
  for (const auto& [cat, acc] : cat_acc)
    report.per_category[cat] = acc.first / static_cast<double>(acc.second);
  return report;
}

void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t i = 0; i < report.per_class.size(); ++i) {
    const ApResult& r = report.per_class[i];
    classes.push_back({{"id", i},
                       {"category", report.class_category[i]},
                       {"ap", r.ap},
                       {"positives", r.positives},
                       {"defined", r.defined}});
  }
  nlohmann::json j{{"map", report.map},
                   {"instances", report.n_instances},
                   {"skipped_classes", report.skipped_classes},
                   {"classes", classes},
                   {"categories", report.per_category}};
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write report to " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace vad
