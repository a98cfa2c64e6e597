#include "cprel/metrics.hpp"

#include <json.hpp>

#include "cprel/error.hpp"

namespace cprel {

namespace {

double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

// Pooled F1 over the given subset, excluding the negative class.
double micro_f1_subset(const std::vector<int>& gold, const std::vector<int>& predicted,
                       const std::vector<bool>& in_subset, int negative_id) {
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    if (!in_subset[k]) continue;
    const bool correct = gold[k] == predicted[k];
    if (predicted[k] != negative_id && !correct) ++fp;
    if (gold[k] != negative_id) {
      if (correct) {
        ++tp;
      } else {
        ++fn;
      }
    }
  }
  const double p = safe_div(static_cast<double>(tp), static_cast<double>(tp + fp));
  const double r = safe_div(static_cast<double>(tp), static_cast<double>(tp + fn));
  return f1_of(p, r);
}

}  // namespace

Metrics compute_metrics(const std::vector<int>& gold, const std::vector<int>& predicted,
                        const std::vector<int>& lengths, const LabelVocab& labels,
                        const std::string& negative_label) {
  if (gold.size() != predicted.size() || gold.size() != lengths.size()) {
    throw ConfigError("compute_metrics: input lengths differ");
  }
  Metrics m;
  m.total = static_cast<int>(gold.size());

  long correct = 0;
  for (std::size_t k = 0; k < gold.size(); ++k)
    if (gold[k] == predicted[k]) ++correct;
  m.accuracy = safe_div(static_cast<double>(correct), static_cast<double>(m.total));

  const int negative_id = labels.index_of(negative_label);

  for (int c = 0; c < labels.size(); ++c) {
    long tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t k = 0; k < gold.size(); ++k) {
      if (gold[k] == c) ++support;
      if (predicted[k] == c && gold[k] == c) ++tp;
      if (predicted[k] == c && gold[k] != c) ++fp;
      if (predicted[k] != c && gold[k] == c) ++fn;
    }
    ClassMetrics cm;
    cm.label = labels.name(c);
    cm.support = static_cast<int>(support);
    cm.precision = safe_div(static_cast<double>(tp), static_cast<double>(tp + fp));
    cm.recall = safe_div(static_cast<double>(tp), static_cast<double>(tp + fn));
    cm.f1 = f1_of(cm.precision, cm.recall);
    m.per_class.push_back(std::move(cm));
  }

  std::vector<bool> all(gold.size(), true);
  m.micro_f1 = micro_f1_subset(gold, predicted, all, negative_id);

  const struct {
    const char* range;
    int lo, hi;  // (lo, hi]
  } bucket_defs[] = {{"(0,25]", 0, 25}, {"(25,50]", 25, 50}, {">50", 50, 1 << 30}};
  for (const auto& def : bucket_defs) {
    std::vector<bool> in(gold.size(), false);
    int count = 0;
    for (std::size_t k = 0; k < gold.size(); ++k) {
      if (lengths[k] > def.lo && lengths[k] <= def.hi) {
        in[k] = true;
        ++count;
      }
    }
    m.buckets.push_back({def.range, count, micro_f1_subset(gold, predicted, in, negative_id)});
  }
  return m;
}

std::string metrics_to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["total"] = m.total;
  j["accuracy"] = m.accuracy;
  j["micro_f1"] = m.micro_f1;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
  for (const ClassMetrics& c : m.per_class) {
    nlohmann::ordered_json jc;
    jc["label"] = c.label;
    jc["support"] = c.support;
    jc["precision"] = c.precision;
    jc["recall"] = c.recall;
    jc["f1"] = c.f1;
    per_class.push_back(std::move(jc));
  }
  j["per_class"] = std::move(per_class);
  nlohmann::ordered_json buckets = nlohmann::ordered_json::array();
  for (const BucketMetrics& b : m.buckets) {
    nlohmann::ordered_json jb;
    jb["range"] = b.range;
    jb["count"] = b.count;
    jb["f1"] = b.f1;
    buckets.push_back(std::move(jb));
  }
  j["length_buckets"] = std::move(buckets);
  return j.dump(2);
}

}  // namespace cprel
