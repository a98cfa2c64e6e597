#pragma once

#include <string>
#include <vector>

#include "cprel/corpus.hpp"

namespace cprel {

struct ClassMetrics {
  std::string label;
  int support = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct BucketMetrics {
  std::string range;
  int count = 0;
  double f1 = 0.0;
};

struct Metrics {
  int total = 0;
  double accuracy = 0.0;
  double micro_f1 = 0.0;  // pooled over classes, negative label excluded
  std::vector<ClassMetrics> per_class;
  std::vector<BucketMetrics> buckets;  // token-count buckets (0,25], (25,50], >50
};

// gold/predicted are label indices; lengths are instance token counts.
Metrics compute_metrics(const std::vector<int>& gold, const std::vector<int>& predicted,
                        const std::vector<int>& lengths, const LabelVocab& labels,
                        const std::string& negative_label);

std::string metrics_to_json(const Metrics& m);

}  // namespace cprel
