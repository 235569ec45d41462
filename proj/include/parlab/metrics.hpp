#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "parlab/tensor.hpp"

namespace parlab {

struct ConfusionCounts {
  int64_t tp = 0, tn = 0, fp = 0, fn = 0;
  int64_t total() const { return tp + tn + fp + fn; }
};

struct MetricsResult {
  double ma_ap = 0;       // mean over attributes of PR-curve area
  double ma_bal = 0;      // mean over attributes of (TPR + TNR)/2
  double acc = 0, prec = 0, recall = 0, f1 = 0;  // pooled
  std::vector<double> per_attr_ap;
  ConfusionCounts pooled;
  int degenerate_attrs = 0;  // attributes with no positives (AP contributes 0)
  bool prec_degenerate = false, recall_degenerate = false;
};

// scores, labels: row-major [S x L]; decisions at `threshold`.
inline MetricsResult compute_metrics(const std::vector<double>& scores,
                                     const std::vector<uint8_t>& labels, int64_t S, int64_t L,
                                     double threshold = 0.5) {
  if (scores.size() != labels.size() || static_cast<int64_t>(scores.size()) != S * L)
    throw ShapeError("compute_metrics: score/label shapes disagree");
  MetricsResult m;
  m.per_attr_ap.assign(static_cast<std::size_t>(L), 0.0);
  double bal_sum = 0;
  std::vector<int64_t> order(static_cast<std::size_t>(S));
  for (int64_t j = 0; j < L; ++j) {
    // per-attribute confusion at the threshold
    ConfusionCounts c;
    for (int64_t s = 0; s < S; ++s) {
      bool y = labels[static_cast<std::size_t>(s * L + j)] != 0;
      bool pred = scores[static_cast<std::size_t>(s * L + j)] >= threshold;
      if (y && pred) ++c.tp;
      else if (y && !pred) ++c.fn;
      else if (!y && pred) ++c.fp;
      else ++c.tn;
    }
    m.pooled.tp += c.tp;
    m.pooled.tn += c.tn;
    m.pooled.fp += c.fp;
    m.pooled.fn += c.fn;
    double tpr = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
    double tnr = (c.tn + c.fp) > 0 ? static_cast<double>(c.tn) / (c.tn + c.fp) : 0.0;
    bal_sum += 0.5 * (tpr + tnr);

    // average precision by step-wise PR integration: walk scores in
    // descending order (ties broken by sample index) and average the
    // precision observed at each positive.
    int64_t npos = c.tp + c.fn;
    if (npos == 0) {
      ++m.degenerate_attrs;
      continue;
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
      return scores[static_cast<std::size_t>(a * L + j)] >
             scores[static_cast<std::size_t>(b * L + j)];
    });
    double ap = 0;
    int64_t hits = 0;
    for (int64_t k = 0; k < S; ++k) {
      if (labels[static_cast<std::size_t>(order[static_cast<std::size_t>(k)] * L + j)] != 0) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(k + 1);
      }
    }
    m.per_attr_ap[static_cast<std::size_t>(j)] = ap / static_cast<double>(npos);
  }
  double ap_sum = 0;
  for (double v : m.per_attr_ap) ap_sum += v;
  m.ma_ap = ap_sum / static_cast<double>(L);
  m.ma_bal = bal_sum / static_cast<double>(L);

  const auto& p = m.pooled;
  m.acc = p.total() > 0 ? static_cast<double>(p.tp + p.tn) / static_cast<double>(p.total()) : 0.0;
  if (p.tp + p.fp == 0) {
    m.prec = 0.0;
    m.prec_degenerate = true;
  } else {
    m.prec = static_cast<double>(p.tp) / static_cast<double>(p.tp + p.fp);
  }
  if (p.tp + p.fn == 0) {
    m.recall = 0.0;
    m.recall_degenerate = true;
  } else {
    m.recall = static_cast<double>(p.tp) / static_cast<double>(p.tp + p.fn);
  }
  m.f1 = (m.prec + m.recall) > 0 ? 2.0 * m.prec * m.recall / (m.prec + m.recall) : 0.0;
  return m;
}

// Single-line machine-readable record.
inline std::string metrics_line(const MetricsResult& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "mA_ap=%.6f mA_bal=%.6f acc=%.6f prec=%.6f recall=%.6f f1=%.6f", m.ma_ap,
                m.ma_bal, m.acc, m.prec, m.recall, m.f1);
  return buf;
}

inline std::string metrics_table(const MetricsResult& m,
                                 const std::vector<std::string>& attr_names) {
  std::ostringstream os;
  os << "metric      value\n";
  os << "mA_ap       " << m.ma_ap << "\n";
  os << "mA_bal      " << m.ma_bal << "\n";
  os << "accuracy    " << m.acc << "\n";
  os << "precision   " << m.prec << (m.prec_degenerate ? "  (degenerate)" : "") << "\n";
  os << "recall      " << m.recall << (m.recall_degenerate ? "  (degenerate)" : "") << "\n";
  os << "f1          " << m.f1 << "\n";
  os << "per-attribute AP:\n";
  for (std::size_t j = 0; j < m.per_attr_ap.size(); ++j) {
    std::string name = j < attr_names.size() ? attr_names[j] : ("attr" + std::to_string(j));
    os << "  " << name << "  " << m.per_attr_ap[j] << "\n";
  }
  if (m.degenerate_attrs > 0)
    os << "note: " << m.degenerate_attrs << " attribute(s) with no positives\n";
  return os.str();
}

}  // namespace parlab
