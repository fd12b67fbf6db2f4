#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mtseg/errors.hpp"
#include "mtseg/feature_map.hpp"
#include "mtseg/model.hpp"

namespace mtseg {

/// Per-class true-positive / false-positive / false-negative pixel counts for
/// one task, aggregated over an evaluation set. Mergeable across images.
struct ConfusionCounts {
  TaskId task = TaskId::element;
  int class_count = 0;
  std::vector<long long> tp, fp, fn;
  long long total_pixels = 0;

  void merge(const ConfusionCounts& other) {
    if (other.class_count != class_count || other.task != task) {
      throw ShapeError("ConfusionCounts::merge: incompatible counts");
    }
    for (int j = 0; j < class_count; ++j) {
      tp[j] += other.tp[j];
      fp[j] += other.fp[j];
      fn[j] += other.fn[j];
    }
    total_pixels += other.total_pixels;
  }
};

inline ConfusionCounts confusion_counts(const ClassMask& pred, const ClassMask& truth,
                                        const TaskSpec& task) {
  if (!pred.same_shape(truth)) throw ShapeError("confusion_counts: mask shapes differ");
  ConfusionCounts c;
  c.task = task.id;
  c.class_count = task.class_count();
  c.tp.assign(c.class_count, 0);
  c.fp.assign(c.class_count, 0);
  c.fn.assign(c.class_count, 0);
  for (int y = 0; y < pred.height; ++y) {
    for (int x = 0; x < pred.width; ++x) {
      const int t = truth.at(y, x);
      const int p = pred.at(y, x);
      if (t >= c.class_count || p >= c.class_count) {
        throw DataError("confusion_counts: class id out of range at pixel (" +
                        std::to_string(y) + "," + std::to_string(x) + ") for task " +
                        task_name(task.id));
      }
      if (t == p) {
        ++c.tp[t];
      } else {
        ++c.fn[t];
        ++c.fp[p];
      }
    }
  }
  c.total_pixels = static_cast<long long>(pred.height) * pred.width;
  return c;
}

/// Class-level ratios; a metric is undefined when its denominator is zero
/// (class absent from truth, prediction, or both) and is then excluded from
/// the task-level means.
struct ClassMetrics {
  double iou = 0.0, precision = 0.0, recall = 0.0;
  bool iou_defined = false, precision_defined = false, recall_defined = false;
};

inline ClassMetrics class_metrics(const ConfusionCounts& c, int j) {
  if (j < 0 || j >= c.class_count) throw IndexError("class_metrics: class index out of range");
  ClassMetrics m;
  const long long tp = c.tp[j], fp = c.fp[j], fn = c.fn[j];
  if (tp + fp + fn > 0) {
    m.iou_defined = true;
    m.iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
  }
  if (tp + fp > 0) {
    m.precision_defined = true;
    m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  if (tp + fn > 0) {
    m.recall_defined = true;
    m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  return m;
}

struct TaskMetrics {
  double miou = 0.0, macc = 0.0, pacc = 0.0;
};

inline TaskMetrics task_metrics(const ConfusionCounts& c, const TaskSpec& task) {
  if (task.class_count() != c.class_count) {
    throw ShapeError("task_metrics: counts do not match task spec");
  }
  double iou_sum = 0.0, rec_sum = 0.0;
  long long tp_sum = 0;
  int iou_n = 0, rec_n = 0;
  for (int j = 0; j < c.class_count; ++j) {
    const ClassMetrics m = class_metrics(c, j);
    if (m.iou_defined) {
      iou_sum += m.iou;
      ++iou_n;
    }
    if (m.recall_defined) {
      rec_sum += m.recall;
      ++rec_n;
    }
    tp_sum += c.tp[j];
  }
  if (iou_n == 0 || rec_n == 0 || c.total_pixels == 0) {
    throw DataError("task_metrics: no defined classes for task " +
                    std::string(task_name(task.id)));
  }
  TaskMetrics t;
  t.miou = iou_sum / iou_n;
  t.macc = rec_sum / rec_n;
  t.pacc = static_cast<double>(tp_sum) / static_cast<double>(c.total_pixels);
  return t;
}

struct TaskReport {
  TaskId id = TaskId::element;
  std::vector<std::string> class_names;
  std::vector<ClassMetrics> per_class;
  TaskMetrics metrics;
};

struct MetricsReport {
  std::vector<TaskReport> tasks;

  const TaskReport* find(TaskId id) const {
    for (const auto& t : tasks) {
      if (t.id == id) return &t;
    }
    return nullptr;
  }
};

inline MetricsReport build_report(const std::vector<ConfusionCounts>& counts,
                                  const std::vector<TaskSpec>& specs) {
  if (counts.size() != specs.size()) throw ShapeError("build_report: counts/specs mismatch");
  MetricsReport report;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    TaskReport t;
    t.id = specs[i].id;
    t.class_names = specs[i].classes;
    for (int j = 0; j < counts[i].class_count; ++j) t.per_class.push_back(class_metrics(counts[i], j));
    t.metrics = task_metrics(counts[i], specs[i]);
    report.tasks.push_back(std::move(t));
  }
  return report;
}

/// Mean percent increase of the six task-level metrics over a baseline.
/// Increment order: element mIoU, mAcc, pAcc, then defect mIoU, mAcc, pAcc.
struct DeltaTable {
  double delta = 0.0;
  std::array<double, 6> increments = {0, 0, 0, 0, 0, 0};
};

inline DeltaTable model_delta(const MetricsReport& mtl, const MetricsReport& baseline) {
  const TaskReport* me = mtl.find(TaskId::element);
  const TaskReport* md = mtl.find(TaskId::defect);
  const TaskReport* be = baseline.find(TaskId::element);
  const TaskReport* bd = baseline.find(TaskId::defect);
  if (me == nullptr || md == nullptr || be == nullptr || bd == nullptr) {
    throw ShapeError("model_delta: both reports need element and defect task metrics");
  }
  const std::array<double, 6> m = {me->metrics.miou, me->metrics.macc, me->metrics.pacc,
                                   md->metrics.miou, md->metrics.macc, md->metrics.pacc};
  const std::array<double, 6> b = {be->metrics.miou, be->metrics.macc, be->metrics.pacc,
                                   bd->metrics.miou, bd->metrics.macc, bd->metrics.pacc};
  DeltaTable table;
  double sum = 0.0;
  for (int i = 0; i < 6; ++i) {
    if (b[i] == 0.0) throw NumericError("model_delta: zero baseline metric");
    table.increments[i] = 100.0 * (m[i] - b[i]) / b[i];
    sum += table.increments[i];
  }
  table.delta = sum / 6.0;
  return table;
}

// ---------------------------------------------------------------------------
// Text emission

/// Flat key/value view of a report; keys are stable for round-tripping.
inline std::vector<std::pair<std::string, double>> metrics_to_kv(const MetricsReport& report) {
  std::vector<std::pair<std::string, double>> kv;
  for (const auto& t : report.tasks) {
    const std::string base = task_name(t.id);
    for (std::size_t j = 0; j < t.per_class.size(); ++j) {
      const std::string cls = base + ".class." + t.class_names[j];
      const auto& m = t.per_class[j];
      if (m.iou_defined) kv.emplace_back(cls + ".iou", m.iou);
      if (m.precision_defined) kv.emplace_back(cls + ".precision", m.precision);
      if (m.recall_defined) kv.emplace_back(cls + ".recall", m.recall);
    }
    kv.emplace_back(base + ".miou", t.metrics.miou);
    kv.emplace_back(base + ".macc", t.metrics.macc);
    kv.emplace_back(base + ".pacc", t.metrics.pacc);
  }
  return kv;
}

inline void write_metrics_tsv(const MetricsReport& report, std::ostream& out) {
  out << "# metric\tvalue\n";
  char buf[64];
  for (const auto& [key, value] : metrics_to_kv(report)) {
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    out << key << "\t" << buf << "\n";
  }
}

inline std::vector<std::pair<std::string, double>> parse_metrics_tsv(std::istream& in) {
  std::vector<std::pair<std::string, double>> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("malformed metrics line: " + line);
    kv.emplace_back(line.substr(0, tab), std::stod(line.substr(tab + 1)));
  }
  return kv;
}

/// One row of the method-comparison table.
struct MethodRow {
  std::string name;
  std::optional<TaskMetrics> element;
  std::optional<TaskMetrics> defect;
  std::optional<double> delta;
};

/// Aligned table with per-task mIoU/mAcc/pAcc columns (percent, 2 decimals)
/// and a Delta column.
inline std::string format_method_table(const std::vector<MethodRow>& rows) {
  std::ostringstream out;
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6.2f", 100.0 * v);
    return std::string(buf);
  };
  out << std::left << std::setw(24) << "Method"
      << " | Element mIoU   mAcc   pAcc | Defect mIoU   mAcc   pAcc |  Delta\n";
  out << std::string(24, '-') << "-+----------------------------+---------------------------+-------\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(24) << r.name << " | ";
    if (r.element) {
      out << "       " << pct(r.element->miou) << " " << pct(r.element->macc) << " "
          << pct(r.element->pacc);
    } else {
      out << "            -      -      -";
    }
    out << " | ";
    if (r.defect) {
      out << "      " << pct(r.defect->miou) << " " << pct(r.defect->macc) << " "
          << pct(r.defect->pacc);
    } else {
      out << "           -      -      -";
    }
    out << " | ";
    if (r.delta) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%+6.2f", *r.delta);
      out << buf;
    } else {
      out << "     -";
    }
    out << "\n";
  }
  return out.str();
}

/// Per-class IoU rows for a set of methods, element classes then defect.
inline std::string format_class_iou_table(const std::vector<std::string>& method_names,
                                          const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << std::left << std::setw(22) << "Class";
  for (const auto& name : method_names) out << " | " << std::setw(12) << name;
  out << "\n";
  auto emit_task = [&](TaskId id, const std::string& header) {
    out << header << "\n";
    std::vector<std::string> classes;
    for (const auto& r : reports) {
      const TaskReport* t = r.find(id);
      if (t != nullptr) classes = t->class_names;
    }
    for (std::size_t j = 0; j < classes.size(); ++j) {
      out << "  " << std::left << std::setw(20) << classes[j];
      for (const auto& r : reports) {
        const TaskReport* t = r.find(id);
        char buf[32] = "           -";
        if (t != nullptr && j < t->per_class.size() && t->per_class[j].iou_defined) {
          std::snprintf(buf, sizeof(buf), "%12.2f", 100.0 * t->per_class[j].iou);
        }
        out << " | " << buf;
      }
      out << "\n";
    }
  };
  emit_task(TaskId::element, "Element");
  emit_task(TaskId::defect, "Defect");
  return out.str();
}

}  // namespace mtseg
